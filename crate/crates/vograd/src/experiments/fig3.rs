//! RMSE against `σ` on the quartic for several estimators.
//!
//! Trial `t` draws `x ~ N(0, I)` and one perturbation seed; every estimator
//! and every `σ` reuse both (common random numbers), so differences between
//! curves are not sampling noise in `x`.

use std::io::Write;

use vograd_core::analytics::{analytic, ExpansionOrder, TRIAL_BLOCK};
use vograd_core::estimators::{estimate, sample_batch};
use vograd_core::reduce::pairwise_reduce;
use vograd_core::rng::{derive, domain};
use vograd_core::{EstimatorKind, Executor, Objective, Serial};

use super::{normal_point, Poly};
use crate::config::{samples_for, ExperimentConfig};
use crate::output::{csv_writer, num};

#[derive(Debug, Clone, PartialEq)]
pub struct Fig3Row {
    pub estimator: EstimatorKind,
    pub sigma: f64,
    pub samples: usize,
    pub trials: usize,
    pub rmse_empirical: f64,
    pub rmse_analytic: f64,
    pub analytic_order: ExpansionOrder,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig3Output {
    pub rows: Vec<Fig3Row>,
}

impl Fig3Output {
    pub fn curve(&self, kind: EstimatorKind) -> Vec<&Fig3Row> {
        self.rows.iter().filter(|r| r.estimator == kind).collect()
    }

    pub fn write_csv<W: Write>(&self, cfg: &ExperimentConfig, w: W) -> anyhow::Result<()> {
        let header = [
            "estimator",
            "sigma",
            "samples",
            "trials",
            "rmse_empirical",
            "rmse_analytic",
            "analytic_order",
        ]
        .map(String::from);
        let mut out = csv_writer(w, cfg, &header)?;
        for r in &self.rows {
            out.write_record([
                r.estimator.name().to_string(),
                num(r.sigma),
                r.samples.to_string(),
                r.trials.to_string(),
                num(r.rmse_empirical),
                num(r.rmse_analytic),
                order_name(r.analytic_order).to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn order_name(o: ExpansionOrder) -> &'static str {
    match o {
        ExpansionOrder::Exact => "exact",
        ExpansionOrder::SigmaSquared => "sigma2",
    }
}

pub fn run_fig3_sweep<E: Executor>(cfg: &ExperimentConfig, exec: &E) -> anyhow::Result<Fig3Output> {
    let obj = Poly::from_config(cfg)?;
    let d = obj.dim();
    let kinds: Vec<EstimatorKind> = cfg.sweep.estimators.iter().map(|e| e.0).collect();
    let sigmas = &cfg.sweep.sigmas;
    let trials = cfg.sweep.trials;
    let cells = kinds.len() * sigmas.len();
    let samples: Vec<usize> = kinds
        .iter()
        .map(|k| samples_for(*k, cfg.sweep.samples, cfg.budget_mode))
        .collect();

    let blocks = trials.div_ceil(TRIAL_BLOCK);
    let parts = exec.map(blocks, |b| -> anyhow::Result<Vec<[f64; 2]>> {
        let mut acc = vec![[0.0; 2]; cells];
        for t in b * TRIAL_BLOCK..((b + 1) * TRIAL_BLOCK).min(trials) {
            let x = normal_point(d, cfg.master_seed, t as u64);
            let g = obj.grad(&x).expect("polynomial objectives have gradients");
            let seed = derive(cfg.master_seed, domain::TRIAL, t as u64);
            for (e, kind) in kinds.iter().enumerate() {
                for (s, &sigma) in sigmas.iter().enumerate() {
                    let batch = sample_batch(d, samples[e], sigma, kind.distribution(), seed)?;
                    let est = estimate(*kind, &obj, &x, &batch, None, &Serial)?;
                    let sq: f64 = est.g_hat.iter().zip(&g).map(|(a, b)| (a - b) * (a - b)).sum();
                    let predicted = analytic(*kind, &obj, &x, sigma, samples[e])?;
                    let cell = &mut acc[e * sigmas.len() + s];
                    cell[0] += sq / d as f64;
                    cell[1] += predicted.mean_squared_error();
                }
            }
        }
        Ok(acc)
    });
    let parts = parts.into_iter().collect::<anyhow::Result<Vec<_>>>()?;
    let total = pairwise_reduce(parts, |mut a, b| {
        for (x, y) in a.iter_mut().zip(b) {
            x[0] += y[0];
            x[1] += y[1];
        }
        a
    })
    .expect("at least one block");

    let mut rows = Vec::with_capacity(cells);
    for (e, kind) in kinds.iter().enumerate() {
        let order = analytic(*kind, &obj, &normal_point(d, cfg.master_seed, 0), sigmas[0], samples[e])?.order;
        for (s, &sigma) in sigmas.iter().enumerate() {
            let cell = total[e * sigmas.len() + s];
            rows.push(Fig3Row {
                estimator: *kind,
                sigma,
                samples: samples[e],
                trials,
                rmse_empirical: (cell[0] / trials as f64).sqrt(),
                rmse_analytic: (cell[1] / trials as f64).sqrt(),
                analytic_order: order,
            });
        }
    }
    Ok(Fig3Output { rows })
}
