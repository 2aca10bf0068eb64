//! Predicted against measured estimator moments at one point.

use std::io::Write;

use vograd_core::analytics::{analytic, measure_empirical, AnalyticMoments, EmpiricalMoments};
use vograd_core::estimators::{estimate, sample_batch, BaselineState, GradientEstimate};
use vograd_core::rng::{derive, domain};
use vograd_core::{EstimatorKind, Executor, Objective, Serial};

use super::fig3::order_name;
use super::{evaluation_point, Poly};
use crate::config::{samples_for, ExperimentConfig};
use crate::output::{csv_writer, num};

/// Coordinates listed individually; the table always adds an `all` row.
pub const MAX_COORDINATES: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct MomentsRow {
    pub estimator: EstimatorKind,
    pub sigma: f64,
    pub samples: usize,
    pub analytic: AnalyticMoments,
    pub empirical: EmpiricalMoments,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentsOutput {
    pub objective: &'static str,
    pub x: Vec<f64>,
    pub rows: Vec<MomentsRow>,
}

impl MomentsOutput {
    pub fn row(&self, kind: EstimatorKind, sigma: f64) -> Option<&MomentsRow> {
        self.rows.iter().find(|r| r.estimator == kind && r.sigma == sigma)
    }

    /// One row per listed coordinate plus an `all` row holding RMS bias
    /// and mean variance.
    pub fn write_csv<W: Write>(&self, cfg: &ExperimentConfig, w: W) -> anyhow::Result<()> {
        let header = [
            "objective",
            "estimator",
            "sigma",
            "samples",
            "trials",
            "coordinate",
            "analytic_bias",
            "empirical_bias",
            "bias_std_error",
            "analytic_variance",
            "empirical_variance",
            "analytic_order",
            "diagonal_hessian_assumed",
            "omitted",
        ]
        .map(String::from);
        let mut out = csv_writer(w, cfg, &header)?;
        for r in &self.rows {
            let (a, m) = (&r.analytic, &r.empirical);
            let bias = m.bias.clone().unwrap_or_else(|| vec![f64::NAN; a.bias.len()]);
            let common = |coord: String, ab: f64, eb: f64, se: f64, av: f64, ev: f64| {
                vec![
                    self.objective.to_string(),
                    r.estimator.name().to_string(),
                    num(r.sigma),
                    r.samples.to_string(),
                    m.trials.to_string(),
                    coord,
                    num(ab),
                    num(eb),
                    num(se),
                    num(av),
                    num(ev),
                    order_name(a.order).to_string(),
                    a.diagonal_hessian_assumed.to_string(),
                    a.omitted.unwrap_or("").to_string(),
                ]
            };
            for i in 0..a.bias.len().min(MAX_COORDINATES) {
                out.write_record(common(i.to_string(), a.bias[i], bias[i], m.std_error[i], a.variance[i], m.variance[i]))?;
            }
            let mean_se = m.std_error.iter().map(|s| s * s).sum::<f64>() / m.std_error.len() as f64;
            out.write_record(common(
                "all".into(),
                a.bias_norm(),
                m.bias_norm().unwrap_or(f64::NAN),
                mean_se.sqrt(),
                a.mean_variance(),
                m.mean_variance(),
            ))?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn run_moments_table<E: Executor>(cfg: &ExperimentConfig, exec: &E) -> anyhow::Result<MomentsOutput> {
    let obj = Poly::from_config(cfg)?;
    let x = evaluation_point(cfg);
    let mut rows = Vec::new();
    for e in &cfg.sweep.estimators {
        let kind = e.0;
        let samples = samples_for(kind, cfg.sweep.samples, cfg.budget_mode);
        for &sigma in &cfg.sweep.sigmas {
            rows.push(MomentsRow {
                estimator: kind,
                sigma,
                samples,
                analytic: analytic(kind, &obj, &x, sigma, samples)?,
                empirical: measure_empirical(&obj, &x, kind, sigma, samples, cfg.sweep.trials, cfg.master_seed, exec)?,
            });
        }
    }
    Ok(MomentsOutput {
        objective: obj.name(),
        x,
        rows,
    })
}

/// The first `limit` trials of every estimator and `σ` of the table, as the
/// estimates [`run_moments_table`] averaged.
pub fn dump_estimates(cfg: &ExperimentConfig, limit: usize) -> anyhow::Result<Vec<GradientEstimate>> {
    let obj = Poly::from_config(cfg)?;
    let x = evaluation_point(cfg);
    let baseline = BaselineState::current_value();
    let mut out = Vec::new();
    for e in &cfg.sweep.estimators {
        let samples = samples_for(e.0, cfg.sweep.samples, cfg.budget_mode);
        for &sigma in &cfg.sweep.sigmas {
            for t in 0..limit.min(cfg.sweep.trials) {
                let seed = derive(cfg.master_seed, domain::TRIAL, t as u64);
                let batch = sample_batch(obj.dim(), samples, sigma, e.0.distribution(), seed)?;
                out.push(estimate(e.0, &obj, &x, &batch, Some(&baseline), &Serial)?);
            }
        }
    }
    Ok(out)
}
