//! Training a small ReLU network with zeroth- and forward-mode gradient
//! estimates.
//!
//! Each step draws one minibatch shared by all `S` simulated workers, records
//! the minibatch loss at the current parameters, estimates the gradient on
//! that minibatch and takes one optimizer step. A moving-average baseline is
//! fed the mean of the workers' evaluations, as the distributed replicas do. Runs of a seed share the
//! dataset, initialization, minibatches and perturbation seeds.

use std::io::Write;
use std::sync::Arc;

use vograd_core::distributed::observed_loss;
use vograd_core::estimators::{estimate, sample_batch};
use vograd_core::objectives::{make_mlp, BlobConfig, Dataset, Mlp, MlpSpec};
use vograd_core::rng::{derive, domain};
use vograd_core::{EstimatorKind, Executor, Objective, Serial};

use super::{median, moving_average};
use crate::config::{cost_per_sample, samples_for, ExperimentConfig, NnRun};
use crate::output::{csv_writer, num};

#[derive(Debug, Clone, PartialEq)]
pub struct Fig4Run {
    pub label: String,
    pub estimator: EstimatorKind,
    pub sigma: f64,
    pub seed_index: usize,
    pub samples: usize,
    pub losses: Vec<f64>,
    pub smoothed: Vec<f64>,
    /// Cumulative cost in plain evaluations after each step.
    pub evals: Vec<usize>,
    /// Set when a non-finite loss stopped the run early.
    pub flagged: bool,
}

impl Fig4Run {
    pub fn final_smoothed(&self) -> f64 {
        match self.smoothed.last() {
            Some(v) if !self.flagged => *v,
            _ => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig4Output {
    pub runs: Vec<Fig4Run>,
}

impl Fig4Output {
    /// Median over seeds of the final smoothed loss of each configured run,
    /// as `(label, estimator, sigma, median)`.
    pub fn medians(&self) -> Vec<(String, EstimatorKind, f64, f64)> {
        let mut out: Vec<(String, EstimatorKind, f64, f64)> = Vec::new();
        for r in &self.runs {
            if out.iter().any(|o| o.0 == r.label && o.1 == r.estimator && o.2 == r.sigma) {
                continue;
            }
            let mut finals: Vec<f64> = self
                .runs
                .iter()
                .filter(|o| o.label == r.label && o.estimator == r.estimator && o.sigma == r.sigma)
                .map(Fig4Run::final_smoothed)
                .collect();
            out.push((r.label.clone(), r.estimator, r.sigma, median(&mut finals)));
        }
        out
    }

    pub fn write_csv<W: Write>(&self, cfg: &ExperimentConfig, w: W) -> anyhow::Result<()> {
        let header = [
            "label",
            "estimator",
            "sigma",
            "seed",
            "samples",
            "step",
            "evals",
            "loss",
            "smoothed_loss",
            "flagged",
        ]
        .map(String::from);
        let mut out = csv_writer(w, cfg, &header)?;
        for r in &self.runs {
            for (t, loss) in r.losses.iter().enumerate() {
                out.write_record([
                    r.label.clone(),
                    r.estimator.name().to_string(),
                    num(r.sigma),
                    r.seed_index.to_string(),
                    r.samples.to_string(),
                    t.to_string(),
                    r.evals[t].to_string(),
                    num(*loss),
                    num(r.smoothed[t]),
                    u8::from(r.flagged && t + 1 == r.losses.len()).to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// The network for seed `seed`: dataset and layer widths from `cfg.nn`.
pub fn network(cfg: &ExperimentConfig, seed: u64) -> anyhow::Result<Mlp> {
    let nn = &cfg.nn;
    let data = Dataset::gaussian_blobs(&BlobConfig {
        seed: derive(seed, domain::DATA, 0),
        classes: nn.classes,
        dim: nn.features,
        per_class: nn.per_class,
        separation: nn.separation,
    })?;
    let mut sizes = vec![nn.features];
    sizes.extend(&nn.hidden);
    sizes.push(nn.classes);
    Ok(make_mlp(MlpSpec {
        layer_sizes: sizes,
        dataset: Arc::new(data),
    })?)
}

fn train(cfg: &ExperimentConfig, spec: &NnRun, seed_index: usize) -> anyhow::Result<Fig4Run> {
    let nn = &cfg.nn;
    let seed = derive(cfg.master_seed, domain::TRIAL, seed_index as u64);
    let mlp = network(cfg, seed)?;
    let kind = spec.estimator.0;
    let samples = samples_for(kind, nn.workers, cfg.budget_mode);
    let mut baseline = match kind {
        EstimatorKind::GpBaseline => spec.baseline.state(nn.baseline_window)?,
        _ => None,
    };
    let mut x = mlp.init_params(seed);
    let mut opt = cfg.optimizer.build()?;
    let mut losses = Vec::with_capacity(nn.steps);
    let mut evals = Vec::with_capacity(nn.steps);
    let mut spent = 0;
    let mut flagged = false;
    for t in 0..nn.steps {
        let batch_obj = mlp.sample_batch(nn.minibatch, derive(seed, domain::BATCH, t as u64))?;
        let loss = batch_obj.eval(&x);
        losses.push(loss);
        if !loss.is_finite() {
            evals.push(spent);
            flagged = true;
            break;
        }
        let eps = sample_batch(mlp.dim(), samples, spec.sigma, kind.distribution(), derive(seed, domain::STEP, t as u64))?;
        let est = estimate(kind, &batch_obj, &x, &eps, baseline.as_ref(), &Serial)?;
        spent += samples * cost_per_sample(kind) + (est.f_evals - samples * kind.evals_per_sample());
        evals.push(spent);
        if let (Some(b), Some(l)) = (baseline.as_mut(), observed_loss(kind, &est.evals)) {
            b.record(l);
        }
        opt.step(&mut x, &est.g_hat)?;
    }
    let smoothed = moving_average(&losses, nn.smoothing_window);
    Ok(Fig4Run {
        label: spec.label.clone(),
        estimator: kind,
        sigma: spec.sigma,
        seed_index,
        samples,
        losses,
        smoothed,
        evals,
        flagged,
    })
}

pub fn run_fig4_nn<E: Executor>(cfg: &ExperimentConfig, exec: &E) -> anyhow::Result<Fig4Output> {
    let nn = &cfg.nn;
    let jobs: Vec<(usize, usize)> = (0..nn.runs.len())
        .flat_map(|r| (0..nn.seeds).map(move |s| (r, s)))
        .collect();
    let runs = exec.map(jobs.len(), |j| train(cfg, &nn.runs[jobs[j].0], jobs[j].1));
    Ok(Fig4Output {
        runs: runs.into_iter().collect::<anyhow::Result<_>>()?,
    })
}
