//! SVO trajectories on the quadratic, fixed and learned `σ`.

use std::io::Write;

use vograd_core::rng::{derive, domain};
use vograd_core::svo::{svo_run, SvoRun, VariationalState};
use vograd_core::{Executor, Objective, Serial};

use super::Poly;
use crate::config::{ExperimentConfig, Reduction};
use crate::output::{csv_writer, num};

pub const FIXED: &str = "fixed_sigma";
pub const LEARNED: &str = "learned_sigma";

#[derive(Debug, Clone, PartialEq)]
pub struct Fig2Run {
    pub variant: &'static str,
    pub seed_index: usize,
    pub seed: u64,
    pub run: SvoRun,
}

impl Fig2Run {
    pub fn initial_f(&self) -> f64 {
        self.run.points[0].f_mu
    }

    pub fn final_f(&self) -> f64 {
        self.run.last().f_mu
    }

    pub fn final_sigma(&self) -> f64 {
        self.run.last().sigma
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig2Output {
    pub dim: usize,
    pub runs: Vec<Fig2Run>,
}

impl Fig2Output {
    pub fn variant(&self, name: &str) -> impl Iterator<Item = &Fig2Run> {
        let name = name.to_string();
        self.runs.iter().filter(move |r| r.variant == name)
    }

    /// Columns: variant, seed, step, mu_0.., sigma, U_est, f_mu, abort.
    pub fn write_csv<W: Write>(&self, cfg: &ExperimentConfig, w: W) -> anyhow::Result<()> {
        let mut header: Vec<String> = vec!["variant".into(), "seed".into(), "step".into()];
        header.extend((0..self.dim).map(|i| format!("mu_{i}")));
        header.extend(["sigma", "U_est", "f_mu", "abort"].map(String::from));
        let mut out = csv_writer(w, cfg, &header)?;
        for r in &self.runs {
            let n = r.run.points.len();
            for (k, p) in r.run.points.iter().enumerate() {
                let mut rec = vec![r.variant.to_string(), r.seed_index.to_string(), p.step.to_string()];
                rec.extend(p.mu.iter().map(|v| num(*v)));
                rec.extend([num(p.sigma), num(p.u_estimate), num(p.f_mu)]);
                let abort = match &r.run.abort {
                    Some(a) if k + 1 == n => a.reason.to_string(),
                    _ => String::new(),
                };
                rec.push(abort);
                out.write_record(&rec)?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

pub fn run_fig2_trajectory<E: Executor>(cfg: &ExperimentConfig, exec: &E) -> anyhow::Result<Fig2Output> {
    let obj = Poly::from_config(cfg)?;
    let svo = &cfg.svo;
    let variants: [(&'static str, bool, Reduction); 2] =
        [(FIXED, false, svo.fixed_reduction), (LEARNED, true, svo.learned_reduction)];
    let jobs: Vec<(usize, usize)> = (0..2).flat_map(|v| (0..svo.seeds).map(move |s| (v, s))).collect();
    let runs = exec.map(jobs.len(), |j| -> anyhow::Result<Fig2Run> {
        let (v, k) = jobs[j];
        let (variant, learn, reduction) = variants[v];
        // Both variants of a seed share their sample streams.
        let seed = derive(cfg.master_seed, domain::TRIAL, k as u64);
        let init = VariationalState::new(svo.mu0.clone(), svo.sigma0, learn)?;
        let run = svo_run(&obj, init, cfg.optimizer.build()?, svo.samples, svo.steps, seed, reduction.into(), &Serial)?;
        Ok(Fig2Run {
            variant,
            seed_index: k,
            seed,
            run,
        })
    });
    Ok(Fig2Output {
        dim: obj.dim(),
        runs: runs.into_iter().collect::<anyhow::Result<_>>()?,
    })
}
