//! Figure reproductions, the cluster simulation and the moments table.

use vograd_core::objectives::{make_quadratic, make_quartic, Quadratic, Quartic};
use vograd_core::rng::{derive, domain, Stream};
use vograd_core::Objective;

use crate::config::{ExperimentConfig, ObjectiveKind};

pub mod cluster;
pub mod fig2;
pub mod fig3;
pub mod fig4;
pub mod moments;

pub use cluster::{run_cluster, ClusterOutput};
pub use fig2::{run_fig2_trajectory, Fig2Output, Fig2Run};
pub use fig3::{run_fig3_sweep, Fig3Output, Fig3Row};
pub use fig4::{run_fig4_nn, Fig4Output, Fig4Run};
pub use moments::{run_moments_table, MomentsOutput, MomentsRow};

/// The polynomial test objectives behind one type.
#[derive(Debug, Clone, Copy)]
pub enum Poly {
    Quadratic(Quadratic),
    Quartic(Quartic),
}

impl Poly {
    pub fn from_config(cfg: &ExperimentConfig) -> vograd_core::Result<Self> {
        let d = cfg.objective.dim;
        Ok(match cfg.objective.kind {
            ObjectiveKind::Quadratic => Poly::Quadratic(make_quadratic(d)?),
            ObjectiveKind::Quartic => Poly::Quartic(make_quartic(d)?),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Poly::Quadratic(_) => "quadratic",
            Poly::Quartic(_) => "quartic",
        }
    }

    fn inner(&self) -> &dyn Objective {
        match self {
            Poly::Quadratic(q) => q,
            Poly::Quartic(q) => q,
        }
    }
}

impl Objective for Poly {
    fn dim(&self) -> usize {
        self.inner().dim()
    }
    fn eval(&self, x: &[f64]) -> f64 {
        self.inner().eval(x)
    }
    fn eval_dual(&self, x: &[f64], u: &[f64]) -> Option<vograd_core::Dual> {
        self.inner().eval_dual(x, u)
    }
    fn grad(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.inner().grad(x)
    }
    fn hessian_diag(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.inner().hessian_diag(x)
    }
    fn hessian_trace(&self, x: &[f64]) -> Option<f64> {
        self.inner().hessian_trace(x)
    }
    fn third_order(&self, x: &[f64]) -> Option<vograd_core::ThirdOrder> {
        self.inner().third_order(x)
    }
    fn is_at_most_quadratic(&self) -> bool {
        self.inner().is_at_most_quadratic()
    }
}

/// A standard normal vector addressed by `(seed, domain::INPUT, index)`.
pub fn normal_point(dim: usize, seed: u64, index: u64) -> Vec<f64> {
    let mut s = Stream::new(derive(seed, domain::INPUT, index));
    (0..dim).map(|_| s.normal()).collect()
}

/// The configured evaluation point, or a seeded `N(0, I)` draw.
pub fn evaluation_point(cfg: &ExperimentConfig) -> Vec<f64> {
    cfg.objective
        .point
        .clone()
        .unwrap_or_else(|| normal_point(cfg.objective.dim, cfg.master_seed, 0))
}

/// Trailing mean over at most `window` values ending at each index.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for (i, v) in values.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
