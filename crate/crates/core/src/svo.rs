//! Stochastic variational optimization.
//!
//! Minimizes the Gaussian upper bound `U(μ, σ²) = ⟨f(x)⟩_{N(μ, σ²I)}` with
//! `σ² = e^β`, using score-function gradients
//!
//! - `∇_μ U ≈ (1/Sσ²) Σₙ εⁿ f(μ+εⁿ)`
//! - `∂U/∂β ≈ (1/S) Σₙ f(μ+εⁿ) (‖εⁿ‖²/(2σ²) − D/2)`
//!
//! optionally with antithetic pairs or a baseline.

use alloc::vec::Vec;

use crate::error::{check_dim, Error, Result};
use crate::estimators::{assemble, sample_batch_in, Distribution, EstimatorKind, PerturbationBatch};
use crate::exec::Executor;
use crate::objectives::Objective;
use crate::optim::Optimizer;
use crate::reduce::pairwise_sum;
use crate::rng::{derive, domain};

/// Lower clamp on `σ` when a degenerate (zero-width) distribution is requested.
pub const MIN_SIGMA: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct VariationalState {
    pub mu: Vec<f64>,
    /// Log-variance, `σ² = e^β`.
    pub beta: f64,
    pub learn_sigma: bool,
}

impl VariationalState {
    pub fn new(mu: Vec<f64>, sigma: f64, learn_sigma: bool) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument("sigma must be positive and finite"));
        }
        Ok(Self {
            mu,
            beta: libm::log(sigma * sigma),
            learn_sigma,
        })
    }

    pub fn sigma(&self) -> f64 {
        libm::exp(0.5 * self.beta).max(MIN_SIGMA)
    }

    pub fn variance(&self) -> f64 {
        let s = self.sigma();
        s * s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarianceReduction {
    None,
    /// `±ε` pairs for `μ`; `β` uses the pair mean minus `f(μ)`.
    Antithetic,
    /// `f(μ)` subtracted from every evaluation, for both `μ` and `β`.
    Baseline,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvoGradient {
    pub mu: Vec<f64>,
    pub beta: f64,
    /// Sample mean of the evaluations, an estimate of `U`.
    pub u_estimate: f64,
    pub f_evals: usize,
}

fn batch<O: Objective + ?Sized, E: Executor>(
    obj: &O,
    state: &VariationalState,
    samples: usize,
    seed: u64,
    exec: &E,
) -> Result<PerturbationBatch> {
    check_dim(obj.dim(), state.mu.len())?;
    if samples == 0 {
        return Err(Error::InvalidArgument("sample count must be positive"));
    }
    sample_batch_in(exec, obj.dim(), samples, state.sigma(), Distribution::Gaussian, seed)
}

fn eval_at<O: Objective + ?Sized>(obj: &O, mu: &[f64], eps: &[f64], sign: f64) -> f64 {
    let x: Vec<f64> = mu.iter().zip(eps).map(|(m, e)| m + sign * e).collect();
    obj.eval(&x)
}

/// `(1/S) Σₙ f(μ + σzⁿ)`.
pub fn upper_bound_estimate<O: Objective + ?Sized, E: Executor>(
    obj: &O,
    state: &VariationalState,
    samples: usize,
    master_seed: u64,
    exec: &E,
) -> Result<f64> {
    let b = batch(obj, state, samples, master_seed, exec)?;
    let f = exec.map(samples, |n| eval_at(obj, &state.mu, b.sample(n), 1.0));
    Ok(pairwise_sum(samples, |n| f[n]) / samples as f64)
}

/// Score-function gradient of `U` with respect to `μ` and `β`.
pub fn svo_gradient<O: Objective + ?Sized, E: Executor>(
    obj: &O,
    state: &VariationalState,
    samples: usize,
    master_seed: u64,
    reduction: VarianceReduction,
    exec: &E,
) -> Result<SvoGradient> {
    let b = batch(obj, state, samples, master_seed, exec)?;
    let sigma = b.sigma();
    let s2 = sigma * sigma;
    let half_dim = 0.5 * obj.dim() as f64;
    let score: Vec<f64> = b
        .iter()
        .map(|e| e.iter().map(|v| v * v).sum::<f64>() / (2.0 * s2) - half_dim)
        .collect();
    let s = samples as f64;

    let (kind, mu_w, beta_w, u_estimate, f_evals) = match reduction {
        VarianceReduction::None => {
            let f = exec.map(samples, |n| eval_at(obj, &state.mu, b.sample(n), 1.0));
            let u = pairwise_sum(samples, |n| f[n]) / s;
            (EstimatorKind::Gp, f.clone(), f, u, samples)
        }
        VarianceReduction::Baseline => {
            let f = exec.map(samples, |n| eval_at(obj, &state.mu, b.sample(n), 1.0));
            let base = obj.eval(&state.mu);
            let u = pairwise_sum(samples, |n| f[n]) / s;
            let w: Vec<f64> = f.iter().map(|v| v - base).collect();
            (EstimatorKind::Gp, w.clone(), w, u, samples + 1)
        }
        VarianceReduction::Antithetic => {
            let pairs = exec.map(samples, |n| {
                let e = b.sample(n);
                (eval_at(obj, &state.mu, e, 1.0), eval_at(obj, &state.mu, e, -1.0))
            });
            let u = pairwise_sum(samples, |n| 0.5 * (pairs[n].0 + pairs[n].1)) / s;
            let mu_w = pairs.iter().map(|(p, m)| p - m).collect();
            let (beta_w, extra) = if state.learn_sigma {
                let base = obj.eval(&state.mu);
                (pairs.iter().map(|(p, m)| 0.5 * (p + m) - base).collect(), 1)
            } else {
                (pairs.iter().map(|(p, m)| 0.5 * (p + m)).collect(), 0)
            };
            (EstimatorKind::GpAntithetic, mu_w, beta_w, u, 2 * samples + extra)
        }
    };

    let terms: Vec<(&[f64], f64)> = (0..samples).map(|n| (b.sample(n), mu_w[n])).collect();
    let mu = assemble(kind, obj.dim(), sigma, &terms)?;
    let beta = pairwise_sum(samples, |n| beta_w[n] * score[n]) / s;
    Ok(SvoGradient {
        mu,
        beta,
        u_estimate,
        f_evals,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub step: usize,
    pub mu: Vec<f64>,
    pub sigma: f64,
    pub u_estimate: f64,
    pub f_mu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Abort {
    pub step: usize,
    pub reason: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvoRun {
    /// State before each update, plus the final state (`steps + 1` points
    /// for a complete run).
    pub points: Vec<TrajectoryPoint>,
    pub abort: Option<Abort>,
}

impl SvoRun {
    pub fn last(&self) -> &TrajectoryPoint {
        self.points.last().expect("a run records at least its initial state")
    }
}

/// Runs `steps` optimizer updates; step `t` samples with
/// `derive(master_seed, STEP, t)`.
#[allow(clippy::too_many_arguments)]
pub fn svo_run<O: Objective + ?Sized, E: Executor>(
    obj: &O,
    init: VariationalState,
    mut opt: Optimizer,
    samples: usize,
    steps: usize,
    master_seed: u64,
    reduction: VarianceReduction,
    exec: &E,
) -> Result<SvoRun> {
    if steps == 0 {
        return Err(Error::InvalidArgument("need at least one step"));
    }
    check_dim(obj.dim(), init.mu.len())?;
    let mut state = init;
    let mut points = Vec::with_capacity(steps + 1);
    let d = obj.dim();
    for step in 0..=steps {
        if !state.sigma().is_finite() || state.mu.iter().any(|v| !v.is_finite()) {
            return Ok(SvoRun {
                points,
                abort: Some(Abort {
                    step,
                    reason: "non-finite parameters",
                }),
            });
        }
        let seed = derive(master_seed, domain::STEP, step as u64);
        let grad = svo_gradient(obj, &state, samples, seed, reduction, exec)?;
        let f_mu = obj.eval(&state.mu);
        points.push(TrajectoryPoint {
            step,
            mu: state.mu.clone(),
            sigma: state.sigma(),
            u_estimate: grad.u_estimate,
            f_mu,
        });
        if !(grad.u_estimate.is_finite() && f_mu.is_finite()) {
            return Ok(SvoRun {
                points,
                abort: Some(Abort {
                    step,
                    reason: "non-finite objective value",
                }),
            });
        }
        if step == steps {
            break;
        }
        if grad.mu.iter().any(|v| !v.is_finite()) || !grad.beta.is_finite() {
            return Ok(SvoRun {
                points,
                abort: Some(Abort {
                    step,
                    reason: "non-finite gradient",
                }),
            });
        }
        let mut params = state.mu.clone();
        let mut g = grad.mu;
        if state.learn_sigma {
            params.push(state.beta);
            g.push(grad.beta);
        }
        opt.step(&mut params, &g)?;
        state.mu.copy_from_slice(&params[..d]);
        if state.learn_sigma {
            state.beta = params[d];
        }
    }
    Ok(SvoRun { points, abort: None })
}
