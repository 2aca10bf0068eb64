//! The five gradient estimators over a seed-addressed perturbation source.
//!
//! With perturbations `εⁿ` of scale `σ`, the estimators are
//!
//! | kind | `ĝᵢ` |
//! |------|------|
//! | GP | `(1/Sσ²) Σₙ εᵢⁿ f(x+εⁿ)` |
//! | GP-AS | `(1/2Sσ²) Σₙ εᵢⁿ (f(x+εⁿ) − f(x−εⁿ))` |
//! | GP-baseline | `(1/Sσ²) Σₙ εᵢⁿ (f(x+εⁿ) − b)` |
//! | SPSA | `(1/2S) Σₙ (εᵢⁿ)⁻¹ (f(x+εⁿ) − f(x−εⁿ))` |
//! | DD | `(1/Sσ²) Σₙ εᵢⁿ D_{εⁿ}f(x)` |
//!
//! Each estimate is assembled from per-sample scalar weights by [`assemble`],
//! the same routine the distributed replicas use, with a fixed pairwise
//! summation order over samples.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{check_dim, Capability, Error, Result};
use crate::exec::Executor;
use crate::objectives::Objective;
use crate::reduce::{pairwise_sum, pairwise_sum_slice};
use crate::rng::{sample_seed, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Distribution {
    /// Each `εⁿ ~ N(0, σ² I)`.
    Gaussian,
    /// Each coordinate is `±σ` with equal probability.
    Bernoulli,
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Distribution::Gaussian => "gaussian",
            Distribution::Bernoulli => "bernoulli",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EstimatorKind {
    Gp,
    GpAntithetic,
    GpBaseline,
    Spsa,
    DirectionalDerivative,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 5] = [
        EstimatorKind::Gp,
        EstimatorKind::GpAntithetic,
        EstimatorKind::GpBaseline,
        EstimatorKind::Spsa,
        EstimatorKind::DirectionalDerivative,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Gp => "gp",
            EstimatorKind::GpAntithetic => "gp_as",
            EstimatorKind::GpBaseline => "gp_baseline",
            EstimatorKind::Spsa => "spsa",
            EstimatorKind::DirectionalDerivative => "dd",
        }
    }

    pub fn distribution(self) -> Distribution {
        match self {
            EstimatorKind::Spsa => Distribution::Bernoulli,
            _ => Distribution::Gaussian,
        }
    }

    /// Scalars each sample contributes (and each worker transmits).
    pub fn scalars_per_sample(self) -> usize {
        match self {
            EstimatorKind::GpAntithetic | EstimatorKind::Spsa => 2,
            _ => 1,
        }
    }

    /// Objective (or dual) evaluations per sample, excluding any baseline.
    pub fn evals_per_sample(self) -> usize {
        self.scalars_per_sample()
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or(Error::InvalidArgument("unknown estimator (gp, gp_as, gp_baseline, spsa, dd)"))
    }
}

/// `S` perturbation vectors of dimension `dim`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationBatch {
    dim: usize,
    sigma: f64,
    dist: Distribution,
    master_seed: Option<u64>,
    seeds: Vec<u64>,
    samples: Vec<f64>,
}

impl PerturbationBatch {
    /// A batch from explicit vectors (no seeds; cannot be regenerated).
    pub fn from_samples(sigma: f64, dist: Distribution, samples: Vec<Vec<f64>>) -> Result<Self> {
        check_sigma(sigma)?;
        let dim = samples.first().map_or(0, Vec::len);
        if samples.is_empty() || dim == 0 {
            return Err(Error::InvalidArgument("batch needs at least one non-empty sample"));
        }
        for s in &samples {
            check_dim(dim, s.len())?;
        }
        Ok(Self {
            dim,
            sigma,
            dist,
            master_seed: None,
            seeds: Vec::new(),
            samples: samples.concat(),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn distribution(&self) -> Distribution {
        self.dist
    }

    pub fn master_seed(&self) -> Option<u64> {
        self.master_seed
    }

    /// Per-sample seeds; empty for batches built with [`from_samples`](Self::from_samples).
    pub fn seeds(&self) -> &[u64] {
        &self.seeds
    }

    pub fn sample(&self, n: usize) -> &[f64] {
        &self.samples[n * self.dim..(n + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.samples.chunks_exact(self.dim)
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument("sigma must be positive and finite"))
    }
}

/// Regenerates the single perturbation addressed by `seed`.
pub fn perturbation(dim: usize, sigma: f64, dist: Distribution, seed: u64) -> Vec<f64> {
    let mut s = Stream::new(seed);
    match dist {
        Distribution::Gaussian => (0..dim).map(|_| sigma * s.normal()).collect(),
        Distribution::Bernoulli => (0..dim).map(|_| sigma * s.sign()).collect(),
    }
}

/// Draws `count` perturbations; sample `n` uses seed `sample_seed(master_seed, n)`.
pub fn sample_batch(dim: usize, count: usize, sigma: f64, dist: Distribution, master_seed: u64) -> Result<PerturbationBatch> {
    sample_batch_in(&crate::exec::Serial, dim, count, sigma, dist, master_seed)
}

/// [`sample_batch`] with generation fanned out over `exec`.
pub fn sample_batch_in<E: Executor>(
    exec: &E,
    dim: usize,
    count: usize,
    sigma: f64,
    dist: Distribution,
    master_seed: u64,
) -> Result<PerturbationBatch> {
    check_sigma(sigma)?;
    if count == 0 || dim == 0 {
        return Err(Error::InvalidArgument("batch needs at least one sample of positive dimension"));
    }
    let seeds: Vec<u64> = (0..count as u64).map(|n| sample_seed(master_seed, n)).collect();
    let rows = exec.map(count, |n| perturbation(dim, sigma, dist, seeds[n]));
    Ok(PerturbationBatch {
        dim,
        sigma,
        dist,
        master_seed: Some(master_seed),
        seeds,
        samples: rows.concat(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMode {
    /// `b = f(x)`, one extra evaluation shared by all samples.
    CurrentValue,
    /// `b` = mean of the most recent `window` recorded losses.
    MovingAverage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineState {
    mode: BaselineMode,
    window: usize,
    history: VecDeque<f64>,
}

impl Default for BaselineState {
    fn default() -> Self {
        Self::current_value()
    }
}

impl BaselineState {
    pub fn current_value() -> Self {
        Self {
            mode: BaselineMode::CurrentValue,
            window: 1,
            history: VecDeque::new(),
        }
    }

    pub fn moving_average(window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::InvalidArgument("moving-average window must be positive"));
        }
        Ok(Self {
            mode: BaselineMode::MovingAverage,
            window,
            history: VecDeque::with_capacity(window),
        })
    }

    pub fn mode(&self) -> BaselineMode {
        self.mode
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn history(&self) -> impl Iterator<Item = &f64> {
        self.history.iter()
    }

    /// Records a loss; only the latest `window` values are kept.
    pub fn record(&mut self, loss: f64) {
        if self.mode == BaselineMode::CurrentValue {
            return;
        }
        if self.history.len() == self.window {
            self.history.pop_front();
        }
        self.history.push_back(loss);
    }

    /// Moving average of the history, `None` in current-value mode or before
    /// anything has been recorded.
    pub fn average(&self) -> Option<f64> {
        if self.mode == BaselineMode::CurrentValue || self.history.is_empty() {
            return None;
        }
        // Contiguous copy: the ring buffer's split point must not affect the sum.
        let values: Vec<f64> = self.history.iter().copied().collect();
        Some(pairwise_sum_slice(&values) / values.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub kind: EstimatorKind,
    pub g_hat: Vec<f64>,
    pub samples: usize,
    pub sigma: f64,
    pub master_seed: Option<u64>,
    /// Scalars consumed, in sample order: `f(x+εⁿ)` (GP, baseline),
    /// `f(x+εⁿ), f(x−εⁿ)` pairs (GP-AS, SPSA) or `D_{εⁿ}f(x)` (DD).
    pub evals: Vec<f64>,
    /// Objective evaluations performed (dual evaluations for DD).
    pub f_evals: usize,
    /// Baseline subtracted by GP-baseline.
    pub baseline: Option<f64>,
}

/// Per-sample weights multiplying `εⁿ` (or `(εⁿ)⁻¹` for SPSA).
pub fn weights(kind: EstimatorKind, evals: &[f64], baseline: Option<f64>) -> Result<Vec<f64>> {
    match kind {
        EstimatorKind::Gp | EstimatorKind::DirectionalDerivative => Ok(evals.to_vec()),
        EstimatorKind::GpBaseline => {
            let b = baseline.ok_or(Error::InvalidArgument("baseline estimator needs a baseline value"))?;
            Ok(evals.iter().map(|f| f - b).collect())
        }
        EstimatorKind::GpAntithetic | EstimatorKind::Spsa => {
            if evals.len() % 2 != 0 {
                return Err(Error::InvalidArgument("paired estimator needs an even number of evaluations"));
            }
            Ok(evals.chunks_exact(2).map(|p| p[0] - p[1]).collect())
        }
    }
}

/// Combines `(εⁿ, wₙ)` terms into `ĝ` with the normalization of `kind`,
/// summing over samples in index order along a pairwise tree. `S` is the
/// number of terms.
pub fn assemble(kind: EstimatorKind, dim: usize, sigma: f64, terms: &[(&[f64], f64)]) -> Result<Vec<f64>> {
    if terms.is_empty() {
        return Err(Error::InvalidArgument("no samples to assemble"));
    }
    for (eps, _) in terms {
        check_dim(dim, eps.len())?;
    }
    let s = terms.len() as f64;
    let g = match kind {
        EstimatorKind::Spsa => {
            let norm = 2.0 * s;
            (0..dim)
                .map(|i| pairwise_sum(terms.len(), |n| terms[n].1 / terms[n].0[i]) / norm)
                .collect()
        }
        _ => {
            let norm = match kind {
                EstimatorKind::GpAntithetic => 2.0 * s * sigma * sigma,
                _ => s * sigma * sigma,
            };
            (0..dim)
                .map(|i| pairwise_sum(terms.len(), |n| terms[n].0[i] * terms[n].1) / norm)
                .collect()
        }
    };
    Ok(g)
}

fn shifted(x: &[f64], eps: &[f64], sign: f64) -> Vec<f64> {
    x.iter().zip(eps).map(|(a, e)| a + sign * e).collect()
}

fn check_inputs<O: Objective + ?Sized>(kind: EstimatorKind, obj: &O, x: &[f64], batch: &PerturbationBatch) -> Result<()> {
    check_dim(obj.dim(), x.len())?;
    check_dim(obj.dim(), batch.dim())?;
    if batch.distribution() != kind.distribution() {
        return Err(Error::InvalidDistribution {
            estimator: kind,
            found: batch.distribution(),
        });
    }
    Ok(())
}

/// Raw per-sample scalars for `kind` (see [`GradientEstimate::evals`]).
pub fn sample_evals<O, E>(kind: EstimatorKind, obj: &O, x: &[f64], batch: &PerturbationBatch, exec: &E) -> Result<Vec<f64>>
where
    O: Objective + ?Sized,
    E: Executor,
{
    check_inputs(kind, obj, x, batch)?;
    let per = kind.scalars_per_sample();
    let rows: Vec<Result<[f64; 2]>> = exec.map(batch.len(), |n| sample_scalars(kind, obj, x, batch.sample(n)));
    let mut evals = Vec::with_capacity(batch.len() * per);
    for r in rows {
        evals.extend_from_slice(&r?[..per]);
    }
    Ok(evals)
}

/// Scalars one sample (one worker) produces for `kind`; only the first
/// [`EstimatorKind::scalars_per_sample`] entries are meaningful.
pub fn sample_scalars<O: Objective + ?Sized>(kind: EstimatorKind, obj: &O, x: &[f64], eps: &[f64]) -> Result<[f64; 2]> {
    Ok(match kind {
        EstimatorKind::Gp | EstimatorKind::GpBaseline => [obj.eval(&shifted(x, eps, 1.0)), 0.0],
        EstimatorKind::GpAntithetic | EstimatorKind::Spsa => {
            [obj.eval(&shifted(x, eps, 1.0)), obj.eval(&shifted(x, eps, -1.0))]
        }
        EstimatorKind::DirectionalDerivative => {
            let d = obj
                .eval_dual(x, eps)
                .ok_or(Error::MissingCapability(Capability::DualEvaluation))?;
            [d.tangent, 0.0]
        }
    })
}

/// Runs any estimator. `baseline` is only consulted by GP-baseline, where
/// `None` means [`BaselineState::current_value`].
pub fn estimate<O, E>(
    kind: EstimatorKind,
    obj: &O,
    x: &[f64],
    batch: &PerturbationBatch,
    baseline: Option<&BaselineState>,
    exec: &E,
) -> Result<GradientEstimate>
where
    O: Objective + ?Sized,
    E: Executor,
{
    let evals = sample_evals(kind, obj, x, batch, exec)?;
    let mut f_evals = evals.len();
    let b = if kind == EstimatorKind::GpBaseline {
        match baseline.and_then(BaselineState::average) {
            Some(avg) => Some(avg),
            None => {
                f_evals += 1;
                Some(obj.eval(x))
            }
        }
    } else {
        None
    };
    let w = weights(kind, &evals, b)?;
    let terms: Vec<(&[f64], f64)> = (0..batch.len()).map(|n| (batch.sample(n), w[n])).collect();
    let g_hat = assemble(kind, batch.dim(), batch.sigma(), &terms)?;
    Ok(GradientEstimate {
        kind,
        g_hat,
        samples: batch.len(),
        sigma: batch.sigma(),
        master_seed: batch.master_seed(),
        evals,
        f_evals,
        baseline: b,
    })
}

pub fn estimate_gp<O: Objective + ?Sized, E: Executor>(obj: &O, x: &[f64], batch: &PerturbationBatch, exec: &E) -> Result<GradientEstimate> {
    estimate(EstimatorKind::Gp, obj, x, batch, None, exec)
}

pub fn estimate_gp_antithetic<O: Objective + ?Sized, E: Executor>(
    obj: &O,
    x: &[f64],
    batch: &PerturbationBatch,
    exec: &E,
) -> Result<GradientEstimate> {
    estimate(EstimatorKind::GpAntithetic, obj, x, batch, None, exec)
}

pub fn estimate_gp_baseline<O: Objective + ?Sized, E: Executor>(
    obj: &O,
    x: &[f64],
    batch: &PerturbationBatch,
    baseline: &BaselineState,
    exec: &E,
) -> Result<GradientEstimate> {
    estimate(EstimatorKind::GpBaseline, obj, x, batch, Some(baseline), exec)
}

pub fn estimate_spsa<O: Objective + ?Sized, E: Executor>(obj: &O, x: &[f64], batch: &PerturbationBatch, exec: &E) -> Result<GradientEstimate> {
    estimate(EstimatorKind::Spsa, obj, x, batch, None, exec)
}

pub fn estimate_dd<O: Objective + ?Sized, E: Executor>(obj: &O, x: &[f64], batch: &PerturbationBatch, exec: &E) -> Result<GradientEstimate> {
    estimate(EstimatorKind::DirectionalDerivative, obj, x, batch, None, exec)
}

/// Draws the batch `kind` needs and estimates in one call.
pub fn estimate_seeded<O, E>(
    kind: EstimatorKind,
    obj: &O,
    x: &[f64],
    samples: usize,
    sigma: f64,
    master_seed: u64,
    baseline: Option<&BaselineState>,
    exec: &E,
) -> Result<GradientEstimate>
where
    O: Objective + ?Sized,
    E: Executor,
{
    let batch = sample_batch_in(exec, obj.dim(), samples, sigma, kind.distribution(), master_seed)?;
    estimate(kind, obj, x, &batch, baseline, exec)
}

/// `ĝ` of a constant objective under GP: `(c/Sσ²) Σₙ εⁿ`.
pub fn gp_constant_response(c: f64, batch: &PerturbationBatch) -> Vec<f64> {
    let s = batch.len() as f64;
    let mut out = vec![0.0; batch.dim()];
    for (i, o) in out.iter_mut().enumerate() {
        *o = pairwise_sum(batch.len(), |n| batch.sample(n)[i] * c) / (s * batch.sigma() * batch.sigma());
    }
    out
}
