//! Predicted and measured estimator moments.
//!
//! Predictions expand `f(x+ε)` to third order and keep terms through `σ²`.
//! Hessian-squared terms use the diagonal-Hessian form throughout (every
//! built-in objective has a diagonal Hessian); the flag
//! [`AnalyticMoments::diagonal_hessian_assumed`] records this in outputs.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_dim, Capability, Error, Result};
use crate::estimators::{estimate, sample_batch, BaselineState, EstimatorKind};
use crate::exec::Executor;
use crate::objectives::{Objective, ThirdOrder};
use crate::reduce::{pairwise_reduce, pairwise_sum_slice};
use crate::rng::{derive, domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpansionOrder {
    /// No terms dropped.
    Exact,
    /// Terms through `σ²` retained, `O(σ⁴)` dropped.
    SigmaSquared,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticMoments {
    pub estimator: EstimatorKind,
    /// Predicted `⟨ĝᵢ⟩ − gᵢ`.
    pub bias: Vec<f64>,
    pub variance: Vec<f64>,
    pub order: ExpansionOrder,
    pub diagonal_hessian_assumed: bool,
    /// A known contribution the prediction leaves out.
    pub omitted: Option<&'static str>,
}

impl AnalyticMoments {
    /// `sqrt((1/D) Σᵢ (varᵢ + biasᵢ²))`.
    pub fn rmse(&self) -> f64 {
        libm::sqrt(self.mean_squared_error())
    }

    pub fn mean_squared_error(&self) -> f64 {
        let terms: Vec<f64> = self.variance.iter().zip(&self.bias).map(|(v, b)| v + b * b).collect();
        pairwise_sum_slice(&terms) / terms.len() as f64
    }

    pub fn mean_variance(&self) -> f64 {
        pairwise_sum_slice(&self.variance) / self.variance.len() as f64
    }

    /// Root-mean-square bias over coordinates.
    pub fn bias_norm(&self) -> f64 {
        let sq: Vec<f64> = self.bias.iter().map(|b| b * b).collect();
        libm::sqrt(pairwise_sum_slice(&sq) / sq.len() as f64)
    }
}

struct Local {
    f: f64,
    g: Vec<f64>,
    g_sq_sum: f64,
    h: Vec<f64>,
    trace: f64,
    third: ThirdOrder,
}

fn local<O: Objective + ?Sized>(obj: &O, x: &[f64]) -> Result<Local> {
    check_dim(obj.dim(), x.len())?;
    let g = obj.grad(x).ok_or(Error::MissingCapability(Capability::Gradient))?;
    let h = obj
        .hessian_diag(x)
        .ok_or(Error::MissingCapability(Capability::HessianDiagonal))?;
    let trace = obj
        .hessian_trace(x)
        .ok_or(Error::MissingCapability(Capability::HessianDiagonal))?;
    let third = obj.third_order(x).ok_or(Error::MissingCapability(Capability::ThirdOrder))?;
    let g_sq_sum = sum_sq(&g);
    Ok(Local {
        f: obj.eval(x),
        g,
        g_sq_sum,
        h,
        trace,
        third,
    })
}

fn sum_sq(v: &[f64]) -> f64 {
    let sq: Vec<f64> = v.iter().map(|a| a * a).collect();
    pairwise_sum_slice(&sq)
}

fn check_sigma_samples(sigma: f64, samples: usize) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument("sigma must be positive and finite"));
    }
    if samples == 0 {
        return Err(Error::InvalidArgument("sample count must be positive"));
    }
    Ok(())
}

/// `𝓗ᵢ = 15Hᵢᵢ² + 6Hᵢᵢ Σ_{a≠i}H_aa + 3 Σ_{a≠i}H_aa² + Σ_{a≠b; a,b≠i} H_aa H_bb`
/// for a diagonal Hessian with the given diagonal.
pub fn h_terms(h_diag: &[f64]) -> Vec<f64> {
    let a_all = pairwise_sum_slice(h_diag);
    let b_all = sum_sq(h_diag);
    h_diag
        .iter()
        .map(|&hii| {
            let a = a_all - hii;
            let b = b_all - hii * hii;
            15.0 * hii * hii + 6.0 * hii * a + 3.0 * b + (a * a - b)
        })
        .collect()
}

/// The isotropic closed form of `𝓗ᵢ` for `f = Σxᵢ²/(2D)`, `(7 + 7D + D²)/D²`.
///
/// It squares `Σ_{a≠i} H_aa` including the `a = b` terms, so it exceeds the
/// value of [`h_terms`] (`(D+2)(D+4)/D²`) by `(D−1)/D²`.
pub fn isotropic_quadratic_h_closed_form(dim: usize) -> f64 {
    let d = dim as f64;
    (7.0 + 7.0 * d + d * d) / (d * d)
}

/// GP variance of coordinate `i` on `Σxᵢ²/(2D)` with `𝓗ᵢ` supplied by the
/// caller: `(1/S)(f²/σ² + Σgⱼ² + gᵢ² + f(tr H + 2Hᵢᵢ) + σ²𝓗ᵢ/4)`.
pub fn quadratic_gp_variance(x: &[f64], i: usize, sigma: f64, samples: usize, h_term: f64) -> f64 {
    let d = x.len() as f64;
    let f = sum_sq(x) / (2.0 * d);
    let g_sq = sum_sq(x) / (d * d);
    let gi = x[i] / d;
    let s2 = sigma * sigma;
    (f * f / s2 + g_sq + gi * gi + f * (1.0 + 2.0 / d) + s2 * h_term / 4.0) / samples as f64
}

/// Large-`D` simplification for the quadratic: `(1/S)(f²/σ² + f + σ²/4)`.
pub fn quadratic_gp_variance_large_dim(f: f64, sigma: f64, samples: usize) -> f64 {
    (f * f / (sigma * sigma) + f + sigma * sigma / 4.0) / samples as f64
}

/// GP: bias `σ²𝓘ᵢ`; variance
/// `(1/S)(f²/σ² + Σⱼgⱼ² + gᵢ² + f(tr H + 2Hᵢᵢ) + σ²(𝓗ᵢ/4 + 𝓙ᵢ))`.
pub fn analytic_gp<O: Objective + ?Sized>(obj: &O, x: &[f64], sigma: f64, samples: usize) -> Result<AnalyticMoments> {
    check_sigma_samples(sigma, samples)?;
    let l = local(obj, x)?;
    let s2 = sigma * sigma;
    let hs = h_terms(&l.h);
    let s = samples as f64;
    let variance = (0..l.g.len())
        .map(|i| {
            (l.f * l.f / s2
                + l.g_sq_sum
                + l.g[i] * l.g[i]
                + l.f * (l.trace + 2.0 * l.h[i])
                + s2 * (hs[i] / 4.0 + l.third.grad_coupling[i]))
                / s
        })
        .collect();
    Ok(AnalyticMoments {
        estimator: EstimatorKind::Gp,
        bias: l.third.bias.iter().map(|b| s2 * b).collect(),
        variance,
        order: order_for(obj),
        diagonal_hessian_assumed: true,
        omitted: None,
    })
}

fn order_for<O: Objective + ?Sized>(obj: &O) -> ExpansionOrder {
    if obj.is_at_most_quadratic() {
        ExpansionOrder::Exact
    } else {
        ExpansionOrder::SigmaSquared
    }
}

/// GP-AS: same bias as GP; variance `(1/S)(Σⱼgⱼ² + gᵢ² + σ²𝓙ᵢ)`.
pub fn analytic_gp_as<O: Objective + ?Sized>(obj: &O, x: &[f64], sigma: f64, samples: usize) -> Result<AnalyticMoments> {
    check_sigma_samples(sigma, samples)?;
    let l = local(obj, x)?;
    let s2 = sigma * sigma;
    let s = samples as f64;
    Ok(AnalyticMoments {
        estimator: EstimatorKind::GpAntithetic,
        bias: l.third.bias.iter().map(|b| s2 * b).collect(),
        variance: (0..l.g.len())
            .map(|i| (l.g_sq_sum + l.g[i] * l.g[i] + s2 * l.third.grad_coupling[i]) / s)
            .collect(),
        order: order_for(obj),
        diagonal_hessian_assumed: false,
        omitted: None,
    })
}

/// GP with the current-value baseline: the GP prediction with the terms
/// carrying `f` removed, `(1/S)(Σⱼgⱼ² + gᵢ² + σ²(𝓗ᵢ/4 + 𝓙ᵢ))`.
pub fn analytic_gp_baseline<O: Objective + ?Sized>(obj: &O, x: &[f64], sigma: f64, samples: usize) -> Result<AnalyticMoments> {
    check_sigma_samples(sigma, samples)?;
    let l = local(obj, x)?;
    let s2 = sigma * sigma;
    let s = samples as f64;
    let hs = h_terms(&l.h);
    Ok(AnalyticMoments {
        estimator: EstimatorKind::GpBaseline,
        bias: l.third.bias.iter().map(|b| s2 * b).collect(),
        variance: (0..l.g.len())
            .map(|i| (l.g_sq_sum + l.g[i] * l.g[i] + s2 * (hs[i] / 4.0 + l.third.grad_coupling[i])) / s)
            .collect(),
        order: order_for(obj),
        diagonal_hessian_assumed: true,
        omitted: None,
    })
}

/// SPSA with `±σ` perturbations.
///
/// Under this distribution `⟨εᵢ⁴⟩ = σ⁴` rather than the Gaussian `3σ⁴`, so the
/// bias is `σ²(I_iii/6 + ½ Σ_{a≠i} I_iaa)`: it agrees with `σ²𝓘ᵢ` in the mixed
/// terms but carries a third of the pure `I_iii` contribution. The variance
/// keeps `(1/S) Σ_{j≠i} gⱼ²`; the `σ²` third-derivative correction has no
/// closed form here and is reported in [`AnalyticMoments::omitted`].
pub fn analytic_spsa<O: Objective + ?Sized>(obj: &O, x: &[f64], sigma: f64, samples: usize) -> Result<AnalyticMoments> {
    check_sigma_samples(sigma, samples)?;
    let l = local(obj, x)?;
    let s2 = sigma * sigma;
    let s = samples as f64;
    Ok(AnalyticMoments {
        estimator: EstimatorKind::Spsa,
        bias: (0..l.g.len())
            .map(|i| s2 * (l.third.diag[i] / 6.0 + 0.5 * l.third.cross[i]))
            .collect(),
        variance: (0..l.g.len()).map(|i| (l.g_sq_sum - l.g[i] * l.g[i]) / s).collect(),
        order: if obj.is_at_most_quadratic() {
            ExpansionOrder::Exact
        } else {
            ExpansionOrder::SigmaSquared
        },
        diagonal_hessian_assumed: false,
        omitted: if obj.is_at_most_quadratic() {
            None
        } else {
            Some("sigma^2 third-derivative variance term")
        },
    })
}

/// DD: unbiased, variance `(1/S)(gᵢ² + Σⱼgⱼ²)`, independent of `σ`.
pub fn analytic_dd<O: Objective + ?Sized>(obj: &O, x: &[f64], samples: usize) -> Result<AnalyticMoments> {
    if samples == 0 {
        return Err(Error::InvalidArgument("sample count must be positive"));
    }
    check_dim(obj.dim(), x.len())?;
    let g = obj.grad(x).ok_or(Error::MissingCapability(Capability::Gradient))?;
    let total = sum_sq(&g);
    let s = samples as f64;
    Ok(AnalyticMoments {
        estimator: EstimatorKind::DirectionalDerivative,
        bias: vec![0.0; g.len()],
        variance: g.iter().map(|gi| (gi * gi + total) / s).collect(),
        order: ExpansionOrder::Exact,
        diagonal_hessian_assumed: false,
        omitted: None,
    })
}

pub fn analytic<O: Objective + ?Sized>(
    kind: EstimatorKind,
    obj: &O,
    x: &[f64],
    sigma: f64,
    samples: usize,
) -> Result<AnalyticMoments> {
    match kind {
        EstimatorKind::Gp => analytic_gp(obj, x, sigma, samples),
        EstimatorKind::GpAntithetic => analytic_gp_as(obj, x, sigma, samples),
        EstimatorKind::GpBaseline => analytic_gp_baseline(obj, x, sigma, samples),
        EstimatorKind::Spsa => analytic_spsa(obj, x, sigma, samples),
        EstimatorKind::DirectionalDerivative => analytic_dd(obj, x, samples),
    }
}

/// Third-order contractions from second differences of the gradient,
/// `I_abb ≈ (g_a(x+h e_b) − 2g_a(x) + g_a(x−h e_b)) / h²`.
///
/// Noisy; intended for cross-checking closed forms (step around `1e-3`).
pub fn finite_difference_third_order<O: Objective + ?Sized>(obj: &O, x: &[f64], h: f64) -> Result<ThirdOrder> {
    check_dim(obj.dim(), x.len())?;
    let grad = |p: &[f64]| obj.grad(p).ok_or(Error::MissingCapability(Capability::Gradient));
    let g0 = grad(x)?;
    let d = x.len();
    let mut m = vec![0.0; d * d];
    let mut p = x.to_vec();
    for b in 0..d {
        p[b] = x[b] + h;
        let up = grad(&p)?;
        p[b] = x[b] - h;
        let dn = grad(&p)?;
        p[b] = x[b];
        for a in 0..d {
            m[a * d + b] = (up[a] - 2.0 * g0[a] + dn[a]) / (h * h);
        }
    }
    ThirdOrder::from_slices(&g0, &m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMoments {
    pub mean: Vec<f64>,
    /// Unbiased sample variance per coordinate.
    pub variance: Vec<f64>,
    /// `sqrt(variance / trials)`.
    pub std_error: Vec<f64>,
    /// `mean − g`, when the objective exposes a gradient.
    pub bias: Option<Vec<f64>>,
    /// `sqrt((1/D) Σᵢ ⟨(ĝᵢ − gᵢ)²⟩)`, when the objective exposes a gradient.
    pub rmse_vs_true: Option<f64>,
    pub trials: usize,
}

impl EmpiricalMoments {
    pub fn mean_variance(&self) -> f64 {
        pairwise_sum_slice(&self.variance) / self.variance.len() as f64
    }

    pub fn bias_norm(&self) -> Option<f64> {
        self.bias
            .as_ref()
            .map(|b| libm::sqrt(sum_sq(b) / b.len() as f64))
    }
}

/// Running first/second moments for a block of vectors (Chan et al. merge).
#[derive(Debug, Clone)]
pub struct MomentAccumulator {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
    sq_err: Vec<f64>,
}

impl MomentAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
            sq_err: vec![0.0; dim],
        }
    }

    /// Adds one observation; `truth` (if any) feeds the squared error.
    pub fn push(&mut self, v: &[f64], truth: Option<&[f64]>) {
        self.n += 1;
        let n = self.n as f64;
        for i in 0..v.len() {
            let delta = v[i] - self.mean[i];
            self.mean[i] += delta / n;
            self.m2[i] += delta * (v[i] - self.mean[i]);
            if let Some(t) = truth {
                let e = v[i] - t[i];
                self.sq_err[i] += e * e;
            }
        }
    }

    pub fn merge(mut self, other: Self) -> Self {
        if other.n == 0 {
            return self;
        }
        if self.n == 0 {
            return other;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let delta = other.mean[i] - self.mean[i];
            self.mean[i] += delta * nb / n;
            self.m2[i] += other.m2[i] + delta * delta * na * nb / n;
            self.sq_err[i] += other.sq_err[i];
        }
        self.n += other.n;
        self
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn finish(self, truth: Option<&[f64]>) -> EmpiricalMoments {
        let n = self.n as f64;
        let variance: Vec<f64> = self.m2.iter().map(|m| m / (n - 1.0)).collect();
        let std_error = variance.iter().map(|v| libm::sqrt(v / n)).collect();
        let (bias, rmse) = match truth {
            Some(t) => {
                let bias = self.mean.iter().zip(t).map(|(m, g)| m - g).collect();
                let mse = pairwise_sum_slice(&self.sq_err) / (n * self.sq_err.len() as f64);
                (Some(bias), Some(libm::sqrt(mse)))
            }
            None => (None, None),
        };
        EmpiricalMoments {
            mean: self.mean,
            variance,
            std_error,
            bias,
            rmse_vs_true: rmse,
            trials: self.n,
        }
    }
}

/// Trials per independently reduced block; fixed so results do not depend on
/// how blocks are scheduled.
pub const TRIAL_BLOCK: usize = 256;

/// Runs `trials` independent estimates at `x`; trial `t` draws its batch
/// from `derive(master_seed, TRIAL, t)`. GP-baseline uses the current value.
pub fn measure_empirical<O, E>(
    obj: &O,
    x: &[f64],
    kind: EstimatorKind,
    sigma: f64,
    samples: usize,
    trials: usize,
    master_seed: u64,
    exec: &E,
) -> Result<EmpiricalMoments>
where
    O: Objective + ?Sized,
    E: Executor,
{
    if trials < 2 {
        return Err(Error::InvalidArgument("need at least two trials"));
    }
    check_sigma_samples(sigma, samples)?;
    check_dim(obj.dim(), x.len())?;
    let truth = obj.grad(x);
    let baseline = BaselineState::current_value();
    let blocks = trials.div_ceil(TRIAL_BLOCK);
    let parts: Vec<Result<MomentAccumulator>> = exec.map(blocks, |b| {
        let mut acc = MomentAccumulator::new(x.len());
        for t in b * TRIAL_BLOCK..((b + 1) * TRIAL_BLOCK).min(trials) {
            let seed = derive(master_seed, domain::TRIAL, t as u64);
            let batch = sample_batch(x.len(), samples, sigma, kind.distribution(), seed)?;
            let est = estimate(kind, obj, x, &batch, Some(&baseline), &crate::exec::Serial)?;
            acc.push(&est.g_hat, truth.as_deref());
        }
        Ok(acc)
    });
    let parts = parts.into_iter().collect::<Result<Vec<_>>>()?;
    let acc = pairwise_reduce(parts, MomentAccumulator::merge).expect("at least one block");
    Ok(acc.finish(truth.as_deref()))
}
