//! Objective interface and the built-in test functions.

use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::{self, Dual, Scalar};
use crate::error::{Error, Result};
use crate::reduce::pairwise_sum_slice;

mod mlp;

pub use mlp::{make_mlp, BlobConfig, Dataset, Mlp, MlpSpec};

/// A scalar function of a `dim()`-vector.
///
/// Only [`eval`](Objective::eval) is required. Derivative information is
/// optional and reported as `None` when unavailable; analytics and the DD
/// estimator turn a `None` into [`Error::MissingCapability`].
///
/// Implementations must be pure: the same `x` always gives the same bits.
pub trait Objective: Sync {
    fn dim(&self) -> usize;

    fn eval(&self, x: &[f64]) -> f64;

    /// `f(x)` and the directional derivative along `u`, by forward-mode AD.
    fn eval_dual(&self, _x: &[f64], _u: &[f64]) -> Option<Dual> {
        None
    }

    fn grad(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }

    fn hessian_diag(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }

    fn hessian_trace(&self, x: &[f64]) -> Option<f64> {
        self.hessian_diag(x).map(|h| pairwise_sum_slice(&h))
    }

    fn third_order(&self, _x: &[f64]) -> Option<ThirdOrder> {
        None
    }

    /// True when every derivative above the second vanishes identically.
    fn is_at_most_quadratic(&self) -> bool {
        false
    }
}

impl<O: Objective + ?Sized> Objective for &O {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, x: &[f64]) -> f64 {
        (**self).eval(x)
    }
    fn eval_dual(&self, x: &[f64], u: &[f64]) -> Option<Dual> {
        (**self).eval_dual(x, u)
    }
    fn grad(&self, x: &[f64]) -> Option<Vec<f64>> {
        (**self).grad(x)
    }
    fn hessian_diag(&self, x: &[f64]) -> Option<Vec<f64>> {
        (**self).hessian_diag(x)
    }
    fn hessian_trace(&self, x: &[f64]) -> Option<f64> {
        (**self).hessian_trace(x)
    }
    fn third_order(&self, x: &[f64]) -> Option<ThirdOrder> {
        (**self).third_order(x)
    }
    fn is_at_most_quadratic(&self) -> bool {
        (**self).is_at_most_quadratic()
    }
}

/// Third-derivative contractions entering the bias and variance expansions.
///
/// With `I` the array of third derivatives, only the two-index slices
/// `M[a][b] = I_abb` ever appear:
///
/// - `bias[i]  = ½ (I_iii + Σ_{a≠i} I_iaa)`
/// - `grad_coupling[i] = 4 g_i I_iii + Σ_{a≠i} (2 g_i I_iaa + 3 g_a I_iia) + Σ_{a,b≠i} g_a I_abb`
#[derive(Debug, Clone, PartialEq)]
pub struct ThirdOrder {
    /// `I_iii`.
    pub diag: Vec<f64>,
    /// `Σ_{a≠i} I_iaa`.
    pub cross: Vec<f64>,
    pub bias: Vec<f64>,
    pub grad_coupling: Vec<f64>,
}

impl ThirdOrder {
    pub fn zeros(dim: usize) -> Self {
        Self {
            diag: vec![0.0; dim],
            cross: vec![0.0; dim],
            bias: vec![0.0; dim],
            grad_coupling: vec![0.0; dim],
        }
    }

    /// Builds the contractions from the gradient and the row-major `dim × dim`
    /// matrix `m[a * dim + b] = I_abb`.
    pub fn from_slices(grad: &[f64], m: &[f64]) -> Result<Self> {
        let d = grad.len();
        if m.len() != d * d {
            return Err(Error::DimensionMismatch {
                expected: d * d,
                found: m.len(),
            });
        }
        let at = |a: usize, b: usize| m[a * d + b];
        // Row sums of g_a I_abb over all b, then remove b = i below.
        let row_sum: Vec<f64> = (0..d).map(|a| (0..d).map(|b| at(a, b)).sum()).collect();
        let mut out = Self::zeros(d);
        for i in 0..d {
            let diag = at(i, i);
            let cross: f64 = (0..d).filter(|&a| a != i).map(|a| at(i, a)).sum();
            let mut coupling = 4.0 * grad[i] * diag + 2.0 * grad[i] * cross;
            for a in (0..d).filter(|&a| a != i) {
                coupling += 3.0 * grad[a] * at(a, i);
                coupling += grad[a] * (row_sum[a] - at(a, i));
            }
            out.diag[i] = diag;
            out.cross[i] = cross;
            out.bias[i] = 0.5 * (diag + cross);
            out.grad_coupling[i] = coupling;
        }
        Ok(out)
    }
}

/// `f(x) = Σ xᵢ² / (2D)`.
#[derive(Debug, Clone, Copy)]
pub struct Quadratic {
    dim: usize,
}

pub fn make_quadratic(dim: usize) -> Result<Quadratic> {
    if dim == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1"));
    }
    Ok(Quadratic { dim })
}

impl Quadratic {
    fn value<T: Scalar>(&self, x: &[T]) -> T {
        let mut acc = T::constant(0.0);
        for &v in x {
            acc += v * v;
        }
        acc.scale(1.0 / (2.0 * self.dim as f64))
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &[f64]) -> f64 {
        self.value(x)
    }
    fn eval_dual(&self, x: &[f64], u: &[f64]) -> Option<Dual> {
        Some(self.value(&autodiff::seed(x, u)))
    }
    fn grad(&self, x: &[f64]) -> Option<Vec<f64>> {
        let d = self.dim as f64;
        Some(x.iter().map(|v| v / d).collect())
    }
    fn hessian_diag(&self, _x: &[f64]) -> Option<Vec<f64>> {
        Some(vec![1.0 / self.dim as f64; self.dim])
    }
    fn hessian_trace(&self, _x: &[f64]) -> Option<f64> {
        Some(1.0)
    }
    fn third_order(&self, _x: &[f64]) -> Option<ThirdOrder> {
        Some(ThirdOrder::zeros(self.dim))
    }
    fn is_at_most_quadratic(&self) -> bool {
        true
    }
}

/// `f(x) = Σ xᵢ⁴ / D`.
#[derive(Debug, Clone, Copy)]
pub struct Quartic {
    dim: usize,
}

pub fn make_quartic(dim: usize) -> Result<Quartic> {
    if dim == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1"));
    }
    Ok(Quartic { dim })
}

impl Quartic {
    fn value<T: Scalar>(&self, x: &[T]) -> T {
        let mut acc = T::constant(0.0);
        for &v in x {
            let sq = v * v;
            acc += sq * sq;
        }
        acc.scale(1.0 / self.dim as f64)
    }
}

impl Objective for Quartic {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &[f64]) -> f64 {
        self.value(x)
    }
    fn eval_dual(&self, x: &[f64], u: &[f64]) -> Option<Dual> {
        Some(self.value(&autodiff::seed(x, u)))
    }
    fn grad(&self, x: &[f64]) -> Option<Vec<f64>> {
        let d = self.dim as f64;
        Some(x.iter().map(|v| 4.0 * v * v * v / d).collect())
    }
    fn hessian_diag(&self, x: &[f64]) -> Option<Vec<f64>> {
        let d = self.dim as f64;
        Some(x.iter().map(|v| 12.0 * v * v / d).collect())
    }
    fn third_order(&self, x: &[f64]) -> Option<ThirdOrder> {
        // Only I_iii = 24 xᵢ / D survives; the coupling reduces to
        // 4 gᵢ I_iii + Σ_{a≠i} g_a I_aaa.
        let d = self.dim as f64;
        let g = self.grad(x)?;
        let diag: Vec<f64> = x.iter().map(|v| 24.0 * v / d).collect();
        let total: f64 = g.iter().zip(&diag).map(|(g, i)| g * i).sum();
        let grad_coupling = (0..self.dim)
            .map(|i| 4.0 * g[i] * diag[i] + (total - g[i] * diag[i]))
            .collect();
        Some(ThirdOrder {
            bias: diag.iter().map(|v| 0.5 * v).collect(),
            cross: vec![0.0; self.dim],
            diag,
            grad_coupling,
        })
    }
}

/// `f(x) = c`.
#[derive(Debug, Clone, Copy)]
pub struct Constant {
    pub dim: usize,
    pub value: f64,
}

impl Objective for Constant {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, _x: &[f64]) -> f64 {
        self.value
    }
    fn eval_dual(&self, _x: &[f64], _u: &[f64]) -> Option<Dual> {
        Some(Dual::constant(self.value))
    }
    fn grad(&self, _x: &[f64]) -> Option<Vec<f64>> {
        Some(vec![0.0; self.dim])
    }
    fn hessian_diag(&self, _x: &[f64]) -> Option<Vec<f64>> {
        Some(vec![0.0; self.dim])
    }
    fn third_order(&self, _x: &[f64]) -> Option<ThirdOrder> {
        Some(ThirdOrder::zeros(self.dim))
    }
    fn is_at_most_quadratic(&self) -> bool {
        true
    }
}

/// Wraps a closure as a value-only objective (no derivative information).
pub struct FnObjective<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnObjective<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> Objective for FnObjective<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}
