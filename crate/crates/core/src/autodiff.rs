//! Forward-mode automatic differentiation with single-tangent dual numbers.
//!
//! A [`Dual`] carries a value and one tangent, with `δ² = 0`. Seeding the
//! inputs as `x + u·δ` and evaluating a function written against [`Scalar`]
//! yields `f(x)` in the value part and the directional derivative `D_u f(x)`
//! in the tangent part, exact up to floating point.

use core::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use crate::error::{check_dim, Capability, Error, Result};
use crate::objectives::Objective;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dual {
    pub value: f64,
    pub tangent: f64,
}

impl Dual {
    pub const fn new(value: f64, tangent: f64) -> Self {
        Self { value, tangent }
    }

    pub const fn constant(value: f64) -> Self {
        Self { value, tangent: 0.0 }
    }

    pub fn exp(self) -> Self {
        let e = libm::exp(self.value);
        Self::new(e, e * self.tangent)
    }

    pub fn ln(self) -> Self {
        Self::new(libm::log(self.value), self.tangent / self.value)
    }

    /// `max(x, 0)`; the tangent at exactly zero is zero.
    pub fn relu(self) -> Self {
        if self.value > 0.0 {
            self
        } else {
            Self::new(0.0, 0.0)
        }
    }
}

impl Add for Dual {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Self::new(self.value + rhs.value, self.tangent + rhs.tangent)
    }
}

impl Sub for Dual {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.value - rhs.value, self.tangent - rhs.tangent)
    }
}

impl Mul for Dual {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        Self::new(
            self.value * rhs.value,
            self.value * rhs.tangent + self.tangent * rhs.value,
        )
    }
}

impl Div for Dual {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        Self::new(
            self.value / rhs.value,
            (self.tangent * rhs.value - self.value * rhs.tangent) / (rhs.value * rhs.value),
        )
    }
}

impl Neg for Dual {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.value, -self.tangent)
    }
}

impl AddAssign for Dual {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl SubAssign for Dual {
    #[inline]
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

/// Numeric type an objective can be evaluated over: plain `f64` or [`Dual`].
///
/// Writing an objective once against this trait guarantees that the value
/// part of a dual evaluation performs exactly the same floating-point
/// operations as the plain evaluation.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
{
    fn constant(v: f64) -> Self;
    fn value(self) -> f64;
    /// Multiplication by a constant (cheaper than a full dual product).
    fn scale(self, c: f64) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn relu(self) -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn constant(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn scale(self, c: f64) -> Self {
        self * c
    }
    #[inline]
    fn exp(self) -> Self {
        libm::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        libm::log(self)
    }
    #[inline]
    fn relu(self) -> Self {
        if self > 0.0 {
            self
        } else {
            0.0
        }
    }
}

impl Scalar for Dual {
    #[inline]
    fn constant(v: f64) -> Self {
        Dual::constant(v)
    }
    #[inline]
    fn value(self) -> f64 {
        self.value
    }
    #[inline]
    fn scale(self, c: f64) -> Self {
        Dual::new(self.value * c, self.tangent * c)
    }
    #[inline]
    fn exp(self) -> Self {
        Dual::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        Dual::ln(self)
    }
    #[inline]
    fn relu(self) -> Self {
        Dual::relu(self)
    }
}

/// Seeds `x + u·δ`.
pub fn seed(x: &[f64], u: &[f64]) -> alloc::vec::Vec<Dual> {
    x.iter().zip(u).map(|(&v, &t)| Dual::new(v, t)).collect()
}

/// Returns `(f(x), D_u f(x))` from one forward-mode pass.
pub fn directional_derivative<O: Objective + ?Sized>(
    obj: &O,
    x: &[f64],
    u: &[f64],
) -> Result<(f64, f64)> {
    check_dim(obj.dim(), x.len())?;
    check_dim(obj.dim(), u.len())?;
    let d = obj
        .eval_dual(x, u)
        .ok_or(Error::MissingCapability(Capability::DualEvaluation))?;
    Ok((d.value, d.tangent))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn product_rule() {
        let a = Dual::new(3.0, 2.0);
        let b = Dual::new(-1.5, 0.5);
        let p = a * b;
        assert_eq!(p.value, -4.5);
        assert_eq!(p.tangent, 3.0 * 0.5 + 2.0 * -1.5);
    }

    #[test]
    fn quotient_and_transcendentals() {
        let x = Dual::new(0.7, 1.0);
        let q = Dual::constant(1.0) / x;
        assert!(close(q.tangent, -1.0 / (0.7 * 0.7), 1e-15));
        assert!(close(x.exp().tangent, libm::exp(0.7), 1e-15));
        assert!(close(x.ln().tangent, 1.0 / 0.7, 1e-15));
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        assert_eq!(Dual::new(0.0, 5.0).relu(), Dual::new(0.0, 0.0));
        assert_eq!(Dual::new(-1.0, 5.0).relu(), Dual::new(0.0, 0.0));
        assert_eq!(Dual::new(2.0, 5.0).relu(), Dual::new(2.0, 5.0));
    }

    #[test]
    fn chain_matches_finite_difference() {
        // g(t) = ln(1 + exp(t^2 / 3))
        fn g<T: Scalar>(t: T) -> T {
            (T::constant(1.0) + (t * t / T::constant(3.0)).exp()).ln()
        }
        let t = 0.9;
        let d = g(Dual::new(t, 1.0));
        let h = 1e-6;
        let fd = (g(t + h) - g(t - h)) / (2.0 * h);
        assert!(close(d.tangent, fd, 1e-8));
        assert_eq!(d.value.to_bits(), g(t).to_bits());
    }
}
