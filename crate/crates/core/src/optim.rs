//! First-order update rules shared by SVO, the cluster replicas and the
//! network experiments.

use alloc::vec::Vec;

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl OptimizerKind {
    pub const ADAM_DEFAULT: OptimizerKind = OptimizerKind::Adam {
        beta1: 0.9,
        beta2: 0.999,
        epsilon: 1e-8,
    };
}

/// Optimizer state. Adam moments are allocated lazily on the first step.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Optimizer {
    /// A zero learning rate is accepted and turns every step into a no-op.
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Result<Self> {
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning rate must be finite and non-negative"));
        }
        if let OptimizerKind::Adam { beta1, beta2, epsilon } = kind {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || epsilon.is_nan() || epsilon <= 0.0 {
                return Err(Error::InvalidArgument("Adam needs beta1, beta2 in [0, 1) and epsilon > 0"));
            }
        }
        Ok(Self {
            kind,
            learning_rate,
            m: Vec::new(),
            v: Vec::new(),
            step: 0,
        })
    }

    pub fn sgd(learning_rate: f64) -> Result<Self> {
        Self::new(OptimizerKind::Sgd, learning_rate)
    }

    pub fn adam(learning_rate: f64) -> Result<Self> {
        Self::new(OptimizerKind::ADAM_DEFAULT, learning_rate)
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one descent step `params -= update(grad)`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        check_dim(params.len(), grad.len())?;
        self.step += 1;
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam { beta1, beta2, epsilon } => {
                if self.m.is_empty() {
                    self.m = alloc::vec![0.0; params.len()];
                    self.v = alloc::vec![0.0; params.len()];
                }
                check_dim(self.m.len(), params.len())?;
                let t = self.step as f64;
                let c1 = 1.0 - libm::pow(beta1, t);
                let c2 = 1.0 - libm::pow(beta2, t);
                for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p -= lr * m_hat / (libm::sqrt(v_hat) + epsilon);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn sgd_step() {
        let mut o = Optimizer::sgd(0.1).unwrap();
        let mut p = vec![1.0, -2.0];
        o.step(&mut p, &[10.0, -10.0]).unwrap();
        assert_eq!(p, vec![0.0, -1.0]);
    }

    #[test]
    fn adam_first_step_is_signed_lr() {
        let mut o = Optimizer::adam(1e-3).unwrap();
        let mut p = vec![0.0, 0.0];
        o.step(&mut p, &[4.0, -0.01]).unwrap();
        // Bias correction makes m̂/√v̂ = sign(g) on the first step.
        assert!((p[0] + 1e-3).abs() < 1e-9);
        assert!((p[1] - 1e-3).abs() < 1e-6);
    }

    #[test]
    fn zero_rate_is_noop_and_negative_rejected() {
        let mut o = Optimizer::adam(0.0).unwrap();
        let mut p = vec![1.5];
        for _ in 0..3 {
            o.step(&mut p, &[2.0]).unwrap();
        }
        assert_eq!(p, vec![1.5]);
        assert!(Optimizer::sgd(-1.0).is_err());
        assert!(Optimizer::sgd(f64::INFINITY).is_err());
    }

    #[test]
    fn dimension_checked() {
        let mut o = Optimizer::sgd(0.1).unwrap();
        assert!(o.step(&mut [0.0; 2], &[1.0]).is_err());
    }
}
