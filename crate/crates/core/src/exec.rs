//! Work fan-out.
//!
//! Estimators hand independent evaluations to an [`Executor`] and receive the
//! results back in index order. The std companion crate provides a thread
//! pool implementation; [`Serial`] runs everything inline.

use alloc::vec::Vec;

pub trait Executor: Sync {
    /// Computes `f(0), ..., f(n - 1)` and returns them in index order.
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Serial;

impl Executor for Serial {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}

impl<E: Executor> Executor for &E {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (**self).map(n, f)
    }
}
