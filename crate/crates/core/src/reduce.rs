//! Fixed-order pairwise reductions.
//!
//! The tree shape depends only on the number of terms, never on how terms
//! were produced, which is what makes serial and parallel runs agree bitwise.

/// Pairwise sum of `term(0) + ... + term(n - 1)`.
pub fn pairwise_sum<F: Fn(usize) -> f64>(n: usize, term: F) -> f64 {
    fn go<F: Fn(usize) -> f64>(lo: usize, hi: usize, term: &F) -> f64 {
        match hi - lo {
            0 => 0.0,
            1 => term(lo),
            2 => term(lo) + term(lo + 1),
            len => {
                let mid = lo + len / 2;
                go(lo, mid, term) + go(mid, hi, term)
            }
        }
    }
    go(0, n, &term)
}

pub fn pairwise_sum_slice(values: &[f64]) -> f64 {
    pairwise_sum(values.len(), |k| values[k])
}

/// Pairwise reduction of arbitrary values with an associative-in-spirit
/// `combine`; `None` for an empty input.
pub fn pairwise_reduce<T, F>(mut items: alloc::vec::Vec<T>, combine: F) -> Option<T>
where
    F: Fn(T, T) -> T,
{
    fn go<T, F: Fn(T, T) -> T>(items: &mut alloc::vec::Vec<Option<T>>, lo: usize, hi: usize, f: &F) -> T {
        if hi - lo == 1 {
            return items[lo].take().expect("each slot is taken once");
        }
        let mid = lo + (hi - lo) / 2;
        let left = go(items, lo, mid, f);
        let right = go(items, mid, hi, f);
        f(left, right)
    }
    if items.is_empty() {
        return None;
    }
    let n = items.len();
    let mut slots: alloc::vec::Vec<Option<T>> = items.drain(..).map(Some).collect();
    Some(go(&mut slots, 0, n, &combine))
}
