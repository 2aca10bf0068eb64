//! Fully connected ReLU classifier with a softmax cross-entropy loss.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::Objective;
use crate::autodiff::{self, Dual, Scalar};
use crate::error::{Error, Result};
use crate::rng::{derive, domain, Stream};

/// Feature matrix (row-major) with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    n_features: usize,
    n_classes: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, n_features: usize, n_classes: usize) -> Result<Self> {
        if n_features == 0 || n_classes == 0 {
            return Err(Error::Config("dataset needs at least one feature and one class".into()));
        }
        if features.len() != labels.len() * n_features {
            return Err(Error::Config(format!(
                "{} feature values do not fill {} rows of {} features",
                features.len(),
                labels.len(),
                n_features
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::Config(format!("label {bad} out of range for {n_classes} classes")));
        }
        Ok(Self {
            features,
            labels,
            n_features,
            n_classes,
        })
    }

    /// Deterministic Gaussian blobs: one centre per class drawn from
    /// `N(0, separation² I)`, points scattered around it with unit variance.
    pub fn gaussian_blobs(cfg: &BlobConfig) -> Result<Self> {
        if cfg.per_class == 0 {
            return Err(Error::Config("per_class must be positive".into()));
        }
        let mut centres = Stream::new(derive(cfg.seed, domain::DATA, u64::MAX));
        let centres: Vec<f64> = (0..cfg.classes * cfg.dim)
            .map(|_| cfg.separation * centres.normal())
            .collect();
        let mut features = Vec::with_capacity(cfg.classes * cfg.per_class * cfg.dim);
        let mut labels = Vec::with_capacity(cfg.classes * cfg.per_class);
        for c in 0..cfg.classes {
            let mut s = Stream::new(derive(cfg.seed, domain::DATA, c as u64));
            for _ in 0..cfg.per_class {
                features.extend((0..cfg.dim).map(|j| centres[c * cfg.dim + j] + s.normal()));
                labels.push(c);
            }
        }
        Self::new(features, labels, cfg.dim, cfg.classes)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.features[r * self.n_features..(r + 1) * self.n_features]
    }

    pub fn label(&self, r: usize) -> usize {
        self.labels[r]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlobConfig {
    pub seed: u64,
    pub classes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub separation: f64,
}

impl Default for BlobConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            classes: 2,
            dim: 20,
            per_class: 1000,
            separation: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MlpSpec {
    /// Input, hidden..., output widths.
    pub layer_sizes: Vec<usize>,
    pub dataset: Arc<Dataset>,
}

/// Mean cross-entropy of a ReLU network over a (mini)batch of the dataset.
///
/// Parameters are laid out layer by layer, each as an `out × in` row-major
/// weight matrix followed by `out` biases.
#[derive(Debug, Clone)]
pub struct Mlp {
    sizes: Vec<usize>,
    data: Arc<Dataset>,
    batch: Option<Arc<[usize]>>,
    dim: usize,
}

pub fn make_mlp(spec: MlpSpec) -> Result<Mlp> {
    let sizes = spec.layer_sizes;
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(Error::Config("layer sizes must be positive with at least input and output".into()));
    }
    if spec.dataset.is_empty() {
        return Err(Error::Config("dataset is empty".into()));
    }
    if sizes[0] != spec.dataset.n_features() {
        return Err(Error::Config(format!(
            "input width {} does not match {} dataset features",
            sizes[0],
            spec.dataset.n_features()
        )));
    }
    if sizes[sizes.len() - 1] != spec.dataset.n_classes() {
        return Err(Error::Config(format!(
            "output width {} does not match {} classes",
            sizes[sizes.len() - 1],
            spec.dataset.n_classes()
        )));
    }
    let dim = sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum();
    Ok(Mlp {
        sizes,
        data: spec.dataset,
        batch: None,
        dim,
    })
}

impl Mlp {
    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn dataset(&self) -> &Arc<Dataset> {
        &self.data
    }

    /// The same network evaluated on a subset of rows.
    pub fn with_batch(&self, rows: Vec<usize>) -> Result<Mlp> {
        if rows.is_empty() {
            return Err(Error::InvalidArgument("minibatch must be non-empty"));
        }
        if rows.iter().any(|&r| r >= self.data.len()) {
            return Err(Error::InvalidArgument("minibatch row out of range"));
        }
        Ok(Mlp {
            batch: Some(rows.into()),
            ..self.clone()
        })
    }

    /// Seeded minibatch of `size` rows drawn with replacement.
    pub fn sample_batch(&self, size: usize, seed: u64) -> Result<Mlp> {
        let mut s = Stream::new(seed);
        let n = self.data.len();
        self.with_batch((0..size).map(|_| s.index(n)).collect())
    }

    /// He-scaled normal weights, zero biases.
    pub fn init_params(&self, seed: u64) -> Vec<f64> {
        let mut s = Stream::new(derive(seed, domain::INIT, 0));
        let mut p = Vec::with_capacity(self.dim);
        for w in self.sizes.windows(2) {
            let scale = libm::sqrt(2.0 / w[0] as f64);
            p.extend((0..w[0] * w[1]).map(|_| scale * s.normal()));
            p.extend(core::iter::repeat(0.0).take(w[1]));
        }
        p
    }

    fn rows(&self) -> impl Iterator<Item = usize> + '_ {
        let all = 0..self.data.len();
        let (a, b) = match &self.batch {
            Some(rows) => (None, Some(rows.iter().copied())),
            None => (Some(all), None),
        };
        a.into_iter().flatten().chain(b.into_iter().flatten())
    }

    fn n_rows(&self) -> usize {
        self.batch.as_ref().map_or(self.data.len(), |b| b.len())
    }

    fn widest(&self) -> usize {
        self.sizes.iter().copied().max().unwrap_or(0)
    }

    fn loss<T: Scalar>(&self, params: &[T]) -> T {
        let width = self.widest();
        let mut cur = vec![T::constant(0.0); width];
        let mut next = vec![T::constant(0.0); width];
        let layers = self.sizes.len() - 1;
        let mut total = T::constant(0.0);
        for r in self.rows() {
            let input = self.data.row(r);
            let mut offset = 0;
            for l in 0..layers {
                let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
                let weights = &params[offset..offset + n_in * n_out];
                let biases = &params[offset + n_in * n_out..offset + (n_in + 1) * n_out];
                for o in 0..n_out {
                    let row = &weights[o * n_in..(o + 1) * n_in];
                    let acc = biases[o]
                        + if l == 0 {
                            dot(row, input, |w, v| w.scale(*v))
                        } else {
                            dot(row, &cur[..n_in], |w, v| *w * *v)
                        };
                    next[o] = if l + 1 < layers { acc.relu() } else { acc };
                }
                core::mem::swap(&mut cur, &mut next);
                offset += (n_in + 1) * n_out;
            }
            total += log_softmax_loss(&cur[..self.sizes[layers]], self.data.label(r));
        }
        total.scale(1.0 / self.n_rows() as f64)
    }

    fn backprop(&self, params: &[f64]) -> Vec<f64> {
        let layers = self.sizes.len() - 1;
        let mut grad = vec![0.0; self.dim];
        let offsets: Vec<usize> = self
            .sizes
            .windows(2)
            .scan(0, |acc, w| {
                let o = *acc;
                *acc += (w[0] + 1) * w[1];
                Some(o)
            })
            .collect();
        let inv_n = 1.0 / self.n_rows() as f64;
        // acts[l] is the input to layer l (post-activation); pre[l] its output.
        let mut acts: Vec<Vec<f64>> = self.sizes.iter().map(|&n| vec![0.0; n]).collect();
        let mut pre: Vec<Vec<f64>> = self.sizes[1..].iter().map(|&n| vec![0.0; n]).collect();
        let mut delta = vec![0.0; self.widest()];
        let mut delta_prev = vec![0.0; self.widest()];
        for r in self.rows() {
            acts[0].copy_from_slice(self.data.row(r));
            for l in 0..layers {
                let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
                let w = &params[offsets[l]..offsets[l] + n_in * n_out];
                let b = &params[offsets[l] + n_in * n_out..offsets[l] + (n_in + 1) * n_out];
                for o in 0..n_out {
                    let z = b[o] + w[o * n_in..(o + 1) * n_in].iter().zip(&acts[l]).map(|(w, a)| w * a).sum::<f64>();
                    pre[l][o] = z;
                    acts[l + 1][o] = if l + 1 < layers { z.relu() } else { z };
                }
            }
            let logits = &acts[layers];
            let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let denom: f64 = logits.iter().map(|z| libm::exp(z - m)).sum();
            let n_out = self.sizes[layers];
            for j in 0..n_out {
                let p = libm::exp(logits[j] - m) / denom;
                delta[j] = (p - if j == self.data.label(r) { 1.0 } else { 0.0 }) * inv_n;
            }
            for l in (0..layers).rev() {
                let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
                let base = offsets[l];
                for o in 0..n_out {
                    let d = delta[o];
                    for i in 0..n_in {
                        grad[base + o * n_in + i] += d * acts[l][i];
                    }
                    grad[base + n_in * n_out + o] += d;
                }
                if l > 0 {
                    let w = &params[base..base + n_in * n_out];
                    for i in 0..n_in {
                        let mut s = 0.0;
                        for o in 0..n_out {
                            s += w[o * n_in + i] * delta[o];
                        }
                        delta_prev[i] = if pre[l - 1][i] > 0.0 { s } else { 0.0 };
                    }
                    core::mem::swap(&mut delta, &mut delta_prev);
                }
            }
        }
        grad
    }
}

/// Inner product with four independent accumulators so the loop pipelines.
#[inline]
fn dot<T: Scalar, U>(w: &[T], v: &[U], mul: impl Fn(&T, &U) -> T) -> T {
    let mut acc = [T::constant(0.0); 4];
    let (wc, wr) = w.split_at(w.len() / 4 * 4);
    let (vc, vr) = v.split_at(wc.len());
    for (w4, v4) in wc.chunks_exact(4).zip(vc.chunks_exact(4)) {
        for k in 0..4 {
            acc[k] += mul(&w4[k], &v4[k]);
        }
    }
    let mut tail = T::constant(0.0);
    for (w, v) in wr.iter().zip(vr) {
        tail += mul(w, v);
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn log_softmax_loss<T: Scalar>(logits: &[T], label: usize) -> T {
    let mut m = logits[0];
    for &z in &logits[1..] {
        if z.value() > m.value() {
            m = z;
        }
    }
    let mut sum = T::constant(0.0);
    for &z in logits {
        sum += (z - m).exp();
    }
    m + sum.ln() - logits[label]
}

impl Objective for Mlp {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.loss(x)
    }

    fn eval_dual(&self, x: &[f64], u: &[f64]) -> Option<Dual> {
        Some(self.loss(&autodiff::seed(x, u)))
    }

    fn grad(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(self.backprop(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(classes: usize) -> Mlp {
        let data = Dataset::gaussian_blobs(&BlobConfig {
            seed: 3,
            classes,
            dim: 5,
            per_class: 20,
            separation: 2.0,
        })
        .unwrap();
        make_mlp(MlpSpec {
            layer_sizes: vec![5, 7, 4, classes],
            dataset: Arc::new(data),
        })
        .unwrap()
    }

    #[test]
    fn parameter_count() {
        let m = small(3);
        assert_eq!(m.dim(), 6 * 7 + 8 * 4 + 5 * 3);
        assert_eq!(m.init_params(0).len(), m.dim());
    }

    #[test]
    fn zero_weights_give_log_classes() {
        let m = small(2);
        let loss = m.eval(&vec![0.0; m.dim()]);
        assert!((loss - core::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let m = small(2);
        let err = make_mlp(MlpSpec {
            layer_sizes: vec![4, 3, 2],
            dataset: m.dataset().clone(),
        });
        assert!(matches!(err, Err(Error::Config(_))));
        let err = make_mlp(MlpSpec {
            layer_sizes: vec![5, 3, 3],
            dataset: m.dataset().clone(),
        });
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn loss_finite_for_huge_weights() {
        let m = small(3);
        let p: Vec<f64> = m.init_params(1).iter().map(|v| v * 1e6).collect();
        assert!(m.eval(&p).is_finite());
    }

    #[test]
    fn backprop_matches_dual_tangents() {
        let m = small(3);
        let p = m.init_params(9);
        let g = m.grad(&p).unwrap();
        let mut s = Stream::new(4);
        let u: Vec<f64> = (0..m.dim()).map(|_| s.normal()).collect();
        let d = m.eval_dual(&p, &u).unwrap();
        let dot: f64 = g.iter().zip(&u).map(|(a, b)| a * b).sum();
        assert!((d.tangent - dot).abs() <= 1e-10 * dot.abs().max(1e-3));
        assert_eq!(d.value.to_bits(), m.eval(&p).to_bits());
    }

    #[test]
    fn minibatch_restricts_rows() {
        let m = small(2);
        let p = m.init_params(2);
        let one = m.with_batch(vec![5]).unwrap();
        let twice = m.with_batch(vec![5, 5]).unwrap();
        assert!((one.eval(&p) - twice.eval(&p)).abs() < 1e-15);
        assert!(m.with_batch(vec![]).is_err());
        assert!(m.with_batch(vec![10_000]).is_err());
    }
}
