//! Exact Gaussian and Rademacher expectations for polynomial objectives,
//! compared against the analytic moment predictions.

use vograd_core::analytics::{
    analytic_gp, analytic_gp_as, analytic_spsa, h_terms, isotropic_quadratic_h_closed_form, quadratic_gp_variance,
};
use vograd_core::objectives::{make_quadratic, make_quartic};
use vograd_core::Objective;

/// Probabilists' Hermite polynomial `He_n(z)` by recurrence.
fn hermite(n: usize, z: f64) -> f64 {
    let (mut a, mut b) = (1.0, z);
    if n == 0 {
        return a;
    }
    for k in 1..n {
        let c = z * b - k as f64 * a;
        a = b;
        b = c;
    }
    b
}

/// Gauss–Hermite rule for `N(0, 1)`: roots of `He_n` by bracketing and
/// bisection, weights `(n−1)! / (n He_{n−1}(z)²)`.
fn gauss_hermite(n: usize) -> Vec<(f64, f64)> {
    let lim = 2.0 * (n as f64).sqrt() + 2.0;
    let steps = 20_000;
    let mut nodes = Vec::new();
    let mut lo = -lim;
    for k in 1..=steps {
        let hi = -lim + 2.0 * lim * k as f64 / steps as f64;
        if hermite(n, lo) * hermite(n, hi) < 0.0 || hermite(n, hi) == 0.0 {
            let (mut a, mut b) = (lo, hi);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if hermite(n, a) * hermite(n, m) <= 0.0 {
                    b = m;
                } else {
                    a = m;
                }
            }
            nodes.push(0.5 * (a + b));
        }
        lo = hi;
    }
    assert_eq!(nodes.len(), n, "root bracketing missed a node");
    let fact: f64 = (1..n).map(|k| k as f64).product();
    nodes
        .into_iter()
        .map(|z| {
            let h = hermite(n - 1, z);
            (z, fact / (n as f64 * h * h))
        })
        .collect()
}

/// `E[g(ε)]` for `ε ~ N(0, σ²I_d)` by tensor-product quadrature.
fn gaussian_expectation(d: usize, sigma: f64, rule: &[(f64, f64)], g: impl Fn(&[f64]) -> f64) -> f64 {
    let n = rule.len();
    let mut idx = vec![0usize; d];
    let mut eps = vec![0.0; d];
    let mut total = 0.0;
    loop {
        let mut w = 1.0;
        for a in 0..d {
            eps[a] = sigma * rule[idx[a]].0;
            w *= rule[idx[a]].1;
        }
        total += w * g(&eps);
        let mut a = 0;
        loop {
            if a == d {
                return total;
            }
            idx[a] += 1;
            if idx[a] < n {
                break;
            }
            idx[a] = 0;
            a += 1;
        }
    }
}

/// `E[g(ε)]` for `ε ∈ {−σ, σ}^d` uniform, by enumeration.
fn rademacher_expectation(d: usize, sigma: f64, g: impl Fn(&[f64]) -> f64) -> f64 {
    let mut total = 0.0;
    for mask in 0..(1u32 << d) {
        let eps: Vec<f64> = (0..d).map(|a| if mask >> a & 1 == 1 { sigma } else { -sigma }).collect();
        total += g(&eps);
    }
    total / (1u32 << d) as f64
}

fn shifted(x: &[f64], e: &[f64], s: f64) -> Vec<f64> {
    x.iter().zip(e).map(|(a, b)| a + s * b).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn rule_reproduces_normal_moments() {
    let rule = gauss_hermite(8);
    let m = |k: i32| rule.iter().map(|(z, w)| w * z.powi(k)).sum::<f64>();
    assert!((m(0) - 1.0).abs() < 1e-12);
    assert!(m(1).abs() < 1e-12);
    assert!((m(2) - 1.0).abs() < 1e-12);
    assert!((m(4) - 3.0).abs() < 1e-11);
    assert!((m(8) - 105.0).abs() < 1e-9);
    assert!((m(14) - 135_135.0).abs() < 1e-4);
}

#[test]
fn quadratic_gp_variance_is_exact_with_general_h_term() {
    let rule = gauss_hermite(6);
    for d in [2usize, 3] {
        let q = make_quadratic(d).unwrap();
        let x: Vec<f64> = (0..d).map(|a| [2.0, 4.0, -1.0][a]).collect();
        let g = q.grad(&x).unwrap();
        let hs = h_terms(&q.hessian_diag(&x).unwrap());
        for sigma in [0.1, 1.0, 3.0] {
            for i in 0..d {
                let second = gaussian_expectation(d, sigma, &rule, |e| {
                    let v = e[i] * q.eval(&shifted(&x, e, 1.0));
                    v * v
                }) / sigma.powi(4);
                let exact = second - g[i] * g[i];
                let predicted = quadratic_gp_variance(&x, i, sigma, 1, hs[i]);
                assert!(rel(predicted, exact) < 1e-10, "d={d} σ={sigma} i={i}: {predicted} vs {exact}");
                let analytic = analytic_gp(&q, &x, sigma, 1).unwrap().variance[i];
                assert!(rel(analytic, exact) < 1e-10);
            }
        }
    }
}

#[test]
fn isotropic_closed_form_overstates_h_term() {
    let rule = gauss_hermite(6);
    let d = 2;
    let q = make_quadratic(d).unwrap();
    let x = [2.0, 4.0];
    let sigma = 3.0;
    let i = 0;
    let g = q.grad(&x).unwrap();
    let exact = gaussian_expectation(d, sigma, &rule, |e| {
        let v = e[i] * q.eval(&shifted(&x, e, 1.0));
        v * v
    }) / sigma.powi(4)
        - g[i] * g[i];
    // Back out the coefficient of σ²/4 from the exact variance.
    let without = quadratic_gp_variance(&x, i, sigma, 1, 0.0);
    let h_true = (exact - without) * 4.0 / (sigma * sigma);
    assert!((h_true - 6.0).abs() < 1e-9, "{h_true}");
    assert!((h_terms(&[0.5, 0.5])[0] - 6.0).abs() < 1e-12);
    assert_eq!(isotropic_quadratic_h_closed_form(2), 25.0 / 4.0);
    let d = 100.0;
    assert!((h_terms(&vec![0.01; 100])[0] - (d + 2.0) * (d + 4.0) / (d * d)).abs() < 1e-12);
}

#[test]
fn quartic_gp_bias_is_exact() {
    let rule = gauss_hermite(6);
    let d = 3;
    let q = make_quartic(d).unwrap();
    let x = [0.7, -1.3, 0.4];
    let g = q.grad(&x).unwrap();
    for sigma in [0.05, 0.5, 2.0] {
        let a = analytic_gp(&q, &x, sigma, 1).unwrap();
        let a_as = analytic_gp_as(&q, &x, sigma, 1).unwrap();
        for i in 0..d {
            let mean = gaussian_expectation(d, sigma, &rule, |e| e[i] * q.eval(&shifted(&x, e, 1.0))) / (sigma * sigma);
            let bias = mean - g[i];
            assert!((bias - a.bias[i]).abs() < 1e-9 * (1.0 + bias.abs()), "σ={sigma} i={i}");
            let mean_as = gaussian_expectation(d, sigma, &rule, |e| {
                e[i] * (q.eval(&shifted(&x, e, 1.0)) - q.eval(&shifted(&x, e, -1.0)))
            }) / (2.0 * sigma * sigma);
            assert!((mean_as - g[i] - a_as.bias[i]).abs() < 1e-9 * (1.0 + bias.abs()));
            assert!((q.third_order(&x).unwrap().bias[i] - 12.0 * x[i] / d as f64).abs() < 1e-12);
        }
    }
}

#[test]
fn quartic_antithetic_variance_correct_through_sigma_squared() {
    let rule = gauss_hermite(6);
    let d = 3;
    let q = make_quartic(d).unwrap();
    let x = [0.7, -1.3, 0.4];
    let residual = |sigma: f64, i: usize| {
        let m1 = gaussian_expectation(d, sigma, &rule, |e| {
            e[i] * (q.eval(&shifted(&x, e, 1.0)) - q.eval(&shifted(&x, e, -1.0)))
        }) / (2.0 * sigma * sigma);
        let m2 = gaussian_expectation(d, sigma, &rule, |e| {
            let v = e[i] * (q.eval(&shifted(&x, e, 1.0)) - q.eval(&shifted(&x, e, -1.0)));
            v * v
        }) / (4.0 * sigma.powi(4));
        let exact = m2 - m1 * m1;
        exact - analytic_gp_as(&q, &x, sigma, 1).unwrap().variance[i]
    };
    for i in 0..d {
        // The leftover is O(σ⁴): halving σ divides it by 16.
        let (a, b) = (residual(0.1, i), residual(0.05, i));
        assert!((a / b - 16.0).abs() < 0.5, "i={i}: ratio {}", a / b);
        let dd: Vec<f64> = x.iter().map(|v| 4.0 * v / d as f64).collect();
        let others: f64 = (0..d).filter(|&a| a != i).map(|a| dd[a] * dd[a]).sum();
        // Separable quartic: the remainder is σ⁴(96 dᵢ² + 15 Σ_{a≠i} d_a²), d = 4x/D.
        let fourth = 96.0 * dd[i] * dd[i] + 15.0 * others;
        assert!(rel(a / 1e-4, fourth) < 1e-6, "i={i}");
    }
}

#[test]
fn quartic_gp_variance_converges_as_sigma_shrinks() {
    let rule = gauss_hermite(8);
    let d = 2;
    let q = make_quartic(d).unwrap();
    let x = [0.9, -0.6];
    for sigma in [0.01, 0.03] {
        let a = analytic_gp(&q, &x, sigma, 1).unwrap();
        for i in 0..d {
            let m1 = gaussian_expectation(d, sigma, &rule, |e| e[i] * q.eval(&shifted(&x, e, 1.0))) / (sigma * sigma);
            let m2 = gaussian_expectation(d, sigma, &rule, |e| {
                let v = e[i] * q.eval(&shifted(&x, e, 1.0));
                v * v
            }) / sigma.powi(4);
            assert!(rel(a.variance[i], m2 - m1 * m1) < 1e-3, "σ={sigma} i={i}");
        }
    }
}

#[test]
fn spsa_bias_matches_rademacher_enumeration() {
    let d = 4;
    let q = make_quartic(d).unwrap();
    let x = [0.7, -1.3, 0.4, 1.1];
    let g = q.grad(&x).unwrap();
    for sigma in [0.03, 0.1, 1.0] {
        let a = analytic_spsa(&q, &x, sigma, 1).unwrap();
        for i in 0..d {
            let mean = rademacher_expectation(d, sigma, |e| {
                (q.eval(&shifted(&x, e, 1.0)) - q.eval(&shifted(&x, e, -1.0))) / (2.0 * e[i])
            });
            assert!((mean - g[i] - a.bias[i]).abs() < 1e-10, "σ={sigma} i={i}");
        }
    }
}

#[test]
fn spsa_bias_differs_from_gaussian_bias_on_quartic() {
    let d = 10;
    let q = make_quartic(d).unwrap();
    let x: Vec<f64> = (0..d).map(|a| 0.3 * a as f64 - 1.0).collect();
    let sigma = 0.1;
    let gp = analytic_gp(&q, &x, sigma, 1).unwrap();
    let spsa = analytic_spsa(&q, &x, sigma, 1).unwrap();
    for i in 0..d {
        // Separable quartic: only I_iii is non-zero, and Rademacher ⟨εᵢ⁴⟩ = σ⁴.
        let expect = sigma * sigma * 4.0 * x[i] / d as f64;
        assert!((spsa.bias[i] - expect).abs() < 1e-14);
        assert!((gp.bias[i] - 3.0 * expect).abs() < 1e-14);
    }
}
