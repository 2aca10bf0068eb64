use vograd_core::analytics::{analytic, measure_empirical};
use vograd_core::objectives::{make_quadratic, make_quartic};
use vograd_core::rng::Stream;
use vograd_core::{EstimatorKind, Objective, Serial};

fn normal_point(d: usize, seed: u64) -> Vec<f64> {
    let mut s = Stream::new(seed);
    (0..d).map(|_| s.normal()).collect()
}

#[test]
fn dd_is_unbiased() {
    let d = 20;
    let x = normal_point(d, 1);
    let q = make_quadratic(d).unwrap();
    let r = make_quartic(d).unwrap();
    for obj in [&q as &dyn Objective, &r] {
        let m = measure_empirical(obj, &x, EstimatorKind::DirectionalDerivative, 0.5, 1, 20_000, 3, &Serial).unwrap();
        let bias = m.bias.unwrap();
        for i in 0..d {
            assert!(bias[i].abs() < 4.0 * m.std_error[i], "coordinate {i}");
        }
    }
}

#[test]
fn empirical_variance_matches_prediction() {
    let d = 10;
    let x = normal_point(d, 2);
    let r = make_quartic(d).unwrap();
    for (kind, sigma) in [
        (EstimatorKind::Gp, 0.01),
        (EstimatorKind::GpAntithetic, 0.05),
        (EstimatorKind::GpBaseline, 0.05),
        (EstimatorKind::DirectionalDerivative, 1.0),
    ] {
        let a = analytic(kind, &r, &x, sigma, 5).unwrap();
        let m = measure_empirical(&r, &x, kind, sigma, 5, 20_000, 4, &Serial).unwrap();
        let (pa, pm) = (a.mean_variance(), m.mean_variance());
        assert!((pa - pm).abs() / pa < 0.05, "{kind:?}: {pa} vs {pm}");
    }
}

#[test]
fn quadratic_gp_variance_exact_in_large_sigma() {
    let d = 2;
    let q = make_quadratic(d).unwrap();
    let x = [2.0, 4.0];
    let a = analytic(EstimatorKind::Gp, &q, &x, 3.0, 1).unwrap();
    let m = measure_empirical(&q, &x, EstimatorKind::Gp, 3.0, 1, 200_000, 5, &Serial).unwrap();
    for i in 0..d {
        assert!((a.variance[i] - m.variance[i]).abs() / a.variance[i] < 0.05, "coordinate {i}");
    }
}

#[test]
fn spsa_bias_follows_rademacher_moments() {
    let d = 4;
    let x = [1.5, -1.0, 0.5, 2.0];
    let r = make_quartic(d).unwrap();
    let sigma = 1.0;
    let a = analytic(EstimatorKind::Spsa, &r, &x, sigma, 1).unwrap();
    let m = measure_empirical(&r, &x, EstimatorKind::Spsa, sigma, 1, 100_000, 6, &Serial).unwrap();
    let bias = m.bias.unwrap();
    for i in 0..d {
        assert!((bias[i] - a.bias[i]).abs() < 4.0 * m.std_error[i], "coordinate {i}");
    }
}

#[test]
fn antithetic_and_gp_share_the_gaussian_bias() {
    let d = 4;
    let x = [1.5, -1.0, 0.5, 2.0];
    let r = make_quartic(d).unwrap();
    let sigma = 0.5;
    let a = analytic(EstimatorKind::GpAntithetic, &r, &x, sigma, 1).unwrap();
    let m = measure_empirical(&r, &x, EstimatorKind::GpAntithetic, sigma, 1, 100_000, 7, &Serial).unwrap();
    let bias = m.bias.unwrap();
    for i in 0..d {
        assert!((bias[i] - a.bias[i]).abs() < 4.0 * m.std_error[i], "coordinate {i}");
        assert!((a.bias[i] - sigma * sigma * 12.0 * x[i] / d as f64).abs() < 1e-12);
    }
}
