use proptest::prelude::*;
use qpf::circle::{orbit_point, wrap, RotationSpec};
use qpf::cocycle::*;
use qpf::graphs::backward_orbit_lyapunov;
use qpf::systems::{make_harper, ForcingFunction};

/// Largest singular value from the eigenvalues of `MᵀM`.
fn svd_norm(m: [[f64; 2]; 2]) -> f64 {
    let p = m[0][0] * m[0][0] + m[1][0] * m[1][0];
    let r = m[0][1] * m[0][1] + m[1][1] * m[1][1];
    let q = m[0][0] * m[0][1] + m[1][0] * m[1][1];
    let tr = p + r;
    let det = p * r - q * q;
    (0.5 * (tr + (tr * tr - 4.0 * det).max(0.0).sqrt())).sqrt()
}

fn direct_product(theta: f64, e: f64, lambda: f64, v: &ForcingFunction, omega: f64, n: usize) -> [[f64; 2]; 2] {
    let mut m = [[1.0, 0.0], [0.0, 1.0]];
    for k in 0..n {
        let c = e - lambda * v.eval(wrap(theta + orbit_point(omega, k as i64)));
        m = [[c * m[0][0] - m[1][0], c * m[0][1] - m[1][1]], [m[0][0], m[0][1]]];
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn renormalised_log_norm_matches_direct_product(
        theta in 0.0f64..1.0,
        e in -5.0f64..5.0,
        lambda in 0.0f64..6.0,
        n in 1usize..=50,
    ) {
        let v = ForcingFunction::cos_2pi();
        let spec = RotationSpec::golden_mean();
        let direct = svd_norm(direct_product(theta, e, lambda, &v, spec.omega, n)).ln();
        let renorm = log_norm_product(theta, e, lambda, &v, &spec, n);
        prop_assert!((direct - renorm).abs() < 1e-10 * direct.abs().max(1.0), "{direct} vs {renorm}");
    }

    #[test]
    fn projective_identity_holds(theta in 0.0f64..1.0, a in -1.0f64..1.0, b in -1.0f64..1.0, n in 0usize..=100) {
        prop_assume!(a.abs() + b.abs() > 1e-3 && a.abs() > 1e-6);
        let v = ForcingFunction::cos_2pi();
        let r = projective_derivative_identity(theta, [a, b], 4.4, 4.0, &v, &RotationSpec::golden_mean(), n).unwrap();
        prop_assert!(r.gap < 1e-8, "{r:?}");
    }
}

#[test]
fn products_have_unit_determinant() {
    let v = ForcingFunction::cos_2pi();
    let omega = RotationSpec::golden_mean().omega;
    // weak coupling inside the spectrum keeps entries bounded
    for k in [1usize, 10, 100, 1000, 10_000] {
        let m = direct_product(0.3, 0.5, 0.2, &v, omega, k);
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        assert!((det - 1.0).abs() <= 1e-8 * k as f64, "k = {k}: det = {det}");
    }
    // strong coupling: compare against the squared norm
    let mut m = Mat2::IDENTITY;
    let mut log_scale = 0.0;
    for k in 0..10_000 {
        m = schrodinger_matrix(wrap(0.3 + orbit_point(omega, k)), 4.4, 4.0, &v).mul(&m);
        if k % 16 == 15 {
            let s = m.norm();
            m = m.scale(1.0 / s);
            log_scale += s.ln();
        }
    }
    let expected = (-2.0 * log_scale).exp();
    assert!((m.det() - expected).abs() <= 1e-8 * 10_000.0 * m.norm().powi(2));
}

#[test]
fn cocycle_exponent_is_half_the_repeller_exponent() {
    let v = ForcingFunction::cos_2pi();
    let spec = RotationSpec::golden_mean();
    let est = cocycle_lyapunov(4.4, 4.0, &v, &spec, 100_000, 8, 3);
    let sys = make_harper(4.4, 4.0, v, spec);
    let rep = backward_orbit_lyapunov(&sys, 0.2, 0.1, 200_000, 1000).unwrap();
    assert!((rep - 2.0 * est.mean).abs() < 0.05, "{rep} vs 2 x {}", est.mean);
}

#[test]
fn lyapunov_estimate_is_seed_deterministic() {
    let v = ForcingFunction::cos_2pi();
    let spec = RotationSpec::golden_mean();
    let a = cocycle_lyapunov(2.0, 4.0, &v, &spec, 2000, 16, 11);
    let b = cocycle_lyapunov(2.0, 4.0, &v, &spec, 2000, 16, 11);
    assert_eq!(a.mean.to_bits(), b.mean.to_bits());
}
