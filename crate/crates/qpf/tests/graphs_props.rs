use proptest::prelude::*;
use qpf::circle::{orbit_point, wrap, RotationSpec};
use qpf::graphs::*;
use qpf::systems::*;

fn golden() -> RotationSpec {
    RotationSpec::golden_mean()
}

/// Direct forward iteration from fibre `θ − nω`, independent of the library's
/// pushforward.
fn naive_iterate(sys: &QpfSystem, theta: f64, x0: f64, n: usize) -> f64 {
    let start = wrap(theta - orbit_point(sys.omega(), n as i64));
    let mut x = x0;
    for i in 0..n {
        x = sys.apply(wrap(start + orbit_point(sys.omega(), i as i64)), x);
    }
    x
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn upper_iterates_decrease_with_beta(b1 in 0.5f64..1.0, db in 0.0f64..0.3, n in 1usize..60) {
        let grid = uniform_grid(64);
        let a = iterate_boundary_on(&make_arctan_family(10.0, b1, golden()), Boundary::Upper, n, &grid);
        let b = iterate_boundary_on(&make_arctan_family(10.0, b1 + db, golden()), Boundary::Upper, n, &grid);
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!(y <= x);
        }
    }

    #[test]
    fn grid_iterates_match_naive_orbits(theta in 0.0f64..1.0, n in 0usize..200) {
        let sys = make_arctan_family(10.0, 0.95, golden());
        let g = iterate_boundary_on(&sys, Boundary::Upper, n, &[theta]);
        let expected = naive_iterate(&sys, theta, 3.0, n);
        prop_assert!((g.values[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn preimages_recover_the_point(theta in 0.0f64..1.0, x in -2.0f64..2.0, n in 1usize..200) {
        let sys = make_arctan_family(10.0, 0.9, golden());
        let mut y = x;
        for k in 1..=n {
            let t = wrap(theta - orbit_point(sys.omega(), k as i64));
            let Ok(pre) = sys.inverse(t, y) else { break };
            prop_assert!((sys.apply(t, pre) - y).abs() < 1e-10);
            y = pre;
        }
        if let Ok(pre) = pullback(&sys, theta, x, 1) {
            prop_assert!((sys.apply(theta, pre) - x).abs() < 1e-10);
        }
    }
}

#[test]
fn upper_bounding_graph_exponent_is_non_positive() {
    let grid = uniform_grid(512);
    for beta in [0.5, 0.8, 0.9, 0.95] {
        let sys = make_arctan_family(10.0, beta, golden());
        let g = converge_boundary(&sys, Boundary::Upper, &grid, 1e-12, 64, 1 << 14);
        let lyap = graph_lyapunov(&sys, &g, 1e-9).unwrap();
        assert!(lyap <= 0.01, "beta = {beta}: {lyap}");
        let orbit = orbit_lyapunov(&sys, 0.1, 3.0, 100_000, 1000);
        assert!(orbit <= 0.01, "beta = {beta}: {orbit}");
    }
}

#[test]
fn converged_graph_residual_is_small() {
    let grid = uniform_grid(1024);
    let sys = make_arctan_family(10.0, 0.8, golden());
    let g = converge_boundary(&sys, Boundary::Upper, &grid, 1e-13, 64, 1 << 14);
    // interpolation error: largest jump between neighbouring samples
    let interp = g.values.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
    assert!(g.residual < 10.0 * interp, "{} vs {}", g.residual, interp);
}
