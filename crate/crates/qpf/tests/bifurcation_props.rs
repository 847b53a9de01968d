use proptest::prelude::*;
use qpf::bifurcation::*;
use qpf::circle::{circle_dist, orbit_point, RotationSpec};
use qpf::graphs::{iterate_boundary_on, Boundary};
use qpf::systems::*;

fn golden() -> RotationSpec {
    RotationSpec::golden_mean()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn xi_is_monotone_in_beta(
        b1 in 0.0f64..1.5,
        db in 0.0f64..0.5,
        l in 0i64..40,
        n in 0i64..40,
        log_alpha in 1.0f64..4.0,
    ) {
        let sys = make_rescaled_arctan(10f64.powf(log_alpha), golden()).at(0.0);
        let a = xi(&sys, b1, l, n);
        let b = xi(&sys, b1 + db, l, n);
        prop_assert!(b <= a + 1e-12, "{a} -> {b}");
        if n >= 1 && db > 1e-6 {
            prop_assert!(b < a);
        }
    }

    #[test]
    fn orbits_below_minus_inverse_alpha_stay_there(
        beta in 0.0f64..1.5,
        l in 0i64..40,
        n in 0i64..200,
        log_alpha in 1.0f64..4.0,
    ) {
        let alpha = 10f64.powf(log_alpha);
        let sys = make_rescaled_arctan(alpha, golden()).at(beta);
        let traj = xi_trajectory(&sys, beta, l, n);
        if let Some(k) = traj.iter().position(|&x| x < -1.0 / alpha) {
            prop_assert!(traj[k..].iter().all(|&x| x < -1.0 / alpha));
        }
    }

    #[test]
    fn basic_estimate(beta in 0.0f64..1.04, l in 0i64..60, n in 1i64..80) {
        let alpha = 1e4;
        let gamma = 1.0 / 32.0;
        let sys = make_rescaled_arctan(alpha, golden()).with_gamma(gamma).at(beta);
        let traj = xi_trajectory(&sys, beta, l, n);
        for j in -l..n {
            if circle_dist(orbit_point(sys.omega(), j), 0.0) < 3.0 * gamma / 2.0 {
                continue;
            }
            let (x, y) = (traj[(j + l) as usize], traj[(j + l + 1) as usize]);
            if x >= 1.0 / alpha {
                prop_assert!(y >= gamma, "j = {j}: {x} -> {y}");
            }
            if x <= -1.0 / alpha {
                prop_assert!(y <= -gamma, "j = {j}: {x} -> {y}");
            }
        }
    }

    #[test]
    fn zeta_mirrors_xi(beta in 0.0f64..2.0, l in 0i64..50) {
        let sys = make_symmetric(10.0, beta, golden());
        prop_assert!(symmetric_zeta_check(&sys, beta, l, 500) < 1e-11);
    }
}

#[test]
fn zeta_gap_vanishes_without_forcing() {
    let sys = make_symmetric(10.0, 0.0, golden());
    assert_eq!(symmetric_zeta_check(&sys, 0.0, 20, 200), 0.0);
}

#[test]
fn zeta_gap_detects_broken_symmetry() {
    let mut sys = make_symmetric(10.0, 1.645, golden());
    if let FibreMap::Additive { forcing, .. } = &mut sys.map {
        // an even harmonic survives the half shift
        let base = forcing.clone();
        let f = move |t: f64| base.eval(t) + 0.01 * (4.0 * std::f64::consts::PI * t).cos();
        *forcing = ForcingFunction::custom(std::sync::Arc::new(f), 4.2, 4.0, vec![0.0], (-1.01, 1.01));
    }
    assert!(symmetric_zeta_check(&sys, 1.645, 0, 200) > 1e-6);
}

#[test]
fn solved_beta_hits_target() {
    let fam = make_rescaled_arctan(1e4, golden()).with_gamma(1.0 / 32.0);
    let sys = fam.at(1.0);
    for (l, n) in [(5, 3), (12, 20), (30, 30)] {
        let b = solve_beta(&sys, l, n, 1.0 / 1e4, (1.0, 1.03)).unwrap();
        let below = xi(&sys, b - 1e-9, l, n);
        let above = xi(&sys, b + 1e-9, l, n);
        assert!(below >= 1e-4 && above <= 1e-4, "l = {l}, n = {n}: {below}, {above}");
    }
}

#[test]
fn first_iterate_approaches_upper_graph() {
    let fam = make_rescaled_arctan(100.0, golden());
    let opts = EscapeOptions { n_max: 5000, grid: 512 };
    let br = critical_beta(|b| fam.at(b), 1.0, 1.5, 1e-8, &opts).unwrap();
    let sys = fam.at(br.mid());
    let omega = sys.omega();
    let upper = iterate_boundary_on(&sys, Boundary::Upper, 20_000, &[omega]).values[0];
    let gaps: Vec<f64> = [8i64, 16, 24]
        .iter()
        .map(|&l| (xi(&sys, br.mid(), l, 1) - upper).abs())
        .collect();
    assert!(gaps.windows(2).all(|w| w[1] <= w[0]) && gaps[2] < 1e-12, "{gaps:?}");
}
