use proptest::prelude::*;
use qpf::circle::*;
use rug::Float;

fn exact_orbit_point(omega: f64, n: i64) -> f64 {
    let mut x = Float::with_val(256, omega);
    x *= n;
    let fl = x.clone().floor();
    x -= fl;
    x.to_f64()
}

proptest! {
    #[test]
    fn dist_is_symmetric_and_vanishes_on_diagonal(a in -5.0f64..5.0, b in -5.0f64..5.0) {
        prop_assert_eq!(circle_dist(a, b), circle_dist(b, a));
        prop_assert_eq!(circle_dist(a, a), 0.0);
        prop_assert!(circle_dist(a, b) <= 0.5);
    }

    #[test]
    fn wrap_lands_in_unit_interval(x in -1e6f64..1e6) {
        let w = wrap(x);
        prop_assert!((0.0..1.0).contains(&w));
        prop_assert!(circle_dist(w, x) < 1e-9);
    }

    #[test]
    fn orbit_point_is_additive(m in -1_000_000i64..=1_000_000, n in -1_000_000i64..=1_000_000) {
        let spec = RotationSpec::golden_mean();
        let lhs = spec.orbit_point(m + n);
        let rhs = wrap(spec.orbit_point(m) + spec.orbit_point(n));
        prop_assert!(circle_dist(lhs, rhs) < 1e-12);
    }

    #[test]
    fn orbit_point_matches_multiprecision(n in -100_000_000i64..=100_000_000) {
        let omega = RotationSpec::golden_mean().omega;
        let got = orbit_point(omega, n);
        prop_assert!(circle_dist(got, exact_orbit_point(omega, n)) < 1e-15);
    }
}

#[test]
fn golden_records_are_fibonacci() {
    let omega = RotationSpec::golden_mean().omega;
    let mut best = f64::INFINITY;
    let mut brute = vec![];
    for n in 1..=10_000i64 {
        let x = exact_orbit_point(omega, n);
        let d = x.min(1.0 - x);
        if d < best {
            best = d;
            brute.push(n);
        }
    }
    let mut fib = vec![1i64, 2];
    while fib[fib.len() - 1] + fib[fib.len() - 2] <= 10_000 {
        fib.push(fib[fib.len() - 1] + fib[fib.len() - 2]);
    }
    assert_eq!(brute, fib);
    let got: Vec<i64> = record_returns(&RotationSpec::golden_mean(), 10_000).iter().map(|r| r.0).collect();
    assert_eq!(got, fib);
}

#[test]
fn golden_partial_quotients_are_ones() {
    let (cf, _) = continued_fraction(RotationSpec::golden_mean().omega, 20);
    assert!(cf.len() >= 20 && cf.iter().all(|&a| a == 1), "{cf:?}");
}

#[test]
fn fitted_diophantine_pair_holds() {
    let spec = RotationSpec::golden_mean();
    let fit = estimate_dioph(&spec, 10_000);
    assert!(fit.holds);
    assert!((fit.d - 1.0).abs() < 0.05, "{}", fit.d);
}
