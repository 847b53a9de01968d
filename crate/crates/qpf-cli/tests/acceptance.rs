//! Acceptance run: one PASS/FAIL line per criterion, executed in order on a
//! single thread of control so that timings are meaningful.

use std::f64::consts::{LN_10, LN_2, PI};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use qpf::bifurcation::*;
use qpf::circle::{orbit_point, RotationSpec};
use qpf::cocycle::{cocycle_lyapunov, e_c_inverse, lambda_c, projective_derivative_identity};
use qpf::graphs::{iterate_boundary, iterate_boundary_on, merge_grids, orbit_lyapunov, uniform_grid, Boundary};
use qpf::peaks::{detect_peaks, track_peaks};
use qpf::systems::*;
use qpf::timesets::{TimeSetParams, TimeSetTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria expected to fail; each has an entry in the decisions log.
const KNOWN_FAILURES: &[u32] = &[3];

// The stderr handle is not captured by the test harness.
macro_rules! report {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stderr(), $($arg)*);
    }};
}

struct Verdict {
    id: u32,
    pass: bool,
    detail: String,
    elapsed: Duration,
}

fn golden() -> RotationSpec {
    RotationSpec::golden_mean()
}

/// Runs one criterion; a time limit, if given, is part of the verdict.
fn timed(id: u32, limit: Option<Duration>, f: impl FnOnce() -> (bool, String)) -> Verdict {
    let t = Instant::now();
    let (mut pass, mut detail) = f();
    let elapsed = t.elapsed();
    if let Some(l) = limit {
        if elapsed > l {
            pass = false;
            detail = format!("{detail}; over the {} s limit", l.as_secs());
        }
    }
    let v = Verdict { id, pass, detail, elapsed };
    report!(
        "criterion {:>2}: {} ({:.1} s) {}",
        v.id,
        if v.pass { "PASS" } else { "FAIL" },
        v.elapsed.as_secs_f64(),
        v.detail
    );
    v
}

fn c1_identity() -> (bool, String) {
    let v = ForcingFunction::cos_2pi();
    let spec = golden();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let theta: f64 = rng.gen();
        let phi = rng.gen_range(-0.49..0.49) * PI;
        let r = projective_derivative_identity(theta, [phi.cos(), phi.sin()], 4.4, 4.0, &v, &spec, 100).unwrap();
        worst = worst.max(r.gap);
    }
    (worst < 1e-8, format!("worst relative gap {worst:.3e}"))
}

fn c2_herman() -> (bool, String) {
    let v = ForcingFunction::cos_2pi();
    let floor = LN_2 - 0.05;
    let mut ok = true;
    let mut parts = vec![];
    for e in [0.0, 2.0, 4.3, 4.4] {
        let est = cocycle_lyapunov(e, 4.0, &v, &golden(), 100_000, 64, 2);
        ok &= est.mean >= floor;
        parts.push(format!("E={e}: {:.5}", est.mean));
    }
    (ok, format!("{} (bound {floor:.5})", parts.join(", ")))
}

fn arctan_bracket(alpha: f64, tol: f64) -> BetaBracket {
    critical_beta(|b| make_arctan_family(alpha, b, golden()), 0.5, 1.5, tol, &EscapeOptions::default()).unwrap()
}

fn c3_bracket(br: &BetaBracket) -> (bool, String) {
    let ok = br.lo > 0.9710325 && br.hi < 1.0;
    (ok, format!("bracket [{:.9}, {:.9}] against (0.9710325, 1.0)", br.lo, br.hi))
}

fn c4_monotone() -> (bool, String) {
    let b: Vec<BetaBracket> = [10.0, 20.0, 40.0].iter().map(|&a| arctan_bracket(a, 1e-4)).collect();
    let ok = b[0].hi < b[1].lo && b[1].hi < b[2].lo;
    let s: Vec<String> = b.iter().map(|x| format!("[{:.5}, {:.5}]", x.lo, x.hi)).collect();
    (ok, format!("alpha 10, 20, 40: {}", s.join(" < ")))
}

fn c5_c6_collision(br: &BetaBracket) -> ((bool, String), (bool, String)) {
    let report = classify_and_scale(|b| make_arctan_family(10.0, b, golden()), br, &ScalingOptions::default());
    match report {
        Ok(r) => {
            let c5 = r.lyap_upper < -0.05 && r.lyap_middle > 0.05;
            let c6 = (0.8..=1.2).contains(&r.exponent) && r.r2 > 0.95;
            (
                (c5, format!("lambda(upper) {:.4}, lambda(middle) {:.4} at beta {:.9}", r.lyap_upper, r.lyap_middle, r.beta_eval)),
                (c6, format!("exponent {:.4}, R^2 {:.7}", r.exponent, r.r2)),
            )
        }
        Err(e) => ((false, e.to_string()), (false, "classification failed".into())),
    }
}

fn c7_pinched_exactness() -> (bool, String) {
    let sys = make_pinched(10.0, golden());
    let omega = sys.omega();
    let n = 30usize;
    let orbit: Vec<f64> = (1..=n as i64).map(|j| orbit_point(omega, j)).collect();
    let grid = merge_grids(&[uniform_grid(4096), orbit.clone()]);
    let idx: Vec<usize> = orbit
        .iter()
        .map(|&t| grid.iter().position(|&g| g == t).expect("orbit point on the grid"))
        .collect();
    let mut worst: f64 = 0.0;
    let mut steps = vec![];
    for k in 1..=n {
        let g = iterate_boundary_on(&sys, Boundary::Upper, k, &grid);
        for &i in &idx[..k] {
            worst = worst.max(g.values[i].abs());
        }
        steps.push(detect_peaks(&g, 1e-6));
    }
    let track = track_peaks(&steps, omega, 2.0 / 4096.0);
    let one_each = track.new_per_step.iter().all(|&c| c == 1);
    (
        worst <= 1e-12 && one_each,
        format!("max |phi_k(omega_j)| = {worst:.1e}, new peaks per step {:?}", track.new_per_step),
    )
}

fn c8_zero_line() -> (bool, String) {
    let sys = make_pinched(10.0, golden());
    let measured = orbit_lyapunov(&sys, 0.1234, 0.0, 1_000_000, 0);
    let target = LN_10 - LN_2;
    ((measured - target).abs() < 0.02, format!("measured {measured:.7}, log 10 - log 2 = {target:.7}"))
}

fn c9_timesets() -> (bool, String) {
    const WATCHED: [&str; 6] =
        ["pjestimates_lower", "pjestimates_upper", "jmndisjointness", "omegatransition_b", "regularstabilized", "regsets_a"];
    let mut ok = true;
    let mut parts = vec![];
    for (alpha, gamma, expect_strict) in [(1e9, 2e-4, true), (100.0, 1.0 / 16.0, false), (1e4, 0.25, false)] {
        let prm = TimeSetParams::new(alpha, gamma, 2.0, golden()).with_uv(8, 58);
        let strict_ok = prm.failing_strict().is_empty();
        ok &= strict_ok == expect_strict;
        let table = TimeSetTable::build(prm, 10_000, 10_000).unwrap();
        let rep = table.verify_lemmas(400);
        ok &= rep.asserted_pass();
        let w: Vec<String> = WATCHED
            .iter()
            .map(|name| {
                let l = rep.get(name).expect("lemma present");
                format!("{name} {}/{}{}", l.counterexamples, l.checked, if l.asserted { "" } else { "*" })
            })
            .collect();
        parts.push(format!("({alpha:e}, {gamma}) strict={strict_ok}: {}", w.join(", ")));
    }
    (ok, format!("{} [counterexamples/checked, * = hypotheses fail]", parts.join("; ")))
}

fn c10_symmetric() -> (bool, String) {
    let mut ok = true;
    let mut parts = vec![];
    for beta in [1.2, 1.645, 1.9] {
        let sys = make_symmetric(10.0, beta, golden());
        let zeta = [0, 20, 100].iter().map(|&l| symmetric_zeta_check(&sys, beta, l, 500)).fold(0.0, f64::max);
        let gap = symmetric_graph_gap(&sys, 2048, 2000).unwrap();
        let up = iterate_boundary(&sys, Boundary::Upper, 2000, 2048).residual;
        let lo = iterate_boundary(&sys, Boundary::Lower, 2000, 2048).residual;
        let grid_err = up.max(lo).max(f64::EPSILON);
        ok &= zeta <= 1e-11 && gap <= 2.0 * grid_err;
        parts.push(format!("beta {beta}: zeta {zeta:.1e}, graph gap {gap:.1e} (grid error {grid_err:.1e})"));
    }
    (ok, parts.join("; "))
}

fn c11_sink_source() -> (bool, String) {
    let alpha = 100.0;
    let gamma = 1.0 / 16.0;
    let sys = make_rescaled_arctan(alpha, golden()).with_gamma(gamma).at(1.0);
    let mut table = TimeSetTable::build(TimeSetParams::new(alpha, gamma, 2.0, golden()), 3000, 3000).unwrap();
    table.ensure_ls(3).unwrap();
    match sink_source_search(&sys, &table, 3, Mode::Empirical) {
        Ok(found) => {
            let mut ok = found.len() == 3;
            let mut parts = vec![];
            for c in &found {
                let fwd = c.profile.forward.len() as i64 == c.l_plus && c.profile.forward.iter().all(|&x| x > 0.0);
                let bwd = c.profile.backward.len() as i64 == c.l_minus && c.profile.backward.iter().all(|&x| x > 0.0);
                ok &= fwd && bwd;
                parts.push(format!(
                    "p={} (l-={}, l+={}): beta {:.12}, min fwd {:.4}, min bwd {:.4}",
                    c.p, c.l_minus, c.l_plus, c.beta, c.min_forward, c.min_backward
                ));
            }
            (ok, parts.join("; "))
        }
        Err(e) => (false, e.to_string()),
    }
}

fn c12_induction_start() -> (bool, String) {
    let alpha = 1e4;
    let sys = make_rescaled_arctan(alpha, golden()).with_gamma(1.0 / 32.0).at(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut pairs = vec![];
    while pairs.len() < 200 {
        let (l, n) = (rng.gen_range(0..=30i64), rng.gen_range(1..=30i64));
        if start_hypothesis(&sys, l, n).unwrap() {
            pairs.push((l, n));
        }
    }
    let mut bad = vec![];
    let mut samples = 0;
    for &(l, n) in &pairs {
        match induction_start_check(&sys, l, n, 3, Mode::Empirical) {
            Ok(r) => {
                samples += r.samples.len();
                if !r.samples.iter().all(|s| s.past_ok && s.regular_ok && s.window_ok) {
                    bad.push((l, n));
                }
            }
            Err(_) => bad.push((l, n)),
        }
    }
    let distinct: std::collections::BTreeSet<_> = pairs.iter().collect();
    (
        bad.is_empty(),
        format!("200 pairs ({} distinct), {samples} parameters checked, failures {bad:?}", distinct.len()),
    )
}

fn c13_harper() -> (bool, String) {
    let v = ForcingFunction::peak(4.0, 0.0);
    let spec = golden();
    let opts = EscapeOptions::default();
    let tol = 1e-3;
    let crit: Vec<_> = [6.0, 8.0, 10.0].iter().map(|&e| lambda_c(e, &v, &spec, tol, &opts).unwrap()).collect();
    let mut ok = crit[0].lambda_hi < crit[1].lambda_lo && crit[1].lambda_hi < crit[2].lambda_lo;
    let mut parts = vec![];
    for c in &crit {
        let mid = 0.5 * (c.lambda_lo + c.lambda_hi);
        let (lo, hi) = e_c_inverse(mid, &v, &spec, (5.0, 12.0), tol, &opts).unwrap();
        ok &= lo - tol <= c.e && c.e <= hi + tol;
        parts.push(format!("E={}: lambda_c [{:.5}, {:.5}], E_c [{lo:.5}, {hi:.5}]", c.e, c.lambda_lo, c.lambda_hi));
    }
    (ok, parts.join("; "))
}

fn qpf_bin() -> &'static str {
    env!("CARGO_BIN_EXE_qpf")
}

fn recipe(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("recipes").join(name)
}

fn run_into(dir: &Path, args: &[&str]) -> bool {
    let _ = std::fs::remove_dir_all(dir);
    let st = Command::new(qpf_bin()).args(args).arg("--out").arg(dir).output().expect("spawn qpf");
    st.status.success()
}

fn same_files(a: &Path, b: &Path) -> Result<usize, String> {
    let mut names: Vec<_> = std::fs::read_dir(a).map_err(|e| e.to_string())?.map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for n in &names {
        let x = std::fs::read(a.join(n)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.join(n)).map_err(|e| format!("{n:?}: {e}"))?;
        if x != y {
            return Err(format!("{n:?} differs"));
        }
    }
    Ok(names.len())
}

fn c14_determinism() -> (bool, String) {
    let root = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance-determinism");
    let pinched = recipe("pinched-boundary-iterates.toml");
    let harper = recipe("harper-critical-energy.toml");
    let runs: Vec<(&str, Vec<String>)> = vec![
        ("peaks", vec!["peaks".into(), "-c".into(), pinched.display().to_string(), "--seed".into(), "5".into()]),
        (
            "harper",
            vec!["harper".into(), "-c".into(), harper.display().to_string(), "--seed".into(), "5".into(), "--grid".into(), "512".into()],
        ),
        (
            "cocycle",
            vec!["cocycle".into(), "--seed".into(), "5".into(), "--set".into(), "cocycle.n=5000".into()],
        ),
    ];
    let mut parts = vec![];
    let mut ok = true;
    for (label, args) in &runs {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let a = root.join(format!("{label}-a"));
        let b = root.join(format!("{label}-b"));
        let mut threaded = args.clone();
        threaded.extend(["--threads", "3"]);
        if !(run_into(&a, &args) && run_into(&b, &threaded)) {
            ok = false;
            parts.push(format!("{label}: run failed"));
            continue;
        }
        match same_files(&a, &b) {
            Ok(k) => parts.push(format!("{label}: {k} identical files")),
            Err(e) => {
                ok = false;
                parts.push(format!("{label}: {e}"));
            }
        }
    }
    (ok, parts.join(", "))
}

#[test]
fn acceptance() {
    let secs = |s: u64| Some(Duration::from_secs(s));
    let mut v = vec![];
    v.push(timed(1, secs(1), c1_identity));
    v.push(timed(2, secs(10), c2_herman));
    let mut bracket = None;
    v.push(timed(3, secs(120), || {
        let br = arctan_bracket(10.0, 1e-5);
        bracket = Some(br);
        c3_bracket(&br)
    }));
    let br = bracket.expect("bracket computed");
    v.push(timed(4, secs(600), c4_monotone));
    let t = Instant::now();
    let (r5, r6) = c5_c6_collision(&br);
    report!("             criteria 5 and 6 share one {:.1} s run", t.elapsed().as_secs_f64());
    v.push(timed(5, None, || r5));
    v.push(timed(6, None, || r6));
    v.push(timed(7, None, c7_pinched_exactness));
    v.push(timed(8, None, c8_zero_line));
    v.push(timed(9, secs(60), c9_timesets));
    v.push(timed(10, None, c10_symmetric));
    v.push(timed(11, secs(300), c11_sink_source));
    v.push(timed(12, None, c12_induction_start));
    v.push(timed(13, secs(600), c13_harper));
    v.push(timed(14, None, c14_determinism));

    report!("summary:");
    for x in &v {
        report!("  {:>2} {}", x.id, if x.pass { "PASS" } else { "FAIL" });
    }
    let unexpected: Vec<u32> = v.iter().filter(|x| !x.pass && !KNOWN_FAILURES.contains(&x.id)).map(|x| x.id).collect();
    assert!(unexpected.is_empty(), "unexpected failures: {unexpected:?}");
}
