use std::collections::{BTreeSet, HashMap};

use proptest::prelude::*;
use qpf::circle::RotationSpec;
use qpf::timesets::*;

/// `S_n(α)` by explicit summation.
fn partial_sum(n: Option<i64>, alpha: f64) -> f64 {
    match n {
        None => alpha / (alpha - 1.0),
        Some(n) if n <= 0 => 1.0,
        Some(n) => (0..n.min(5000)).map(|i| alpha.powi(-(i as i32))).sum(),
    }
}

/// `Q_p` from its interval definition, scanning `q` upwards.
fn brute_q(d: f64, p: Option<u32>, prm: &TimeSetParams) -> u32 {
    let (a, l2) = (prm.alpha, prm.l2);
    let pi = p.map(i64::from);
    let indicator = if p == Some(0) { 0.0 } else { 1.0 };
    let s_p = partial_sum(pi, a);
    let top1 = 4.0 * prm.gamma / l2 + s_p / (a * l2) * indicator;
    if d >= top1 {
        return 0;
    }
    if d >= s_p / (a * l2) {
        return 1;
    }
    for q in 2..400u32 {
        let qi = i64::from(q);
        let lo = partial_sum(pi.map(|p| p - qi + 1), a) * a.powi(-(q as i32)) / l2;
        let hi = partial_sum(pi.map(|p| p - qi + 2), a) * a.powi(-(q as i32 - 1)) / l2;
        if lo <= d && d < hi {
            return q;
        }
    }
    panic!("no level for d = {d}");
}

fn params(alpha: f64, gamma: f64) -> TimeSetParams {
    TimeSetParams::new(alpha, gamma, 2.0, RotationSpec::golden_mean()).with_uv(8, 58)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn q_levels_match_definition(
        log_alpha in 1.0f64..12.0,
        gamma in 1e-4f64..0.25,
        j in -20_000i64..20_000,
        p in proptest::option::of(0u32..8),
    ) {
        let prm = params(10f64.powf(log_alpha), gamma);
        prop_assume!(j != 0);
        prop_assert_eq!(q_p(j, p, &prm), brute_q(prm.dist(j), p, &prm));
    }

    #[test]
    fn level_chain_holds(log_alpha in 1.0f64..12.0, gamma in 1e-4f64..0.25, j in -20_000i64..20_000) {
        let prm = params(10f64.powf(log_alpha), gamma);
        let pj = q_p(j, Some(0), &prm);
        let qi = q_p(j, None, &prm);
        let mut prev = pj;
        for p in 0..=6 {
            let q = q_p(j, Some(p), &prm);
            prop_assert!(prev <= q && q <= qi);
            prev = q;
        }
        if prm.alpha >= 2.0 {
            prop_assert!(qi <= pj + 1, "Q_inf = {qi}, p = {pj}");
        }
    }

    #[test]
    fn rle_preserves_length(bits in proptest::collection::vec(any::<bool>(), 1..300)) {
        let mut padded = vec![false];
        padded.extend(&bits);
        let runs = rle(&padded);
        prop_assert_eq!(runs.iter().sum::<usize>(), bits.len());
        prop_assert!(runs.iter().skip(1).all(|&r| r > 0));
    }
}

/// Regular sets rebuilt from the recursive definition with plain sets.
struct Oracle<'a> {
    t: &'a TimeSetTable,
    memo: HashMap<i64, BTreeSet<i64>>,
}

impl Oracle<'_> {
    fn j_interval(&self, m: i64) -> Option<(i64, i64)> {
        let p = self.t.p(m);
        if p == 0 {
            return None;
        }
        Some((m - self.t.l_minus(p)?, m + self.t.l_plus(p)?))
    }

    fn a_set(&self, n: i64) -> BTreeSet<i64> {
        let mut s: BTreeSet<i64> = (1..=n).collect();
        for m in 1..n {
            if let Some((a, b)) = self.j_interval(m) {
                for k in a..=b {
                    s.remove(&k);
                }
            }
        }
        s
    }

    fn admissible(&self, n: i64) -> bool {
        self.a_set(n).contains(&n)
    }

    fn r_set(&mut self, n: i64) -> BTreeSet<i64> {
        if let Some(r) = self.memo.get(&n) {
            return r.clone();
        }
        let a = self.a_set(n);
        let mut r = a.clone();
        let mut k = 1;
        while k <= n {
            if a.contains(&k) {
                k += 1;
                continue;
            }
            let start = k;
            while k <= n && !a.contains(&k) {
                k += 1;
            }
            let (lo, hi) = (start, k - 1);
            let p_max = (lo..=hi).map(|j| self.t.p(j)).max().unwrap();
            let m = (lo..=hi).find(|&j| self.t.p(j) == p_max).unwrap();
            let lp = self.t.l_plus(p_max).unwrap_or(0);
            if p_max == 0 || lp == 0 || lp >= n {
                continue;
            }
            for x in self.r_set(lp) {
                if m + x <= n {
                    r.insert(m + x);
                }
            }
        }
        self.memo.insert(n, r.clone());
        r
    }
}

#[test]
fn regular_sets_match_recursive_definition() {
    let mut total_recursive = 0;
    for (alpha, gamma) in [(1e4, 2e-3), (1e6, 1e-3), (1e9, 2e-4)] {
        let t = TimeSetTable::build(params(alpha, gamma), 3000, 3000).unwrap();
        let mut oracle = Oracle { t: &t, memo: HashMap::new() };
        let (mut checked, mut recursive) = (0, 0);
        for n in (1..=1500).step_by(7) {
            assert_eq!(t.is_admissible(n), oracle.admissible(n), "alpha = {alpha}, N = {n}");
            if !t.is_admissible(n) {
                continue;
            }
            let lib: BTreeSet<i64> = (1..=n).filter(|&k| t.regular_set(n).unwrap().contains(k)).collect();
            assert_eq!(lib, oracle.r_set(n), "alpha = {alpha}, N = {n}");
            checked += 1;
            if lib.len() > oracle.a_set(n).len() {
                recursive += 1;
            }
        }
        println!("alpha = {alpha}: {checked} admissible, {recursive} with recursive parts");
        assert!(checked > 10);
        total_recursive += recursive;
    }
    assert!(total_recursive > 0);
}

#[test]
fn exceptional_intervals_are_disjoint_for_neighbouring_levels() {
    let t = TimeSetTable::build(params(1e9, 2e-4), 10_000, 10_000).unwrap();
    assert!(!t.any_l_fallback());
    let ivs: Vec<(i64, i64, u32)> =
        (1..=10_000).filter_map(|m| t.exceptional(m).map(|(a, b)| (a - 1, b + 1, t.p(m)))).collect();
    assert!(!ivs.is_empty());
    for (i, x) in ivs.iter().enumerate() {
        for y in &ivs[i + 1..] {
            if x.2.abs_diff(y.2) <= 1 {
                assert!(y.0 > x.1 || x.0 > y.1, "{x:?} and {y:?}");
            }
        }
    }
}

#[test]
fn impossible_parameters_are_refused_in_strict_mode() {
    let prm = params(10.0, 0.5).strict(true);
    let err = TimeSetTable::build(prm, 100, 100).unwrap_err().to_string();
    assert!(err.contains("gamma0"), "{err}");
}
