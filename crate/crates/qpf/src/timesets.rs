//! Integer combinatorics of close returns: approximating sets `Ω_p`,
//! exceptional intervals `J(m)`, admissible times and regular times.
//!
//! A [`TimeSetTable`] is built once for an integer window `[−M, N]` and is
//! immutable afterwards. Distances `d(ω_j, 0)` (or `d(ω_j, {0, ½})` in
//! symmetric mode) are evaluated on an extended window so that every set
//! membership reported inside `[−M, N]` is exact.
//!
//! Levels `p` are passed as `Option<u32>`, with `None` standing for `p = ∞`.

use std::collections::HashMap;

use serde::Serialize;

use crate::circle::{circle_dist, RotationSpec};
use crate::error::{QpfError, Result};
use crate::systems::{s_infinity, HypothesisCheck};

/// Geometric partial sum `S_n(α) = Σ_{i<n} α^{−i}`; `S_n = 1` for `n ≤ 0`
/// and `S_∞ = α/(α − 1)` for `n = None`.
pub fn s_alpha(n: Option<i64>, alpha: f64) -> f64 {
    match n {
        None => s_infinity(alpha),
        Some(n) if n <= 0 => 1.0,
        Some(n) => {
            let r = 1.0 / alpha;
            if n > 4096 {
                return s_infinity(alpha);
            }
            (1.0 - r.powi(n as i32)) / (1.0 - r)
        }
    }
}

/// Parameters of the recurrence combinatorics.
#[derive(Debug, Clone, Serialize)]
pub struct TimeSetParams {
    pub alpha: f64,
    pub gamma: f64,
    pub l2: f64,
    pub u: i64,
    pub v: i64,
    pub spec: RotationSpec,
    /// Measure distances to `{0, ½}` instead of `{0}`.
    pub symmetric: bool,
    /// Refuse parameters that violate the standing predicates.
    pub strict: bool,
}

impl TimeSetParams {
    /// Empirical-mode parameters with `(u, v) = (8, 58)`.
    pub fn new(alpha: f64, gamma: f64, l2: f64, spec: RotationSpec) -> Self {
        TimeSetParams { alpha, gamma, l2, u: 8, v: 58, spec, symmetric: false, strict: false }
    }

    pub fn with_uv(mut self, u: i64, v: i64) -> Self {
        self.u = u;
        self.v = v;
        self
    }

    pub fn symmetric(mut self, on: bool) -> Self {
        self.symmetric = on;
        self
    }

    pub fn strict(mut self, on: bool) -> Self {
        self.strict = on;
        self
    }

    pub fn u_tilde(&self) -> i64 {
        self.u + 2
    }

    pub fn v_tilde(&self) -> i64 {
        self.v + 2
    }

    pub fn w(&self) -> i64 {
        self.u + self.v + 5
    }

    pub fn sigma(&self) -> f64 {
        (self.u + 3) as f64 / (self.u + self.v) as f64
    }

    /// Distance of `ω_j` to the target set.
    pub fn dist(&self, j: i64) -> f64 {
        let x = self.spec.orbit_point(j);
        let d0 = circle_dist(x, 0.0);
        if self.symmetric {
            d0.min(circle_dist(x, 0.5))
        } else {
            d0
        }
    }

    /// Constant predicates the combinatorics depend on.
    pub fn predicates(&self) -> Vec<HypothesisCheck> {
        let (a, g) = (self.alpha, self.gamma);
        let s = s_infinity(a);
        let chk = |name, holds: bool, w: String| HypothesisCheck { name, holds, witness: (!holds).then_some(w) };
        vec![
            chk("gamma0", g <= 1.0 / 16.0, format!("gamma = {g}")),
            chk(
                "alphagamma0",
                a.sqrt() > 4.0 / g && 4.0 / g >= 64.0,
                format!("sqrt(alpha) = {}, 4/gamma = {}", a.sqrt(), 4.0 / g),
            ),
            chk("u", self.u >= 8, format!("u = {}", self.u)),
            chk("v", self.v >= 8, format!("v = {}", self.v)),
            chk("sigma", self.sigma() <= 1.0 / 6.0 + 1e-15, format!("sigma = {}", self.sigma())),
            chk("alpha2", a >= s + 1.0, format!("alpha = {a}")),
            chk("alphagamma1", g >= (s + 1.0) / a, format!("(S+1)/alpha = {}", (s + 1.0) / a)),
        ]
    }

    /// Names of violated strict-mode predicates.
    pub fn failing_strict(&self) -> Vec<&'static str> {
        self.predicates()
            .into_iter()
            .filter(|c| !c.holds && matches!(c.name, "gamma0" | "alphagamma0" | "u" | "v" | "sigma"))
            .map(|c| c.name)
            .collect()
    }
}

/// `Q_p` evaluated from a precomputed distance.
pub fn q_from_dist(d: f64, p: Option<u32>, prm: &TimeSetParams) -> u32 {
    let (a, l2) = (prm.alpha, prm.l2);
    let sp = s_alpha(p.map(i64::from), a);
    let thr1 = sp / (a * l2);
    let thr0 = 4.0 * prm.gamma / l2 + if p == Some(0) { 0.0 } else { thr1 };
    if d >= thr0 {
        return 0;
    }
    if d >= thr1 {
        return 1;
    }
    let mut q: u32 = 2;
    loop {
        let s = s_alpha(p.map(|p| i64::from(p) - i64::from(q) + 1), a);
        let lower = s * a.powi(-(q as i32)) / l2;
        if d >= lower || q >= 100_000 {
            return q;
        }
        q += 1;
    }
}

/// `Q_p(j)`; `Q_p(0) = 0`.
pub fn q_p(j: i64, p: Option<u32>, prm: &TimeSetParams) -> u32 {
    if j == 0 {
        0
    } else {
        q_from_dist(prm.dist(j), p, prm)
    }
}

/// Which half of `Ω_p(j)` to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Part {
    Minus,
    Plus,
    Both,
}

/// Membership bitset over an integer interval.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Membership {
    pub lo: i64,
    pub bits: Vec<bool>,
}

impl Membership {
    pub fn hi(&self) -> i64 {
        self.lo + self.bits.len() as i64 - 1
    }

    pub fn contains(&self, j: i64) -> bool {
        j >= self.lo && j <= self.hi() && self.bits[(j - self.lo) as usize]
    }

    pub fn in_range(&self, j: i64) -> bool {
        j >= self.lo && j <= self.hi()
    }

    pub fn count_in(&self, a: i64, b: i64) -> usize {
        (a.max(self.lo)..=b.min(self.hi())).filter(|&j| self.contains(j)).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = i64> + '_ {
        self.bits.iter().enumerate().filter(|(_, &b)| b).map(move |(i, _)| self.lo + i as i64)
    }
}

/// Chosen lengths `l^±_q` with a flag for values found outside the
/// mandated ranges `[u·q, ũ·q)` and `[v·q, ṽ·q)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LChoice {
    pub l_minus: i64,
    pub l_plus: i64,
    pub fallback_minus: bool,
    pub fallback_plus: bool,
}

/// Smallest `l^±_q` with `−l, −l−1 ∉ Ω_∞` (resp. `l, l+1 ∉ Ω_∞`), inside the
/// mandated range and not below the previous choice.
///
/// In strict mode a missing value is an error. Otherwise the search
/// continues up to `limit`, and if that fails the lower bound is used; both
/// cases are flagged.
pub fn choose_l(
    q: u32,
    prm: &TimeSetParams,
    omega_inf: &dyn Fn(i64) -> bool,
    prev: (i64, i64),
    limit: i64,
) -> Result<LChoice> {
    if q == 0 {
        return Ok(LChoice { l_minus: 0, l_plus: 0, fallback_minus: false, fallback_plus: false });
    }
    let q = i64::from(q);
    let pick = |lo: i64, hi_excl: i64, sign: i64| -> (i64, bool, bool) {
        let ok = |l: i64| !omega_inf(sign * l) && !omega_inf(sign * (l + 1));
        if let Some(l) = (lo..hi_excl).find(|&l| ok(l)) {
            return (l, false, true);
        }
        if let Some(l) = (hi_excl.max(lo)..limit).find(|&l| ok(l)) {
            return (l, true, true);
        }
        (lo, true, false)
    };
    let lo_m = (prm.u * q).max(prev.0);
    let lo_p = (prm.v * q).max(prev.1);
    let (lm, fm, _) = pick(lo_m, prm.u_tilde() * q, -1);
    let (lp, fp, _) = pick(lo_p, prm.v_tilde() * q, 1);
    if prm.strict && fm {
        return Err(QpfError::NoValidL { q, lo: lo_m, hi: prm.u_tilde() * q });
    }
    if prm.strict && fp {
        return Err(QpfError::NoValidL { q, lo: lo_p, hi: prm.v_tilde() * q });
    }
    Ok(LChoice { l_minus: lm, l_plus: lp, fallback_minus: fm, fallback_plus: fp })
}

/// Regular times `R_N` and their complement `Γ_N` in `[1, N]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegularSet {
    pub n: i64,
    /// `members[k]` for `k ∈ [1, N]`; index 0 unused.
    pub members: Vec<bool>,
}

impl RegularSet {
    pub fn contains(&self, j: i64) -> bool {
        j >= 1 && j <= self.n && self.members[j as usize]
    }

    pub fn gamma(&self) -> Vec<i64> {
        (1..=self.n).filter(|&j| !self.members[j as usize]).collect()
    }
}

/// Precomputed combinatorics on an integer window.
#[derive(Debug, Clone)]
pub struct TimeSetTable {
    pub params: TimeSetParams,
    pub lo: i64,
    pub hi: i64,
    ext_lo: i64,
    dists: Vec<f64>,
    p_row: Vec<u32>,
    q_inf_row: Vec<u32>,
    omega_inf: Membership,
    /// `l^±_q` for `q = 0..=q_max`.
    pub ls: Vec<LChoice>,
    /// Admissibility of `N ∈ [1, hi]`; index 0 unused.
    admissible: Vec<bool>,
}

impl TimeSetTable {
    /// Builds the table on `[−m_neg, n_pos]`.
    pub fn build(params: TimeSetParams, m_neg: i64, n_pos: i64) -> Result<Self> {
        if params.alpha <= 1.0 || params.l2 <= 0.0 || params.gamma <= 0.0 || m_neg < 0 || n_pos < 1 {
            return Err(QpfError::InvalidArgument("need alpha > 1, L2 > 0, gamma > 0 and a window containing 1".into()));
        }
        if params.strict {
            let bad = params.failing_strict();
            if !bad.is_empty() {
                return Err(QpfError::StrictRefused(format!("violated predicates: {}", bad.join(", "))));
            }
        }
        let (lo, hi) = (-m_neg, n_pos);
        let reach = params.u_tilde().max(params.v_tilde());
        let mut margin = reach * 4 + 2;
        let (ext_lo, dists, q_inf_row) = loop {
            let ext_lo = lo - margin;
            let ext_hi = hi + margin;
            let dists: Vec<f64> = (ext_lo..=ext_hi).map(|j| if j == 0 { 0.5 } else { params.dist(j) }).collect();
            let q_inf: Vec<u32> = (ext_lo..=ext_hi)
                .zip(&dists)
                .map(|(j, &d)| if j == 0 { 0 } else { q_from_dist(d, None, &params) })
                .collect();
            let qmax = i64::from(q_inf.iter().copied().max().unwrap_or(0));
            if reach * qmax + 2 <= margin {
                break (ext_lo, dists, q_inf);
            }
            margin = reach * (qmax + 1) * 2 + 2;
        };
        let p_row: Vec<u32> = (0..dists.len())
            .map(|i| if ext_lo + i as i64 == 0 { 0 } else { q_from_dist(dists[i], Some(0), &params) })
            .collect();
        let mut table = TimeSetTable {
            params,
            lo,
            hi,
            ext_lo,
            dists,
            p_row,
            q_inf_row,
            omega_inf: Membership { lo, bits: vec![] },
            ls: vec![],
            admissible: vec![],
        };
        table.omega_inf = table.omega_from_row(&table.q_inf_row.clone(), Part::Both, None);

        let q_max = (1..=hi).map(|m| table.p(m)).max().unwrap_or(0);
        let limit = m_neg.min(n_pos) - 1;
        let mut prev = (0, 0);
        let mut ls = Vec::with_capacity(q_max as usize + 1);
        for q in 0..=q_max {
            let om = &table.omega_inf;
            let c = choose_l(q, &table.params, &|j| om.contains(j), prev, limit.max(0))?;
            prev = (c.l_minus, c.l_plus);
            ls.push(c);
        }
        table.ls = ls;

        let mut adm = vec![false; hi as usize + 1];
        let mut reach_right = i64::MIN;
        for n in 1..=hi {
            adm[n as usize] = n > reach_right;
            if let Some((_, b)) = table.exceptional(n) {
                reach_right = reach_right.max(b);
            }
        }
        table.admissible = adm;
        Ok(table)
    }

    /// Extends the `l^±_q` choices up to `q_max`.
    pub fn ensure_ls(&mut self, q_max: u32) -> Result<()> {
        let limit = (-self.lo).min(self.hi) - 1;
        while (self.ls.len() as u32) <= q_max {
            let q = self.ls.len() as u32;
            let prev = self.ls.last().map(|c| (c.l_minus, c.l_plus)).unwrap_or((0, 0));
            let om = &self.omega_inf;
            let c = choose_l(q, &self.params, &|j| om.contains(j), prev, limit.max(0))?;
            self.ls.push(c);
        }
        Ok(())
    }

    fn idx(&self, j: i64) -> usize {
        (j - self.ext_lo) as usize
    }

    /// `p(j) = Q_0(j)`.
    pub fn p(&self, j: i64) -> u32 {
        self.p_row[self.idx(j)]
    }

    pub fn q_inf(&self, j: i64) -> u32 {
        self.q_inf_row[self.idx(j)]
    }

    /// `Q_p(j)` for `j` in the extended window.
    pub fn q(&self, j: i64, p: Option<u32>) -> u32 {
        if j == 0 {
            return 0;
        }
        match p {
            Some(0) => self.p(j),
            None => self.q_inf(j),
            _ => q_from_dist(self.dists[self.idx(j)], p, &self.params),
        }
    }

    fn q_row(&self, p: Option<u32>) -> Vec<u32> {
        match p {
            Some(0) => self.p_row.clone(),
            None => self.q_inf_row.clone(),
            _ => (0..self.dists.len())
                .map(|i| {
                    let j = self.ext_lo + i as i64;
                    if j == 0 {
                        0
                    } else {
                        q_from_dist(self.dists[i], p, &self.params)
                    }
                })
                .collect(),
        }
    }

    /// Union of `Ω^part(j)` over `j`, restricted to `[lo, hi]`; with
    /// `only_upto = Some(p)` only indices with `Q(j) ≤ p` contribute.
    fn omega_from_row(&self, row: &[u32], part: Part, only_upto: Option<u32>) -> Membership {
        let len = (self.hi - self.lo + 1) as usize;
        let mut diff = vec![0i32; len + 1];
        let (ut, vt) = (self.params.u_tilde(), self.params.v_tilde());
        let mut mark = |a: i64, b: i64| {
            let a = a.max(self.lo);
            let b = b.min(self.hi);
            if a <= b {
                diff[(a - self.lo) as usize] += 1;
                diff[(b - self.lo) as usize + 1] -= 1;
            }
        };
        for (i, &q) in row.iter().enumerate() {
            if q == 0 || only_upto.is_some_and(|p| q > p) {
                continue;
            }
            let j = self.ext_lo + i as i64;
            let q = i64::from(q);
            if part != Part::Plus {
                mark(j - ut * q, j);
            }
            if part != Part::Minus {
                mark(j + 1, j + vt * q);
            }
        }
        let mut acc = 0;
        let bits = diff[..len]
            .iter()
            .map(|d| {
                acc += d;
                acc > 0
            })
            .collect();
        Membership { lo: self.lo, bits }
    }

    /// `Ω^part_p` on the window.
    pub fn omega(&self, p: Option<u32>, part: Part) -> Membership {
        if p.is_none() && part == Part::Both {
            return self.omega_inf.clone();
        }
        self.omega_from_row(&self.q_row(p), part, None)
    }

    /// `Ω̃^part_p`: union over `j` with `Q_p(j) ≤ p`. For `p = ∞` this is `Ω_∞`.
    pub fn omega_tilde(&self, p: Option<u32>, part: Part) -> Membership {
        self.omega_from_row(&self.q_row(p), part, p)
    }

    pub fn in_omega_inf(&self, j: i64) -> bool {
        self.omega_inf.contains(j)
    }

    pub fn omega_inf(&self) -> &Membership {
        &self.omega_inf
    }

    /// `ν(q) = min{j ≥ 1 : p(j) ≥ q}` inside the window.
    pub fn nu(&self, q: u32) -> Option<i64> {
        (1..=self.hi).find(|&j| self.p(j) >= q)
    }

    /// `ν̃(q)` inside the window.
    pub fn nu_tilde(&self, q: u32) -> Option<i64> {
        let prm = &self.params;
        let s = s_infinity(prm.alpha);
        let thr = if q <= 1 {
            3.0 * (4.0 * prm.gamma / prm.l2 + s / (prm.alpha * prm.l2))
        } else {
            3.0 * s * prm.alpha.powi(-(q as i32 - 1)) / prm.l2
        };
        (1..=self.hi).find(|&j| self.dists[self.idx(j)] < thr)
    }

    pub fn l_minus(&self, q: u32) -> Option<i64> {
        self.ls.get(q as usize).map(|c| c.l_minus)
    }

    pub fn l_plus(&self, q: u32) -> Option<i64> {
        self.ls.get(q as usize).map(|c| c.l_plus)
    }

    pub fn any_l_fallback(&self) -> bool {
        self.ls.iter().any(|c| c.fallback_minus || c.fallback_plus)
    }

    /// `J(m) = [m − l⁻_{p(m)}, m + l⁺_{p(m)}]`, empty when `p(m) = 0`.
    pub fn exceptional(&self, m: i64) -> Option<(i64, i64)> {
        let p = self.p(m);
        if p == 0 {
            return None;
        }
        let c = self.ls.get(p as usize)?;
        Some((m - c.l_minus, m + c.l_plus))
    }

    pub fn is_admissible(&self, n: i64) -> bool {
        n >= 1 && n <= self.hi && self.admissible[n as usize]
    }

    /// `A_N` as a bitset over `[1, N]` (index 0 unused).
    pub fn admissible_set(&self, n: i64) -> Vec<bool> {
        let n = n.min(self.hi);
        let len = n.max(0) as usize;
        let mut diff = vec![0i32; len + 2];
        for m in 1..n {
            if let Some((a, b)) = self.exceptional(m) {
                let a = a.max(1);
                let b = b.min(n);
                if a <= b {
                    diff[a as usize] += 1;
                    diff[b as usize + 1] -= 1;
                }
            }
        }
        let mut out = vec![false; len + 1];
        let mut acc = 0;
        for k in 1..=len {
            acc += diff[k];
            out[k] = acc == 0;
        }
        out
    }

    /// `Λ_N = [1, N] ∖ A_N` as a sorted list.
    pub fn lambda_set(&self, n: i64) -> Vec<i64> {
        let a = self.admissible_set(n);
        (1..a.len()).filter(|&k| !a[k]).map(|k| k as i64).collect()
    }

    /// Maximal intervals of `Λ_N`.
    pub fn maximal_intervals(&self, n: i64) -> Vec<(i64, i64)> {
        runs_of_false(&self.admissible_set(n))
    }

    /// Central point of an interval: the index of maximal `p`, with a flag
    /// telling whether the maximiser is unique.
    pub fn central_point(&self, a: i64, b: i64) -> (i64, u32, bool) {
        let mut best = (a, self.p(a));
        let mut count = 0;
        for j in a..=b {
            let p = self.p(j);
            if p > best.1 {
                best = (j, p);
                count = 1;
            } else if p == best.1 {
                count += 1;
            }
        }
        (best.0, best.1, count == 1)
    }

    /// `R_N` for admissible `N`.
    pub fn regular_set(&self, n: i64) -> Result<RegularSet> {
        if !self.is_admissible(n) {
            return Err(QpfError::NotAdmissible { n });
        }
        Ok(self.regular_set_any(n))
    }

    /// The recursive construction applied to any `N ∈ [1, hi]`, admissible
    /// or not.
    pub fn regular_set_any(&self, n: i64) -> RegularSet {
        let mut memo = HashMap::new();
        let members = self.regular_inner(n, &mut memo);
        RegularSet { n, members }
    }

    fn regular_inner(&self, n: i64, memo: &mut HashMap<i64, Vec<bool>>) -> Vec<bool> {
        if let Some(r) = memo.get(&n) {
            return r.clone();
        }
        let a = self.admissible_set(n);
        let mut r = a.clone();
        for (ja, jb) in runs_of_false(&a) {
            let (m, p, _) = self.central_point(ja, jb);
            let lp = match self.l_plus(p) {
                Some(l) if p > 0 && l > 0 && l < n => l,
                _ => continue,
            };
            let sub = self.regular_inner(lp, memo);
            for k in 1..=lp {
                if sub[k as usize] && m + k <= n {
                    r[(m + k) as usize] = true;
                }
            }
        }
        memo.insert(n, r.clone());
        r
    }
}

/// Runs of `false` in `bits[1..]` as inclusive intervals.
fn runs_of_false(bits: &[bool]) -> Vec<(i64, i64)> {
    let mut out = vec![];
    let mut start = None;
    for k in 1..bits.len() {
        match (bits[k], start) {
            (false, None) => start = Some(k as i64),
            (true, Some(s)) => {
                out.push((s, k as i64 - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, bits.len() as i64 - 1));
    }
    out
}

/// Run-length encoding of a bitset over `[1, N]`: alternating run lengths
/// starting with a run of `false` (possibly of length 0).
pub fn rle(bits: &[bool]) -> Vec<usize> {
    let mut out = vec![];
    let mut cur = false;
    let mut len = 0;
    for &b in bits.iter().skip(1) {
        if b == cur {
            len += 1;
        } else {
            out.push(len);
            cur = b;
            len = 1;
        }
    }
    out.push(len);
    out
}

/// Empirical density quantities.
#[derive(Debug, Clone, Serialize)]
pub struct DensityReport {
    /// `min_q ν̃(q) / ((q+2)·w)` over levels with a return in the window;
    /// `None` if there is none.
    pub h_emp: Option<f64>,
    /// `max_n #([1,n] ∩ Ω_∞)/n` and its mirror on `[−n, −1]`.
    pub big_h_emp: f64,
    pub hfunctions1: bool,
    pub hfunctions2: bool,
    pub witness_q: Option<u32>,
    pub witness_n: Option<i64>,
}

impl TimeSetTable {
    /// Empirical `h`, `H` and the two density conditions on the window.
    pub fn density(&self) -> DensityReport {
        let w = self.params.w() as f64;
        let q_top = (self.lo..=self.hi).map(|j| self.q_inf(j)).max().unwrap_or(0) + 1;
        let mut h_emp: Option<f64> = None;
        let mut witness_q = None;
        let mut h1 = true;
        for q in 1..=q_top.max(1) {
            if let Some(nt) = self.nu_tilde(q) {
                let ratio = nt as f64 / ((q as f64 + 2.0) * w);
                if h_emp.map_or(true, |h| ratio < h) {
                    h_emp = Some(ratio);
                }
                if ratio < 1.0 && h1 {
                    h1 = false;
                    witness_q = Some(q);
                }
            }
        }
        let mut big_h: f64 = 0.0;
        let mut h2 = true;
        let mut witness_n = None;
        let (mut cp, mut cm) = (0usize, 0usize);
        for n in 1..=self.hi.max(-self.lo) {
            if n <= self.hi && self.in_omega_inf(n) {
                cp += 1;
            }
            if -n >= self.lo && self.in_omega_inf(-n) {
                cm += 1;
            }
            let frac = cp.max(cm) as f64 / n as f64;
            big_h = big_h.max(frac);
            if h2 && frac * 12.0 * w > 1.0 {
                h2 = false;
                witness_n = Some(n);
            }
        }
        DensityReport { h_emp, big_h_emp: big_h, hfunctions1: h1, hfunctions2: h2, witness_q, witness_n }
    }
}

/// Builds a table on `[−n, n]` and reports the density quantities.
pub fn density_functions(params: &TimeSetParams, n: i64) -> Result<DensityReport> {
    if n < params.w() {
        return Err(QpfError::InvalidArgument(format!("need N >= w = {}", params.w())));
    }
    Ok(TimeSetTable::build(params.clone().strict(false), n, n)?.density())
}

/// Outcome of one executable lemma check.
#[derive(Debug, Clone, Serialize)]
pub struct LemmaCheck {
    pub name: &'static str,
    /// Whether the hypotheses of the statement hold, so that a
    /// counterexample would be a genuine failure.
    pub asserted: bool,
    pub checked: usize,
    pub counterexamples: usize,
    pub first: Option<String>,
}

impl LemmaCheck {
    fn new(name: &'static str, asserted: bool) -> Self {
        LemmaCheck { name, asserted, checked: 0, counterexamples: 0, first: None }
    }

    fn record(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checked += 1;
        if !ok {
            self.counterexamples += 1;
            if self.first.is_none() {
                self.first = Some(what());
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.counterexamples == 0
    }
}

/// Report of [`TimeSetTable::verify_lemmas`].
#[derive(Debug, Clone, Serialize)]
pub struct LemmaReport {
    pub predicates: Vec<HypothesisCheck>,
    pub density: DensityReport,
    pub l_fallback: bool,
    pub standing: bool,
    pub lemmas: Vec<LemmaCheck>,
}

impl LemmaReport {
    pub fn get(&self, name: &str) -> Option<&LemmaCheck> {
        self.lemmas.iter().find(|l| l.name == name)
    }

    /// No counterexample among asserted statements.
    pub fn asserted_pass(&self) -> bool {
        self.lemmas.iter().all(|l| !l.asserted || l.passed())
    }
}

fn pick_evenly<T: Clone>(items: &[T], budget: usize) -> Vec<T> {
    if items.len() <= budget || budget == 0 {
        return items.to_vec();
    }
    (0..budget).map(|i| items[i * items.len() / budget].clone()).collect()
}

impl TimeSetTable {
    /// Runs every structural statement as an exhaustive or sampled scan.
    ///
    /// `budget` bounds the number of times `N` (and translation offsets `m`)
    /// examined by the more expensive checks.
    pub fn verify_lemmas(&self, budget: usize) -> LemmaReport {
        let preds = self.params.predicates();
        let holds = |n: &str| preds.iter().any(|c| c.name == n && c.holds);
        let density = self.density();
        let base = holds("gamma0") && holds("alphagamma0");
        let fallback = self.any_l_fallback();
        let standing = base && density.hfunctions1 && density.hfunctions2 && !fallback;
        let upper_ok = holds("alpha2") && holds("alphagamma1");
        let mut lemmas = vec![];

        let levels: Vec<Option<u32>> = (0..=6).map(Some).chain(std::iter::once(None)).collect();
        let rows: Vec<Vec<u32>> = levels.iter().map(|&p| self.q_row(p)).collect();
        let mut mono = LemmaCheck::new("omegasets_monotone", true);
        let mut chain = LemmaCheck::new("pjestimates_lower", true);
        let mut upper = LemmaCheck::new("pjestimates_upper", upper_ok);
        for j in self.lo..=self.hi {
            let i = self.idx(j);
            for k in 1..rows.len() {
                let (a, b) = (rows[k - 1][i], rows[k][i]);
                mono.record(a <= b, || format!("j = {j}, level {k}: {a} > {b}"));
            }
            let pj = self.p(j);
            let qi = self.q_inf(j);
            for (k, row) in rows.iter().enumerate() {
                let qp = row[i];
                chain.record(pj <= qp && qp <= qi, || format!("j = {j}, level {k}: p = {pj}, Q_p = {qp}, Q_inf = {qi}"));
            }
            upper.record(qi <= pj + 1, || format!("j = {j}: Q_inf = {qi}, p = {pj}"));
        }
        lemmas.extend([mono, chain, upper]);

        let mut origin = LemmaCheck::new("origin_outside_omega_inf", base && density.hfunctions1);
        for j in -2..=2 {
            if self.omega_inf.in_range(j) {
                origin.record(!self.in_omega_inf(j), || format!("{j} in Omega_inf"));
            }
        }
        lemmas.push(origin);

        let mut trans = LemmaCheck::new("omegatransition_b", base && upper_ok);
        let p_top = (1..=self.hi).map(|m| self.p(m)).max().unwrap_or(0);
        for p in 2..=p_top {
            let src: Vec<Membership> =
                [Part::Minus, Part::Plus, Part::Both].iter().map(|&pt| self.omega_tilde(Some(p - 2), pt)).collect();
            let dst: Vec<Membership> =
                [Part::Minus, Part::Plus, Part::Both].iter().map(|&pt| self.omega_tilde(Some(p - 1), pt)).collect();
            let ms: Vec<i64> = (1..=self.hi).filter(|&m| self.p(m) >= p).collect();
            for m in pick_evenly(&ms, budget) {
                for k in 0..3 {
                    for sign in [-1i64, 1] {
                        for j in src[k].iter() {
                            let t = j + sign * m;
                            if dst[k].in_range(t) {
                                trans.record(dst[k].contains(t), || {
                                    format!("p = {p}, m = {m}, part {k}, shift {sign}: {j} -> {t}")
                                });
                            }
                        }
                    }
                }
            }
        }
        lemmas.push(trans);

        let mut inside = LemmaCheck::new("jminominfty", base && !fallback);
        let (ut, vt) = (self.params.u_tilde(), self.params.v_tilde());
        let mut intervals = vec![];
        for m in 1..=self.hi {
            if let Some((a, b)) = self.exceptional(m) {
                let p = i64::from(self.p(m));
                inside.record(a - 1 >= m - ut * p && b + 1 <= m + vt * p, || format!("m = {m}: J = [{a}, {b}]"));
                intervals.push((a - 1, b + 1, m, self.p(m)));
            }
        }
        lemmas.push(inside);

        let mut disj = LemmaCheck::new("jmndisjointness", base && !fallback);
        for (i, &(a, b, m, pm)) in intervals.iter().enumerate() {
            for &(c, d, n, pn) in intervals[i + 1..].iter() {
                if c > b {
                    break;
                }
                if pm.abs_diff(pn) <= 1 {
                    disj.record(d < a || c > b, || format!("m = {m}, n = {n}"));
                }
            }
        }
        lemmas.push(disj);

        let adm_all: Vec<i64> = (1..=self.hi).filter(|&n| self.is_admissible(n)).collect();
        let sample_n = pick_evenly(&adm_all, budget);

        let mut central = LemmaCheck::new("centralpoints", standing);
        let mut endpoints = LemmaCheck::new("endpoints_a", standing);
        let mut seen_j = HashMap::new();
        let n_last = adm_all.last().copied().unwrap_or(1);
        for &n in sample_n.iter().chain(std::iter::once(&n_last)) {
            for (a, b) in self.maximal_intervals(n) {
                let (m, p, unique) = self.central_point(a, b);
                let ok_shape = self.exceptional(m).is_some_and(|(x, y)| x.max(1) == a && y == b);
                // points with p = 0 carry no interval of their own
                let others_small = (a..=b).all(|j| j == m || self.p(j) == 0 || self.p(j) + 1 < p);
                central.record(unique && ok_shape && others_small, || format!("N = {n}, J = [{a}, {b}], m = {m}"));
                seen_j.insert((a, b), m);
            }
        }
        for (&(a, b), &m) in &seen_j {
            let lm = self.l_minus(self.p(m)).unwrap_or(0);
            let am = self.admissible_set(m);
            let lam = m - lm;
            let in_am = |k: i64| k >= 1 && (k as usize) < am.len() && am[k as usize];
            endpoints.record(in_am(lam - 1) && in_am(lam) && in_am(m), || format!("J = [{a}, {b}], m = {m}"));
        }
        lemmas.extend([central, endpoints]);

        let mut basic = LemmaCheck::new("regular_bounds", true);
        let mut stab_a = LemmaCheck::new("stabilizingeffect", true);
        let mut stab_r = LemmaCheck::new("regularstabilized", true);
        let mut dens = LemmaCheck::new("regsets_a", standing);
        let w12 = 12.0 * self.params.w() as f64;
        let mut memo = HashMap::new();
        for &n1 in &sample_n {
            let a1 = self.admissible_set(n1);
            let r1 = self.regular_inner(n1, &mut memo);
            let ok = (1..=n1 as usize).all(|k| !a1[k] || r1[k]);
            basic.record(ok, || format!("A_N not inside R_N at N = {n1}"));
            let mut miss = 0usize;
            for j in 1..=n1 {
                if !r1[j as usize] {
                    miss += 1;
                }
                dens.record(miss as f64 <= j as f64 / w12, || format!("N = {n1}, j = {j}, misses = {miss}"));
            }
            let n0s: Vec<i64> = (1..=n1).filter(|&k| a1[k as usize]).collect();
            for n0 in pick_evenly(&n0s, 8) {
                let a0 = self.admissible_set(n0);
                let r0 = self.regular_inner(n0, &mut memo);
                let same_a = (1..=n0 as usize).all(|k| a1[k] == a0[k]);
                stab_a.record(same_a, || format!("N0 = {n0}, N1 = {n1}"));
                let same_r = (1..=n0 as usize).all(|k| r1[k] == r0[k]);
                stab_r.record(same_r, || format!("N0 = {n0}, N1 = {n1}"));
            }
        }
        lemmas.extend([basic, stab_a, stab_r, dens]);

        let mut regb = LemmaCheck::new("regsets_b", standing);
        let mut glq = LemmaCheck::new("gammalqplus", standing);
        let mut lpin = LemmaCheck::new("lpminrn", standing);
        let sigma = self.params.sigma();
        for q in 1..self.ls.len() as u32 {
            let lq = self.l_plus(q).unwrap_or(0);
            if lq + 1 > self.hi || lq < 1 {
                continue;
            }
            let r = self.regular_inner(lq, &mut memo);
            let mut miss = 0usize;
            for j in (0..lq).rev() {
                if !r[(j + 1) as usize] {
                    miss += 1;
                }
                regb.record(miss as f64 <= sigma * (lq - j) as f64 + 1e-12, || format!("q = {q}, j = {j}"));
            }
            let r2 = self.regular_inner(lq + 1, &mut memo);
            let g1: Vec<usize> = (1..=lq as usize).filter(|&k| !r[k]).collect();
            let g2: Vec<usize> = (1..=(lq + 1) as usize).filter(|&k| !r2[k]).collect();
            glq.record(g1 == g2, || format!("q = {q}"));
            for &n in sample_n.iter().filter(|&&n| n >= lq + 1) {
                let rn = self.regular_inner(n, &mut memo);
                let pts = [1, 2, lq, lq + 1];
                lpin.record(pts.iter().all(|&k| k <= n && rn[k as usize]), || format!("q = {q}, N = {n}"));
            }
        }
        lemmas.extend([regb, glq, lpin]);

        LemmaReport { predicates: preds, density, l_fallback: fallback, standing, lemmas }
    }
}

/// Per-index row of the JSON export.
#[derive(Debug, Clone, Serialize)]
pub struct TableRow {
    pub j: i64,
    pub p: u32,
    pub q_inf: u32,
    pub in_omega_0: bool,
    pub in_omega_inf: bool,
}

/// Serializable snapshot of a table.
#[derive(Debug, Clone, Serialize)]
pub struct TableExport {
    pub window: (i64, i64),
    pub rows: Vec<TableRow>,
    pub l_minus: Vec<i64>,
    pub l_plus: Vec<i64>,
    pub l_fallback: bool,
    pub n: i64,
    pub admissible: bool,
    /// Run lengths of `A_N` over `[1, N]`, starting with non-members.
    pub a_rle: Vec<usize>,
    /// Run lengths of `R_N`, same convention.
    pub r_rle: Vec<usize>,
}

impl TimeSetTable {
    pub fn export(&self, n: i64) -> TableExport {
        let n = n.clamp(1, self.hi);
        let om0 = self.omega(Some(0), Part::Both);
        let rows = (self.lo..=self.hi)
            .map(|j| TableRow {
                j,
                p: self.p(j),
                q_inf: self.q_inf(j),
                in_omega_0: om0.contains(j),
                in_omega_inf: self.in_omega_inf(j),
            })
            .collect();
        let a = self.admissible_set(n);
        let r = self.regular_set_any(n);
        TableExport {
            window: (self.lo, self.hi),
            rows,
            l_minus: self.ls.iter().map(|c| c.l_minus).collect(),
            l_plus: self.ls.iter().map(|c| c.l_plus).collect(),
            l_fallback: self.any_l_fallback(),
            n,
            admissible: self.is_admissible(n),
            a_rle: rle(&a),
            r_rle: rle(&r.members),
        }
    }
}
