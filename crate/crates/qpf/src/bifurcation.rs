//! Critical forcing parameters, the `ξ` orbits started far in the past,
//! multiprecision parameter solving, induction checks and sink-source
//! orbit candidates.

use rayon::prelude::*;
use rug::Float;
use serde::Serialize;

use crate::circle::{circle_dist, linear_fit, orbit_point, wrap};
use crate::error::{QpfError, Result};
use crate::graphs::{
    backward_orbit_lyapunov, iterate_boundary, orbit_lyapunov, profile_from_orbit, pullback, pushforward, uniform_grid,
    Boundary, ExponentProfile,
};
use crate::systems::{s_infinity, BaseKind, FibreBase, HypothesisReport, QpfSystem};
use crate::timesets::TimeSetTable;

/// Horizon and fibre grid of the escape test.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EscapeOptions {
    pub n_max: usize,
    pub grid: usize,
}

impl Default for EscapeOptions {
    fn default() -> Self {
        EscapeOptions { n_max: 20_000, grid: 2048 }
    }
}

/// Whether the orbit of the upper boundary stays non-negative on every grid
/// fibre for `n_max` steps.
pub fn survives(sys: &QpfSystem, opts: &EscapeOptions) -> bool {
    let (_, top) = sys.domain();
    let omega = sys.omega();
    let offsets: Vec<f64> = (0..opts.n_max as i64).map(|i| orbit_point(omega, i)).collect();
    let g = opts.grid as f64;
    !(0..opts.grid).into_par_iter().any(|k| {
        let theta = k as f64 / g;
        let mut x = top;
        for &o in &offsets {
            x = sys.apply(wrap(theta + o), x);
            if x < 0.0 {
                return true;
            }
        }
        false
    })
}

/// Bracket `[lo, hi]` around a critical parameter: `lo` survives, `hi` escapes.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BetaBracket {
    pub lo: f64,
    pub hi: f64,
    pub width: f64,
    pub n_max: usize,
    pub grid: usize,
}

impl BetaBracket {
    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// Bisects the escape predicate of `factory(β)` on `[lo, hi]` to width `tol`.
pub fn critical_beta<F>(factory: F, lo: f64, hi: f64, tol: f64, opts: &EscapeOptions) -> Result<BetaBracket>
where
    F: Fn(f64) -> QpfSystem,
{
    if !(lo < hi) || !(tol > 0.0) {
        return Err(QpfError::InvalidArgument(format!("bad bracket [{lo}, {hi}] or tolerance {tol}")));
    }
    if !survives(&factory(lo), opts) {
        return Err(QpfError::SolveFailed(format!("lower end {lo} already escapes")));
    }
    if survives(&factory(hi), opts) {
        return Err(QpfError::SolveFailed(format!("upper end {hi} does not escape")));
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > tol {
        let m = 0.5 * (a + b);
        if survives(&factory(m), opts) {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(BetaBracket { lo: a, hi: b, width: b - a, n_max: opts.n_max, grid: opts.grid })
}

#[inline]
fn step_f64(sys: &QpfSystem, beta: f64, theta: f64, x: f64) -> f64 {
    match sys.additive_parts() {
        Some((base, forcing, _)) => base.value(x) - beta * forcing.eval(theta),
        None => sys.with_beta(beta).apply(theta, x),
    }
}

/// `ξ_j(β, l)` for `j = −l..=n`: the orbit started at `x = 3` on fibre
/// `ω_{−l}`.
pub fn xi_trajectory(sys: &QpfSystem, beta: f64, l: i64, n: i64) -> Vec<f64> {
    let omega = sys.omega();
    let mut x = 3.0;
    let mut out = Vec::with_capacity((n + l + 1).max(1) as usize);
    out.push(x);
    for j in -l..n {
        x = step_f64(sys, beta, orbit_point(omega, j), x);
        out.push(x);
    }
    out
}

/// `ξ_n(β, l)`.
pub fn xi(sys: &QpfSystem, beta: f64, l: i64, n: i64) -> f64 {
    *xi_trajectory(sys, beta, l, n).last().unwrap()
}

/// Whether the orbit can be stopped once it falls below `min(target, 0)`.
fn trap_allowed(sys: &QpfSystem) -> bool {
    match sys.additive_parts() {
        Some((base, _, _)) => {
            sys.one_sided()
                && !sys.symmetric
                && !matches!(base.kind, BaseKind::Identity | BaseKind::Custom { .. })
                && base.derivative(0.0) > 1.0
        }
        None => false,
    }
}

/// `ξ_n − target`, or `−∞` once the orbit is trapped below `min(target, 0)`.
fn xi_excess_f64(sys: &QpfSystem, beta: f64, l: i64, n: i64, target: f64, trap: bool) -> f64 {
    let omega = sys.omega();
    let floor = target.min(0.0);
    let mut x = 3.0;
    for j in -l..n {
        x = step_f64(sys, beta, orbit_point(omega, j), x);
        if trap && x < floor {
            return f64::NEG_INFINITY;
        }
    }
    x - target
}

fn check_monotone(sys: &QpfSystem) -> Result<()> {
    if sys.symmetric || !sys.one_sided() || sys.additive_parts().is_none() {
        return Err(QpfError::NotMonotone);
    }
    Ok(())
}

/// Solves `ξ_n(β, l) = target` in double precision by bisection on `hint`.
///
/// `ξ_n` is non-increasing in `β` for one-sided forcing.
pub fn solve_beta(sys: &QpfSystem, l: i64, n: i64, target: f64, hint: (f64, f64)) -> Result<f64> {
    check_monotone(sys)?;
    let (lo, hi) = hint;
    let unreachable = || QpfError::TargetUnreachable { target, lo, hi };
    if !target.is_finite() {
        return Err(unreachable());
    }
    let trap = trap_allowed(sys);
    let f = |b: f64| xi_excess_f64(sys, b, l, n, target, trap);
    if !(f(lo) > 0.0) || !(f(hi) < 0.0) {
        return Err(unreachable());
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if f(m) > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

#[derive(Debug, Clone)]
enum MpBase {
    NormArctan { alpha: f64, norm: Float },
    Arctan { alpha: f64 },
    Rescaled { c: f64, slope: f64 },
    Tanh { alpha: f64 },
    Harper { s: f64, x1: f64, top: Float },
}

/// `ξ` orbit evaluated in MPFR arithmetic at a fixed precision.
#[derive(Debug, Clone)]
struct MpXi {
    kind: MpBase,
    base: FibreBase,
    g: Vec<f64>,
    l: i64,
    n: i64,
    prec: u32,
    trap: bool,
}

struct MpRun {
    value: Float,
    trapped: bool,
    /// `∂ξ_n/∂β`.
    deriv: Float,
    xs: Vec<f64>,
}

const MAX_PREC: u32 = 1 << 16;

fn working_precision(base: &FibreBase, l: i64, n: i64) -> u32 {
    let slope = base.derivative(0.0).max(2.0).log2();
    let bits = 128.0 + 1.25 * (n + l) as f64 * slope;
    (bits.ceil() as u32).min(MAX_PREC)
}

impl MpXi {
    fn new(sys: &QpfSystem, l: i64, n: i64) -> Result<Self> {
        let (base, forcing, _) = sys.additive_parts().ok_or(QpfError::NotMonotone)?;
        let prec = working_precision(base, l, n);
        let kind = match &base.kind {
            BaseKind::NormalizedArctan { alpha } => {
                let mut norm = Float::with_val(prec, *alpha);
                norm.atan_mut();
                MpBase::NormArctan { alpha: *alpha, norm }
            }
            BaseKind::Arctan { alpha } => MpBase::Arctan { alpha: *alpha },
            BaseKind::RescaledArctan { c, slope, .. } => MpBase::Rescaled { c: *c, slope: *slope },
            BaseKind::Tanh { alpha } => MpBase::Tanh { alpha: *alpha },
            BaseKind::HarperInterval { s, x1, e } => {
                let top = Float::with_val(prec, e - Float::with_val(prec, *x1)) * *s;
                MpBase::Harper { s: *s, x1: *x1, top }
            }
            BaseKind::Identity | BaseKind::Custom { .. } => {
                return Err(QpfError::InvalidArgument("no multiprecision form for this base map".into()))
            }
        };
        let omega = sys.omega();
        let g = (-l..n).map(|j| forcing.eval(orbit_point(omega, j))).collect();
        Ok(MpXi { kind, base: base.clone(), g, l, n, prec, trap: trap_allowed(sys) })
    }

    fn base_value(&self, x: &Float) -> Float {
        let p = self.prec;
        match &self.kind {
            MpBase::NormArctan { alpha, norm } => {
                let mut t = Float::with_val(p, x * *alpha);
                t.atan_mut();
                t / norm
            }
            MpBase::Arctan { alpha } => {
                let mut t = Float::with_val(p, x * *alpha);
                t.atan_mut();
                t
            }
            MpBase::Rescaled { c, slope } => {
                let mut t = Float::with_val(p, x * *slope);
                t.atan_mut();
                t * *c
            }
            MpBase::Tanh { alpha } => {
                let mut t = Float::with_val(p, x * *alpha);
                t.tanh_mut();
                t
            }
            MpBase::Harper { s, x1, top } => {
                let mut t = Float::with_val(p, x / *s);
                t += *x1;
                let r = Float::with_val(p, -*s) / t;
                r + top
            }
        }
    }

    fn run(&self, beta: &Float, target: f64, record: bool) -> MpRun {
        let p = self.prec;
        let floor = target.min(0.0);
        let mut x = Float::with_val(p, 3);
        let mut d = Float::with_val(64, 0);
        let mut xs = Vec::new();
        if record {
            xs.reserve((self.n + self.l + 1) as usize);
            xs.push(3.0);
        }
        let mut trapped = false;
        for &gj in &self.g {
            let fp = self.base.derivative(x.to_f64());
            d *= fp;
            d -= gj;
            let mut y = self.base_value(&x);
            y -= Float::with_val(p, beta * gj);
            x = y;
            if record {
                xs.push(x.to_f64());
            }
            if self.trap && x < floor {
                trapped = true;
                if !record {
                    break;
                }
            }
        }
        MpRun { value: x, trapped, deriv: d, xs }
    }

    /// Sign of `ξ_n − target`: `+1`, `−1` or `0`.
    fn sign(&self, beta: &Float, target: f64) -> i32 {
        let r = self.run(beta, target, false);
        if r.trapped {
            return -1;
        }
        match r.value.partial_cmp(&target) {
            Some(std::cmp::Ordering::Greater) => 1,
            Some(std::cmp::Ordering::Less) => -1,
            _ => 0,
        }
    }
}

/// A parameter solving `ξ_n(β, l) = target` to high precision, with its orbit.
#[derive(Debug, Clone, Serialize)]
pub struct PreciseSolution {
    pub beta: f64,
    #[serde(skip)]
    pub beta_mp: Float,
    pub l: i64,
    pub n: i64,
    pub target: f64,
    /// `ξ_j` for `j = −l..=n`.
    pub orbit: Vec<f64>,
    /// `log |∂ξ_n/∂β|`.
    pub log_abs_deriv: f64,
    pub deriv_negative: bool,
    pub residual: f64,
    pub prec: u32,
    pub iterations: usize,
}

impl PreciseSolution {
    /// `ξ_j` for `−l ≤ j ≤ n`.
    pub fn at(&self, j: i64) -> f64 {
        self.orbit[(j + self.l) as usize]
    }
}

/// `ξ_j(β, l)` on `[−l, n]` evaluated in multiprecision at an exact `β`.
pub fn xi_trajectory_mp(sys: &QpfSystem, beta: &Float, l: i64, n: i64) -> Result<(Vec<f64>, f64, bool)> {
    let m = MpXi::new(sys, l, n)?;
    let r = m.run(beta, 0.0, true);
    let ld = r.deriv.clone().abs().ln().to_f64();
    Ok((r.xs, ld, r.deriv.is_sign_negative()))
}

/// Solves `ξ_n(β, l) = target` with a safeguarded Newton iteration in MPFR
/// arithmetic.
///
/// The precision grows with `n + l` and the expansion of the base map so
/// that the exponentially sensitive orbit stays resolved.
pub fn solve_beta_precise(sys: &QpfSystem, l: i64, n: i64, target: f64, hint: (f64, f64)) -> Result<PreciseSolution> {
    let beta0 = solve_beta(sys, l, n, target, hint)?;
    let model = MpXi::new(sys, l, n)?;
    let p = model.prec;
    let (lo, hi) = hint;

    let mut w = 1e-13 * beta0.abs().max(1.0);
    let (mut a, mut b) = loop {
        let a = Float::with_val(p, (beta0 - w).max(lo));
        let b = Float::with_val(p, (beta0 + w).min(hi));
        if model.sign(&a, target) > 0 && model.sign(&b, target) < 0 {
            break (a, b);
        }
        if beta0 - w <= lo && beta0 + w >= hi {
            return Err(QpfError::SolveFailed("no sign change in multiprecision".into()));
        }
        w *= 16.0;
    };

    let tol_f = 2f64.powi(-100) * target.abs().max(1.0);
    let width_exp = -(p as i32 - 8);
    let mut x = Float::with_val(p, &a + &b) / 2u32;
    let mut last_step = Float::with_val(p, &b - &a);
    let mut iterations = 0;
    let max_iter = 2 * p as usize + 200;
    loop {
        iterations += 1;
        let r = model.run(&x, target, false);
        let excess = if r.trapped { None } else { Some(Float::with_val(p, &r.value - target)) };
        if let Some(f) = &excess {
            if f.to_f64().abs() <= tol_f {
                break;
            }
            if f.is_sign_positive() {
                a.clone_from(&x);
            } else {
                b.clone_from(&x);
            }
        } else {
            b.clone_from(&x);
        }
        let span = Float::with_val(p, &b - &a);
        if span.is_zero() || span.get_exp().map_or(true, |e| e <= width_exp) || iterations >= max_iter {
            x = Float::with_val(p, &a + &b) / 2u32;
            break;
        }
        let newton = match &excess {
            Some(f) if !r.deriv.is_zero() => {
                let cand = Float::with_val(p, &x - Float::with_val(p, f / &r.deriv));
                let stepped = Float::with_val(p, &cand - &x).abs();
                let half = Float::with_val(p, &last_step / 2u32);
                (cand > a && cand < b && stepped < half).then_some((cand, stepped))
            }
            _ => None,
        };
        match newton {
            Some((cand, stepped)) => {
                x = cand;
                last_step = stepped;
            }
            None => {
                last_step = span;
                x = Float::with_val(p, &a + &b) / 2u32;
            }
        }
    }

    let r = model.run(&x, target, true);
    if r.trapped {
        return Err(QpfError::SolveFailed("solution orbit is trapped below the target".into()));
    }
    Ok(PreciseSolution {
        beta: x.to_f64(),
        l,
        n,
        target,
        orbit: r.xs,
        log_abs_deriv: r.deriv.clone().abs().ln().to_f64(),
        deriv_negative: r.deriv.is_sign_negative(),
        residual: Float::with_val(p, &r.value - target).abs().to_f64(),
        prec: p,
        iterations,
        beta_mp: x,
    })
}

/// Strict mode applies the stated constants and refuses when the
/// hypotheses fail; empirical mode runs the same checks regardless.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Mode {
    Strict,
    Empirical,
}

fn strict_constants(sys: &QpfSystem) -> Result<(f64, f64, f64)> {
    let c = sys
        .strict
        .as_ref()
        .ok_or_else(|| QpfError::InvalidArgument("system carries no alpha/gamma constants".into()))?;
    Ok((c.alpha, c.gamma, c.l2))
}

fn refuse_if_strict(sys: &QpfSystem, mode: Mode) -> Result<()> {
    if mode != Mode::Strict {
        return Ok(());
    }
    let c = sys.strict.as_ref().ok_or_else(|| QpfError::StrictRefused("no constants attached".into()))?;
    let bad: Vec<&str> = crate::systems::constant_predicates(c).into_iter().filter(|h| !h.holds).map(|h| h.name).collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(QpfError::StrictRefused(format!("violated predicates: {}", bad.join(", "))))
    }
}

/// Outcome of the three induction statements at one sampled `β`.
#[derive(Debug, Clone, Serialize)]
pub struct InductionSample {
    pub beta: f64,
    /// `ξ_j ≥ γ` on the past set.
    pub past_ok: bool,
    /// `|ξ_j| ≤ 1/α` on the regular set.
    pub regular_ok: bool,
    pub window_ok: bool,
    pub deriv_ok: bool,
    pub log_abs_deriv: f64,
    pub first_violation: Option<i64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct InductionReport {
    pub q: u32,
    pub n: i64,
    pub l: i64,
    pub mode: Mode,
    /// Whether `n` lies in the range the statements are made for.
    pub n_in_range: bool,
    pub beta_plus: f64,
    pub beta_minus: f64,
    pub width: f64,
    /// `2α^{−n/4}`.
    pub width_bound: f64,
    pub width_ok: bool,
    /// `[1 + 1/√α, 1 + 3/√α]`.
    pub window: (f64, f64),
    /// `((n − 1)/4)·log α`.
    pub deriv_bound: f64,
    pub samples: Vec<InductionSample>,
    pub holds: bool,
}

struct XiCheck<'a> {
    past: &'a [i64],
    regular: &'a [i64],
    gamma: f64,
    radius: f64,
    window: (f64, f64),
    deriv_bound: f64,
    mode: Mode,
}

impl XiCheck<'_> {
    fn sample(&self, beta: f64, orbit: &[f64], l: i64, log_d: f64, neg: bool) -> InductionSample {
        let at = |j: i64| orbit[(j + l) as usize];
        let slack = 1e-9 * self.radius;
        let mut first = None;
        let past_bad = self.past.iter().copied().find(|&j| !(at(j) >= self.gamma));
        let reg_bad = self.regular.iter().copied().find(|&j| !(at(j).abs() <= self.radius + slack));
        if let Some(j) = past_bad.or(reg_bad) {
            first = Some(j);
        }
        let deriv_ok = match self.mode {
            Mode::Strict => neg && log_d >= self.deriv_bound,
            Mode::Empirical => neg,
        };
        InductionSample {
            beta,
            past_ok: past_bad.is_none(),
            regular_ok: reg_bad.is_none(),
            window_ok: beta >= self.window.0 && beta <= self.window.1,
            deriv_ok,
            log_abs_deriv: log_d,
            first_violation: first,
        }
    }
}

fn run_induction(sys: &QpfSystem, q: u32, l: i64, n: i64, check: &XiCheck, n_in_range: bool, samples: usize) -> Result<InductionReport> {
    let (alpha, _, _) = strict_constants(sys)?;
    let hint = (0.0, 1.5);
    let plus = solve_beta_precise(sys, l, n, 1.0 / alpha, hint)?;
    let minus = solve_beta_precise(sys, l, n, -1.0 / alpha, hint)?;
    let mut out = vec![
        check.sample(plus.beta, &plus.orbit, l, plus.log_abs_deriv, plus.deriv_negative),
        check.sample(minus.beta, &minus.orbit, l, minus.log_abs_deriv, minus.deriv_negative),
    ];
    let p = plus.prec;
    for k in 1..=samples {
        let t = k as f64 / (samples + 1) as f64;
        let diff = Float::with_val(p, &minus.beta_mp - &plus.beta_mp);
        let b = Float::with_val(p, &plus.beta_mp + diff * t);
        let (orbit, ld, neg) = xi_trajectory_mp(sys, &b, l, n)?;
        out.push(check.sample(b.to_f64(), &orbit, l, ld, neg));
    }
    let width = minus.beta - plus.beta;
    let width_bound = 2.0 * alpha.powf(-(n as f64) / 4.0);
    let width_ok = width >= 0.0 && width <= width_bound;
    let sample_ok = out.iter().all(|s| s.past_ok && s.regular_ok && s.window_ok && s.deriv_ok);
    Ok(InductionReport {
        q,
        n,
        l,
        mode: check.mode,
        n_in_range,
        beta_plus: plus.beta,
        beta_minus: minus.beta,
        width,
        width_bound,
        width_ok,
        window: check.window,
        deriv_bound: check.deriv_bound,
        samples: out,
        holds: sample_ok && (width_ok || check.mode == Mode::Empirical),
    })
}

fn window_for(alpha: f64) -> (f64, f64) {
    (1.0 + 1.0 / alpha.sqrt(), 1.0 + 3.0 / alpha.sqrt())
}

/// Checks the induction statements for `q` at time `n` on `[β⁺, β⁻]`,
/// where `ξ_n(β^±, l⁻_q) = ±1/α`, at the endpoints and `samples` interior
/// parameters.
pub fn verify_induction(sys: &QpfSystem, table: &TimeSetTable, q: u32, n: i64, samples: usize, mode: Mode) -> Result<InductionReport> {
    refuse_if_strict(sys, mode)?;
    let (alpha, gamma, _) = strict_constants(sys)?;
    let l = table
        .l_minus(q)
        .ok_or_else(|| QpfError::InvalidArgument(format!("no l chosen for q = {q}")))?;
    if n < 1 || n > table.hi || l > -table.lo {
        return Err(QpfError::InvalidArgument(format!("n = {n}, l = {l} outside the table window")));
    }
    let past: Vec<i64> = (-l..=0).filter(|&j| !table.in_omega_inf(j)).collect();
    let regular: Vec<i64> = if q == 0 {
        (1..=n).collect()
    } else {
        let r = table.regular_set_any(n);
        (1..=n).filter(|&j| r.contains(j)).collect()
    };
    let lp = table.l_plus(q).unwrap_or(0);
    let upper = table.nu(q + 1).unwrap_or(table.hi);
    let n_in_range = n > lp && n <= upper && table.is_admissible(n);
    let check = XiCheck {
        past: &past,
        regular: &regular,
        gamma,
        radius: 1.0 / alpha,
        window: window_for(alpha),
        deriv_bound: (n - 1) as f64 / 4.0 * alpha.ln(),
        mode,
    };
    run_induction(sys, q, l, n, &check, n_in_range, samples)
}

/// Whether `(l, n)` avoids close returns: `d(ω_j, 0) ≥ 3γ/L2` for
/// `j ∈ [−l, −1] ∪ [1, n − 1]`.
pub fn start_hypothesis(sys: &QpfSystem, l: i64, n: i64) -> Result<bool> {
    let (_, gamma, l2) = strict_constants(sys)?;
    let thr = 3.0 * gamma / l2;
    let omega = sys.omega();
    Ok((-l..n).filter(|&j| j != 0).all(|j| circle_dist(orbit_point(omega, j), 0.0) >= thr))
}

/// Checks the start of the induction for an explicit pair `(l, n)`: the
/// past orbit on `[−l, 0]` stays above `γ` and `ξ_j ∈ B̄_{1/α}` for
/// `j ∈ [1, n]`, for all `β ∈ [β⁺, β⁻]`.
pub fn induction_start_check(sys: &QpfSystem, l: i64, n: i64, samples: usize, mode: Mode) -> Result<InductionReport> {
    refuse_if_strict(sys, mode)?;
    let (alpha, gamma, _) = strict_constants(sys)?;
    let past: Vec<i64> = (-l..=0).collect();
    let regular: Vec<i64> = (1..=n).collect();
    let check = XiCheck {
        past: &past,
        regular: &regular,
        gamma,
        radius: 1.0 / alpha,
        window: window_for(alpha),
        deriv_bound: (n - 1) as f64 / 4.0 * alpha.ln(),
        mode,
    };
    let in_range = start_hypothesis(sys, l, n)?;
    run_induction(sys, 0, l, n, &check, in_range, samples)
}

/// A candidate for the sink-source orbit at level `p`.
#[derive(Debug, Clone, Serialize)]
pub struct SinkSourceCandidate {
    pub p: u32,
    pub l_minus: i64,
    pub l_plus: i64,
    pub beta: f64,
    /// Fibre of the candidate point, `ω_1`.
    pub theta: f64,
    /// `ξ_1` at `β_p`.
    pub x: f64,
    pub profile: ExponentProfile,
    pub floor: f64,
    pub min_forward: f64,
    pub min_backward: f64,
    pub forward_ok: bool,
    pub backward_ok: bool,
    pub prec: u32,
}

/// For `p = 1..=p_max` solves `ξ_{l⁺_p + 1}(β_p, l⁻_p) = 1/α` and records
/// the finite-time exponent profile of `(ω_1, ξ_1)`.
///
/// Forward horizons run to `l⁺_p`, backward ones to `l⁻_p`. The floor is
/// `(7/24)·log α` in strict mode and `0` in empirical mode.
pub fn sink_source_search(sys: &QpfSystem, table: &TimeSetTable, p_max: u32, mode: Mode) -> Result<Vec<SinkSourceCandidate>> {
    refuse_if_strict(sys, mode)?;
    let (alpha, _, _) = strict_constants(sys)?;
    let floor = match mode {
        Mode::Strict => 7.0 / 24.0 * alpha.ln(),
        Mode::Empirical => 0.0,
    };
    let mut out = Vec::new();
    for p in 1..=p_max {
        let (lm, lp) = match (table.l_minus(p), table.l_plus(p)) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(QpfError::InvalidArgument(format!("no l chosen for p = {p}"))),
        };
        let n = lp + 1;
        let sol = solve_beta_precise(sys, lm, n, 1.0 / alpha, (0.0, 1.5))?;
        let profile = profile_from_orbit(&sys.with_beta(sol.beta), &sol.orbit, -lm, 1, lp as usize, lm as usize);
        let min_forward = profile.forward.iter().copied().fold(f64::INFINITY, f64::min);
        let min_backward = profile.backward.iter().copied().fold(f64::INFINITY, f64::min);
        out.push(SinkSourceCandidate {
            p,
            l_minus: lm,
            l_plus: lp,
            beta: sol.beta,
            theta: sys.spec.orbit_point(1),
            x: sol.at(1),
            min_forward,
            min_backward,
            forward_ok: min_forward > floor,
            backward_ok: min_backward > floor,
            floor,
            profile,
            prec: sol.prec,
        });
    }
    Ok(out)
}

/// `β^±` for the symmetric family, found by scanning a parent interval.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SymmetricInterval {
    pub beta_plus: f64,
    pub beta_minus: f64,
    pub l: i64,
    pub n: i64,
}

fn bisect_crossing(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    // f(a) > 0 ≥ f(b)
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if f(m) > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    b
}

/// `β⁺` is the first `β` in the parent interval with `ξ_n ≤ 1/α`, `β⁻` the
/// first `β` after it with `ξ_n ≤ −1/α`. The scan uses `scan` equal steps.
pub fn solve_beta_symmetric(sys: &QpfSystem, alpha: f64, l: i64, n: i64, parent: (f64, f64), scan: usize) -> Result<SymmetricInterval> {
    let (lo, hi) = parent;
    if !(lo < hi) || scan < 2 {
        return Err(QpfError::InvalidArgument("empty parent interval".into()));
    }
    let h = (hi - lo) / scan as f64;
    let first_below = |target: f64, from: f64| -> Result<f64> {
        let f = |b: f64| xi(sys, b, l, n) - target;
        let mut prev = from;
        if f(prev) <= 0.0 {
            return Ok(prev);
        }
        let start = ((from - lo) / h).floor() as usize + 1;
        for k in start..=scan {
            let b = lo + k as f64 * h;
            if f(b) <= 0.0 {
                return Ok(bisect_crossing(f, prev, b));
            }
            prev = b;
        }
        Err(QpfError::NoCrossing { target })
    };
    let beta_plus = first_below(1.0 / alpha, lo)?;
    let beta_minus = first_below(-1.0 / alpha, beta_plus)?;
    Ok(SymmetricInterval { beta_plus, beta_minus, l, n })
}

/// `max_k |ζ_k + ξ_k|`, where `ζ` runs from `−3` on the fibres shifted by
/// `1/2`. Zero up to rounding for the symmetric family.
pub fn symmetric_zeta_check(sys: &QpfSystem, beta: f64, l: i64, n: i64) -> f64 {
    let omega = sys.omega();
    let (mut x, mut z) = (3.0, -3.0);
    let mut gap: f64 = 0.0;
    for j in -l..n {
        let t = orbit_point(omega, j);
        x = step_f64(sys, beta, t, x);
        z = step_f64(sys, beta, wrap(0.5 + t), z);
        gap = gap.max((x + z).abs());
    }
    gap
}

/// `max_k |φ⁻(θ_k) + φ⁺(θ_k + 1/2)|` on a uniform grid of even size `g`.
pub fn symmetric_graph_gap(sys: &QpfSystem, g: usize, iterates: usize) -> Result<f64> {
    if g % 2 != 0 {
        return Err(QpfError::InvalidArgument("grid size must be even".into()));
    }
    let upper = iterate_boundary(sys, Boundary::Upper, iterates, g);
    let lower = iterate_boundary(sys, Boundary::Lower, iterates, g);
    Ok((0..g)
        .map(|k| (lower.values[k] + upper.values[(k + g / 2) % g]).abs())
        .fold(0.0, f64::max))
}

/// Settings of the smooth/non-smooth classification and the scaling fit.
#[derive(Debug, Clone, Serialize)]
pub struct ScalingOptions {
    pub n_avg: usize,
    pub transient: usize,
    pub eps_cls: f64,
    /// Offsets `δ` below the critical parameter.
    pub offsets: Vec<f64>,
    pub grid: usize,
    /// Orbit points `ω_j`, `|j| ≤ orbit_points`, added to the grid.
    pub orbit_points: i64,
    pub graph_iterates: usize,
}

impl Default for ScalingOptions {
    fn default() -> Self {
        ScalingOptions {
            n_avg: 100_000,
            transient: 10_000,
            eps_cls: 0.05,
            offsets: vec![1e-2, 10f64.powf(-2.5), 1e-3, 10f64.powf(-3.5)],
            grid: 1024,
            orbit_points: 200,
            graph_iterates: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Collision {
    NonSmooth,
    Smooth,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingPoint {
    pub delta: f64,
    pub beta: f64,
    pub gap: f64,
    pub argmin: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingReport {
    pub beta_eval: f64,
    pub lyap_upper: f64,
    pub lyap_middle: f64,
    pub collision: Collision,
    pub points: Vec<ScalingPoint>,
    pub exponent: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Exponents of the upper graph (forward orbit from the top) and of the
/// repelling graph (backward orbit from `0`) at `β`.
pub fn collision_exponents(sys: &QpfSystem, opts: &ScalingOptions) -> Result<(f64, f64)> {
    let (_, top) = sys.domain();
    let upper = orbit_lyapunov(sys, 0.0, top, opts.n_avg, opts.transient);
    let middle = backward_orbit_lyapunov(sys, 0.0, 0.0, opts.n_avg, opts.transient)?;
    Ok((upper, middle))
}

/// Classifies the collision from the two exponents: separated exponents
/// mean a non-smooth collision, two neutral ones a smooth one.
pub fn classify(upper: f64, middle: f64, eps: f64) -> Result<Collision> {
    if upper < -eps && middle > eps {
        Ok(Collision::NonSmooth)
    } else if upper.abs() < eps && middle.abs() < eps {
        Ok(Collision::Smooth)
    } else {
        Err(QpfError::Inconclusive { upper, middle })
    }
}

/// Minimum over the fibre set of `φ⁺ − ψ` at `β`.
pub fn graph_gap(sys: &QpfSystem, fibres: &[f64], iterates: usize) -> Result<(f64, f64)> {
    let (_, top) = sys.domain();
    let gaps: Vec<Result<(f64, f64)>> = fibres
        .par_iter()
        .map(|&t| {
            let up = pushforward(sys, t, top, iterates);
            let mid = pullback(sys, t, 0.0, iterates)?;
            Ok((up - mid, t))
        })
        .collect();
    let mut best = (f64::INFINITY, 0.0);
    for g in gaps {
        let g = g?;
        if g.0 < best.0 {
            best = g;
        }
    }
    Ok(best)
}

/// Classifies the collision at the midpoint of `bracket` and fits
/// `log Δ_β ≈ a + b·log δ` for `β = β_c − δ`.
pub fn classify_and_scale<F>(factory: F, bracket: &BetaBracket, opts: &ScalingOptions) -> Result<ScalingReport>
where
    F: Fn(f64) -> QpfSystem,
{
    let beta_eval = bracket.mid();
    let sys = factory(beta_eval);
    let (upper, middle) = collision_exponents(&sys, opts)?;
    let collision = classify(upper, middle, opts.eps_cls)?;
    let omega = sys.omega();
    let mut fibres = uniform_grid(opts.grid);
    fibres.extend((-opts.orbit_points..=opts.orbit_points).map(|j| orbit_point(omega, j)));
    let mut points = Vec::with_capacity(opts.offsets.len());
    for &delta in &opts.offsets {
        let beta = beta_eval - delta;
        let (gap, argmin) = graph_gap(&factory(beta), &fibres, opts.graph_iterates)?;
        points.push(ScalingPoint { delta, beta, gap, argmin });
    }
    let fit: Vec<(f64, f64)> = points.iter().filter(|p| p.gap > 0.0).map(|p| (p.delta.ln(), p.gap.ln())).collect();
    let (exponent, intercept, r2) = if fit.len() >= 2 { linear_fit(&fit) } else { (f64::NAN, f64::NAN, f64::NAN) };
    Ok(ScalingReport { beta_eval, lyap_upper: upper, lyap_middle: middle, collision, points, exponent, intercept, r2 })
}

/// One comparison lemma: whether its hypotheses held on the given pair of
/// orbits and, if so, whether the conclusion did.
#[derive(Debug, Clone, Serialize)]
pub struct LemmaOutcome {
    pub name: &'static str,
    pub hypotheses_hold: bool,
    pub conclusion_holds: bool,
    pub detail: String,
}

impl LemmaOutcome {
    /// A lemma is contradicted only when its hypotheses hold and its
    /// conclusion fails.
    pub fn contradicted(&self) -> bool {
        self.hypotheses_hold && !self.conclusion_holds
    }
}

#[derive(Default)]
struct Tally {
    applicable: usize,
    failed: usize,
    first_failure: Option<usize>,
    seen: usize,
}

impl Tally {
    fn record(&mut self, hyp: bool, concl: bool) {
        self.seen += 1;
        if hyp {
            self.applicable += 1;
            if !concl {
                self.failed += 1;
                self.first_failure.get_or_insert(self.seen);
            }
        }
    }

    fn outcome(&self, name: &'static str, extra: String) -> LemmaOutcome {
        LemmaOutcome {
            name,
            hypotheses_hold: self.applicable > 0,
            conclusion_holds: self.failed == 0,
            detail: format!(
                "{extra}; hypotheses hold at {} of {} times, conclusion fails at {} (first n = {:?})",
                self.applicable, self.seen, self.failed, self.first_failure
            ),
        }
    }
}

/// Two orbits of the same family at nearby fibres and parameters.
///
/// `x1[k]`, `x2[k]` hold `x_{k+1}`; the fibre of `x^i_j` is `θ_i + ω_{j−1}`.
#[derive(Debug, Clone)]
pub struct OrbitPair<'a> {
    pub x1: &'a [f64],
    pub x2: &'a [f64],
    pub theta1: f64,
    pub theta2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OrbitPair<'_> {
    fn len(&self) -> usize {
        self.x1.len().min(self.x2.len())
    }
}

/// Evaluates the error-term remark, the contraction lemma and the two
/// throw-out statements on a pair of orbits.
///
/// Each lemma is tested at every end time `n` for which its hypotheses
/// hold on the data; the outcome fails if any such `n` violates the
/// conclusion.
pub fn comparison_oracles(sys: &QpfSystem, hyps: &HypothesisReport, pair: &OrbitPair) -> Result<Vec<LemmaOutcome>> {
    let c = sys
        .strict
        .as_ref()
        .ok_or_else(|| QpfError::InvalidArgument("system carries no constants".into()))?;
    let (_, forcing, _) = sys.additive_parts().ok_or(QpfError::NotMonotone)?;
    let (alpha, gamma) = (c.alpha, c.gamma);
    let k = c.k();
    let eps = pair.eps;
    let omega = sys.omega();
    let len = pair.len();
    if len < 2 {
        return Err(QpfError::InvalidArgument("orbits too short".into()));
    }
    let hyp = |name: &str| hyps.get(name).unwrap_or(false);

    // err(θ1, θ2, β1, β2) = sup_{|n| ≤ 1000} |β1 g(θ1 + ω_n) − β2 g(θ2 + ω_n)|
    let err = (-1000..=1000)
        .map(|n| {
            let o = orbit_point(omega, n);
            (pair.beta1 * forcing.eval(wrap(pair.theta1 + o)) - pair.beta2 * forcing.eval(wrap(pair.theta2 + o))).abs()
        })
        .fold(0.0, f64::max);
    let mut out = Vec::new();

    let remark_h = (1.0..=1.5).contains(&pair.beta1)
        && (1.0..=1.5).contains(&pair.beta2)
        && (pair.beta1 - pair.beta2).abs() < 2.0 * eps
        && circle_dist(pair.theta1, pair.theta2) <= 2.0 * eps / c.l2;
    out.push(LemmaOutcome {
        name: "errorterm",
        hypotheses_hold: remark_h,
        conclusion_holds: err <= k * eps,
        detail: format!("err = {err:.3e}, K eps = {:.3e}", k * eps),
    });

    let radius = 1.0 / alpha;
    let in_ball = |x: f64| x.abs() <= radius;
    let prefix = |flag: &dyn Fn(usize) -> bool| -> Vec<usize> {
        let mut v = vec![0; len + 1];
        for i in 1..=len {
            v[i] = v[i - 1] + usize::from(flag(i));
        }
        v
    };
    let x1 = |i: usize| pair.x1[i - 1];
    let x2 = |i: usize| pair.x2[i - 1];
    // η(j, n): times in [j, n] with either orbit below γ
    let below = prefix(&|i| x1(i) < gamma || x2(i) < gamma);
    let eta = |j: usize, n: usize| (below[n] - below[j - 1]) as f64;
    // τ(n): times in [1, n] with the first orbit outside the ball
    let outside = prefix(&|i| !in_ball(x1(i)));
    let tau = |j: usize| outside[j] as f64;

    let sinf = s_infinity(alpha.powf(0.25));
    let bound = eps * (6.0 + k * sinf);
    let contraction_base = hyp("Funiformbounds") && hyp("Fcontraction") && err <= k * eps;
    let mut tally = Tally::default();
    for n in 1..len {
        let h = contraction_base
            && (1..=n).all(|j| eta(j, n) <= (n + 1 - j) as f64 / 10.0)
            && alpha.powf(-(n as f64) / 4.0) <= eps;
        tally.record(h, (x1(n + 1) - x2(n + 1)).abs() <= bound);
    }
    out.push(tally.outcome("contraction", format!("bound = {bound:.3e}")));

    let q = (-(eps.ln()) / alpha.ln()).floor();
    let throw_base = hyp("alphagamma0")
        && hyp("Funiformbounds")
        && hyp("Fexpansion")
        && hyp("alpha1")
        && err <= k * eps
        && q >= 1.0;
    let up = 2.0 / alpha;
    let (mut ta, mut tb) = (Tally::default(), Tally::default());
    for n in 1..len {
        let h = throw_base
            && in_ball(x1(n + 1))
            && tau(n) <= ((2.0 * q - 3.0) / 4.0).max(0.0)
            && (1..=n).all(|j| tau(n) - tau(j) <= (n - j) as f64 / 6.0);
        let concl = x2(n + 1) >= up;
        ta.record(h && in_ball(x1(1)) && x2(1) >= up, concl);
        let hb = h && (n as f64) >= 5.0 * q && (1..=n).all(|j| tau(j) <= j as f64 / 8.0) && x2(1) >= x1(1) + eps / 2.0;
        tb.record(hb, concl);
    }
    out.push(ta.outcome("throwout_a", format!("q = {q}")));
    out.push(tb.outcome("throwout_b", format!("q = {q}")));
    Ok(out)
}
