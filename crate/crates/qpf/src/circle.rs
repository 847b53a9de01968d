//! Circle arithmetic on 𝕋¹ = ℝ/ℤ, orbits of an irrational rotation and
//! Diophantine utilities.
//!
//! Angles are plain `f64` values in `[0, 1)`. Rotation orbits `nω mod 1` are
//! evaluated with an error-free product so that the result carries at most
//! one rounding error regardless of `n`.

use serde::Serialize;

/// Wraps a real number into `[0, 1)`.
#[inline]
pub fn wrap(x: f64) -> f64 {
    let r = x - x.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// A point of the circle, always normalised to `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct CircleAngle(f64);

impl CircleAngle {
    pub fn new(x: f64) -> Self {
        CircleAngle(wrap(x))
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn add(self, delta: f64) -> Self {
        CircleAngle::new(self.0 + delta)
    }

    pub fn sub(self, delta: f64) -> Self {
        CircleAngle::new(self.0 - delta)
    }
}

/// Distance on the circle: `min(|a-b|, 1-|a-b|)`.
#[inline]
pub fn circle_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).abs().fract();
    d.min(1.0 - d)
}

/// Distance from `a` to the nearest point of `set`.
pub fn circle_dist_to_set(a: f64, set: &[f64]) -> f64 {
    set.iter()
        .map(|&s| circle_dist(a, s))
        .fold(f64::INFINITY, f64::min)
}

/// An irrational rotation number with fitted Diophantine metadata.
#[derive(Debug, Clone, Serialize)]
pub struct RotationSpec {
    pub omega: f64,
    /// Partial quotients that are reliable at double precision.
    pub cf_partial_quotients: Vec<u64>,
    pub dioph_c: f64,
    pub dioph_d: f64,
}

impl RotationSpec {
    /// Builds a spec, computing the reliable continued-fraction prefix and a
    /// fitted Diophantine pair on `[1, 10^4]`.
    pub fn new(omega: f64) -> Self {
        assert!(omega > 0.0 && omega < 1.0, "rotation number must lie in (0,1)");
        let (cf, _) = continued_fraction(omega, 64);
        let mut spec = RotationSpec {
            omega,
            cf_partial_quotients: cf,
            dioph_c: 1.0,
            dioph_d: 1.0,
        };
        let fit = estimate_dioph(&spec, 10_000);
        spec.dioph_c = fit.c;
        spec.dioph_d = fit.d;
        spec
    }

    /// The golden mean `(√5 − 1)/2` at working precision.
    pub fn golden_mean() -> Self {
        Self::new((5f64.sqrt() - 1.0) / 2.0)
    }

    /// The silver mean `√2 − 1`.
    pub fn silver_mean() -> Self {
        Self::new(2f64.sqrt() - 1.0)
    }

    /// `ω_n = nω mod 1`.
    #[inline]
    pub fn orbit_point(&self, n: i64) -> f64 {
        orbit_point(self.omega, n)
    }
}

/// `nω mod 1`, exact up to a single rounding for `|n| < 2^53`.
#[inline]
pub fn orbit_point(omega: f64, n: i64) -> f64 {
    let nf = n as f64;
    let p = nf * omega;
    let e = nf.mul_add(omega, -p);
    let frac = p - p.floor();
    wrap(frac + e)
}

/// Result of [`continued_fraction`].
pub type PartialQuotients = (Vec<u64>, bool);

/// First `k` partial quotients of `omega`, together with a flag that is set
/// when fewer than `k` quotients are reliable at double precision.
///
/// The expansion is computed exactly for the dyadic rational represented by
/// `omega`; quotients are kept while the convergent denominators stay below
/// `2^25`, beyond which the representation error of `omega` can change them.
pub fn continued_fraction(omega: f64, k: usize) -> PartialQuotients {
    assert!(omega > 0.0 && omega < 1.0 && k >= 1);
    const SCALE: u128 = 1 << 60;
    let mut num: u128 = (omega * SCALE as f64).round() as u128;
    let mut den: u128 = SCALE;
    // omega = num/den; expansion of den/num gives a1, a2, ...
    let mut out = Vec::new();
    let (mut q_prev, mut q) = (0u128, 1u128);
    let limit: u128 = 1 << 25;
    while out.len() < k && num != 0 {
        let a = den / num;
        let r = den % num;
        let q_next = a.saturating_mul(q).saturating_add(q_prev);
        if q_next > limit {
            return (out, true);
        }
        out.push(a as u64);
        q_prev = q;
        q = q_next;
        den = num;
        num = r;
    }
    let truncated = out.len() < k;
    (out, truncated)
}

/// Fitted Diophantine constants.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DiophFit {
    pub c: f64,
    pub d: f64,
    /// Whether the stored pair of the spec satisfies the bound on `[1, N]`.
    pub holds: bool,
}

/// Indices `n ∈ [1, N]` where `d(ω_n, 0)` attains a new minimum.
pub fn record_returns(spec: &RotationSpec, n_max: i64) -> Vec<(i64, f64)> {
    let mut best = f64::INFINITY;
    let mut out = Vec::new();
    for n in 1..=n_max {
        let d = circle_dist(spec.orbit_point(n), 0.0);
        if d < best {
            best = d;
            out.push((n, d));
        }
    }
    out
}

/// Fits `d(ω_n, 0) ≥ c·n^{−d}` on `[1, N]`.
///
/// The exponent is the least-squares slope of the record returns in log-log
/// coordinates; `c` is then the largest constant for which the bound holds
/// on the whole range.
pub fn estimate_dioph(spec: &RotationSpec, n_max: i64) -> DiophFit {
    assert!(n_max >= 2);
    let records = record_returns(spec, n_max);
    let d = if records.len() >= 3 {
        let pts: Vec<(f64, f64)> = records
            .iter()
            .map(|&(n, dist)| ((n as f64).ln(), dist.ln()))
            .collect();
        let (slope, _, _) = linear_fit(&pts);
        (-slope).max(1e-3)
    } else {
        1.0
    };
    let mut c = f64::INFINITY;
    let mut holds = true;
    for n in 1..=n_max {
        let dist = circle_dist(spec.orbit_point(n), 0.0);
        let nf = n as f64;
        c = c.min(dist * nf.powf(d));
        if dist < spec.dioph_c * nf.powf(-spec.dioph_d) {
            holds = false;
        }
    }
    DiophFit { c, d, holds }
}

/// Ordinary least squares `y = a + b x`; returns `(b, a, r²)`.
pub fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (b, a, r2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dist_examples() {
        assert_eq!(circle_dist(0.0, 0.0), 0.0);
        assert!((circle_dist(0.1, 0.9) - 0.2).abs() < 1e-15);
        assert!((circle_dist(0.618034, 0.0) - 0.381966).abs() < 1e-12);
    }

    #[test]
    fn golden_orbit_points() {
        let g = RotationSpec::golden_mean();
        assert_eq!(g.orbit_point(0), 0.0);
        assert!((g.orbit_point(2) - (5f64.sqrt() - 2.0)).abs() < 1e-15);
        assert!((g.orbit_point(5) - (5.0 * g.omega - 3.0)).abs() < 1e-15);
    }

    #[test]
    fn cf_examples() {
        let (cf, _) = continued_fraction(RotationSpec::golden_mean().omega, 5);
        assert_eq!(cf, vec![1, 1, 1, 1, 1]);
        let (cf, _) = continued_fraction(2f64.sqrt() - 1.0, 4);
        assert_eq!(cf, vec![2, 2, 2, 2]);
        let (cf, flag) = continued_fraction(1.0 / 3.0 + 1e-15, 3);
        assert_eq!(&cf[..2], &[2, 1]);
        assert!(flag);
    }

    #[test]
    fn golden_cf_prefix_is_long() {
        let g = RotationSpec::golden_mean();
        assert!(g.cf_partial_quotients.len() >= 30);
        assert!(g.cf_partial_quotients.iter().all(|&a| a == 1));
    }
}
