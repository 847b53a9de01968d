//! Catalog of quasiperiodically forced fibre maps.
//!
//! A [`QpfSystem`] is a skew product `(θ, x) ↦ (θ + ω, T_θ(x))` over an
//! irrational rotation. The fibre maps come in a few shapes:
//!
//! * additive forcing `F(x) − β·g(θ)` (arctan families, Harper interval
//!   model, symmetric family),
//! * multiplicative forcing `F(x)·g(θ)` (pinched skew products),
//! * circle fibres (quasiperiodically forced Arnold maps),
//! * the projective Harper map and its Riccati form.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::circle::{circle_dist, circle_dist_to_set, wrap, RotationSpec};
use crate::error::{QpfError, Result};

/// Pure function of one real variable, shareable across threads.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
/// Pure function of `(θ, x)`.
pub type FibreFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Shape of a forcing function `g : 𝕋¹ → ℝ`.
#[derive(Clone)]
pub enum ForcingKind {
    /// `1 − sin(πθ)`.
    OneMinusSinPi,
    /// `sin(πθ)` for `θ ∈ [0,1)`.
    SinPi,
    /// `sin(2πθ)`.
    Sin2Pi,
    /// `cos(2πθ)`.
    Cos2Pi,
    /// `max{0, 1 − slope·d(θ, center)}`.
    Peak { slope: f64, center: f64 },
    /// `1 − 4·d(θ, 0)`.
    Tent,
    /// `inner(θ + shift)`.
    Shifted { inner: Box<ForcingKind>, shift: f64 },
    Custom(ScalarFn),
}

impl fmt::Debug for ForcingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ForcingKind::OneMinusSinPi => write!(f, "OneMinusSinPi"),
            ForcingKind::SinPi => write!(f, "SinPi"),
            ForcingKind::Sin2Pi => write!(f, "Sin2Pi"),
            ForcingKind::Cos2Pi => write!(f, "Cos2Pi"),
            ForcingKind::Peak { slope, center } => {
                write!(f, "Peak {{ slope: {slope}, center: {center} }}")
            }
            ForcingKind::Tent => write!(f, "Tent"),
            ForcingKind::Shifted { inner, shift } => write!(f, "Shifted({inner:?}, {shift})"),
            ForcingKind::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl ForcingKind {
    pub fn eval(&self, theta: f64) -> f64 {
        match self {
            ForcingKind::OneMinusSinPi => 1.0 - (PI * wrap(theta)).sin(),
            ForcingKind::SinPi => (PI * wrap(theta)).sin(),
            ForcingKind::Sin2Pi => (2.0 * PI * theta).sin(),
            ForcingKind::Cos2Pi => (2.0 * PI * theta).cos(),
            ForcingKind::Peak { slope, center } => {
                (1.0 - slope * circle_dist(theta, *center)).max(0.0)
            }
            ForcingKind::Tent => 1.0 - 4.0 * circle_dist(theta, 0.0),
            ForcingKind::Shifted { inner, shift } => inner.eval(wrap(theta + shift)),
            ForcingKind::Custom(f) => f(theta),
        }
    }
}

/// A forcing function with its Lipschitz and peak constants.
#[derive(Debug, Clone)]
pub struct ForcingFunction {
    pub kind: ForcingKind,
    /// Lipschitz constant `L1`.
    pub lipschitz_l1: f64,
    /// Slope `L2` of the sharp-peak bound.
    pub peak_l2: f64,
    /// Locations of the maximum (or of `±` extrema for symmetric forcing).
    pub peak_locations: Vec<f64>,
    pub range: (f64, f64),
}

impl ForcingFunction {
    #[inline]
    pub fn eval(&self, theta: f64) -> f64 {
        self.kind.eval(theta)
    }

    /// `g(θ) = 1 − sin(πθ)` with `L1 = π`, `L2 = 2`.
    pub fn one_minus_sin_pi() -> Self {
        ForcingFunction {
            kind: ForcingKind::OneMinusSinPi,
            lipschitz_l1: PI,
            peak_l2: 2.0,
            peak_locations: vec![0.0],
            range: (0.0, 1.0),
        }
    }

    pub fn sin_pi() -> Self {
        ForcingFunction {
            kind: ForcingKind::SinPi,
            lipschitz_l1: PI,
            peak_l2: 0.0,
            peak_locations: vec![0.5],
            range: (0.0, 1.0),
        }
    }

    pub fn sin_2pi() -> Self {
        ForcingFunction {
            kind: ForcingKind::Sin2Pi,
            lipschitz_l1: 2.0 * PI,
            peak_l2: 0.0,
            peak_locations: vec![0.25],
            range: (-1.0, 1.0),
        }
    }

    pub fn cos_2pi() -> Self {
        ForcingFunction {
            kind: ForcingKind::Cos2Pi,
            lipschitz_l1: 2.0 * PI,
            peak_l2: 0.0,
            peak_locations: vec![0.0],
            range: (-1.0, 1.0),
        }
    }

    /// `max{0, 1 − slope·d(θ, center)}`.
    pub fn peak(slope: f64, center: f64) -> Self {
        ForcingFunction {
            kind: ForcingKind::Peak { slope, center },
            lipschitz_l1: slope,
            peak_l2: slope,
            peak_locations: vec![wrap(center)],
            range: (0.0, 1.0),
        }
    }

    /// `1 − 4·d(θ, 0)`, odd under `θ ↦ θ + ½`.
    pub fn tent() -> Self {
        ForcingFunction {
            kind: ForcingKind::Tent,
            lipschitz_l1: 4.0,
            peak_l2: 4.0,
            peak_locations: vec![0.0, 0.5],
            range: (-1.0, 1.0),
        }
    }

    /// `θ ↦ self(θ + shift)`.
    pub fn shifted(self, shift: f64) -> Self {
        ForcingFunction {
            kind: ForcingKind::Shifted { inner: Box::new(self.kind), shift },
            peak_locations: self.peak_locations.iter().map(|&p| wrap(p - shift)).collect(),
            ..self
        }
    }

    pub fn custom(f: ScalarFn, l1: f64, l2: f64, peaks: Vec<f64>, range: (f64, f64)) -> Self {
        ForcingFunction {
            kind: ForcingKind::Custom(f),
            lipschitz_l1: l1,
            peak_l2: l2,
            peak_locations: peaks,
            range,
        }
    }
}

/// Shape of the unforced fibre map `F`.
#[derive(Clone)]
pub enum BaseKind {
    /// `arctan(αx)/arctan(α)`, fixed points `0, ±1`.
    NormalizedArctan { alpha: f64 },
    /// `arctan(αx)`.
    Arctan { alpha: f64 },
    /// `C(α)·arctan(α^{4/3}x)`, fixed points `0, ±(1 + 2/√α)`.
    RescaledArctan { alpha: f64, c: f64, slope: f64 },
    /// `tanh(αx)`.
    Tanh { alpha: f64 },
    /// `−s/(y/s + x1) + s(E − x1)`, the Riccati map in affine coordinates.
    HarperInterval { s: f64, x1: f64, e: f64 },
    Identity,
    Custom { f: ScalarFn, df: ScalarFn, inv: Option<ScalarFn> },
}

impl fmt::Debug for BaseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BaseKind::NormalizedArctan { alpha } => write!(f, "NormalizedArctan({alpha})"),
            BaseKind::Arctan { alpha } => write!(f, "Arctan({alpha})"),
            BaseKind::RescaledArctan { alpha, .. } => write!(f, "RescaledArctan({alpha})"),
            BaseKind::Tanh { alpha } => write!(f, "Tanh({alpha})"),
            BaseKind::HarperInterval { s, x1, e } => {
                write!(f, "HarperInterval {{ s: {s}, x1: {x1}, e: {e} }}")
            }
            BaseKind::Identity => write!(f, "Identity"),
            BaseKind::Custom { .. } => write!(f, "Custom"),
        }
    }
}

/// The unforced fibre map with its derivative, inverse and fixed points.
#[derive(Debug, Clone)]
pub struct FibreBase {
    pub kind: BaseKind,
    /// Fixed points `x_− < 0 < x_+` (the middle one is `0`).
    pub fixed_points: [f64; 3],
    pub domain: (f64, f64),
    pub negative_schwarzian: bool,
    pub concave_on_positive: bool,
}

impl FibreBase {
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        match &self.kind {
            BaseKind::NormalizedArctan { alpha } => (alpha * x).atan() / alpha.atan(),
            BaseKind::Arctan { alpha } => (alpha * x).atan(),
            BaseKind::RescaledArctan { c, slope, .. } => c * (slope * x).atan(),
            BaseKind::Tanh { alpha } => (alpha * x).tanh(),
            BaseKind::HarperInterval { s, x1, e } => -s / (x / s + x1) + s * (e - x1),
            BaseKind::Identity => x,
            BaseKind::Custom { f, .. } => f(x),
        }
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        match &self.kind {
            BaseKind::NormalizedArctan { alpha } => {
                alpha / (alpha.atan() * (1.0 + (alpha * x).powi(2)))
            }
            BaseKind::Arctan { alpha } => alpha / (1.0 + (alpha * x).powi(2)),
            BaseKind::RescaledArctan { c, slope, .. } => c * slope / (1.0 + (slope * x).powi(2)),
            BaseKind::Tanh { alpha } => {
                let t = (alpha * x).tanh();
                alpha * (1.0 - t * t)
            }
            BaseKind::HarperInterval { s, x1, .. } => 1.0 / (x / s + x1).powi(2),
            BaseKind::Identity => 1.0,
            BaseKind::Custom { df, .. } => df(x),
        }
    }

    /// `F⁻¹(y)` where it exists.
    pub fn inverse(&self, y: f64) -> Option<f64> {
        let r = match &self.kind {
            BaseKind::NormalizedArctan { alpha } => {
                let a = y * alpha.atan();
                if a.abs() >= FRAC_PI_2 {
                    return None;
                }
                a.tan() / alpha
            }
            BaseKind::Arctan { alpha } => {
                if y.abs() >= FRAC_PI_2 {
                    return None;
                }
                y.tan() / alpha
            }
            BaseKind::RescaledArctan { c, slope, .. } => {
                let a = y / c;
                if a.abs() >= FRAC_PI_2 {
                    return None;
                }
                a.tan() / slope
            }
            BaseKind::Tanh { alpha } => {
                if y.abs() >= 1.0 {
                    return None;
                }
                y.atanh() / alpha
            }
            BaseKind::HarperInterval { s, x1, e } => {
                let top = s * (e - x1);
                if y >= top {
                    return None;
                }
                s * (-s / (y - top) - x1)
            }
            BaseKind::Identity => y,
            BaseKind::Custom { inv, .. } => inv.as_ref()?(y),
        };
        r.is_finite().then_some(r)
    }
}

/// Parameters of the quasiperiodically forced Arnold map.
#[derive(Debug, Clone)]
pub struct ArnoldParams {
    pub tau: f64,
    pub alpha: f64,
    pub beta: f64,
    pub forcing: ArnoldForcing,
}

/// Forcing variants for the Arnold map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ArnoldForcing {
    /// `+β·sin(2πθ)`.
    Sine,
    /// `−β·max{0, 1 − 10·d(θ,½)}`.
    Peak,
}

/// The fibre maps of a system.
#[derive(Clone)]
pub enum FibreMap {
    /// `F(x) − β·g(θ)`.
    Additive { base: FibreBase, forcing: ForcingFunction, beta: f64 },
    /// `F(x)·g(θ)`.
    Multiplicative { base: FibreBase, forcing: ForcingFunction },
    /// Circle fibre, values taken mod 1.
    Arnold(ArnoldParams),
    /// `arctan(1/(tan(−x) − E + λV(θ)))` on `(−π/2, π/2]`.
    HarperProjective { e: f64, lambda: f64, potential: ForcingFunction },
    /// `−1/x + E − λV(θ+ω)` on the extended reals.
    Riccati { e: f64, lambda: f64, potential: ForcingFunction },
    Custom { f: FibreFn, df: FibreFn, domain: (f64, f64) },
}

impl fmt::Debug for FibreMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FibreMap::Additive { base, forcing, beta } => f
                .debug_struct("Additive")
                .field("base", &base.kind)
                .field("forcing", &forcing.kind)
                .field("beta", beta)
                .finish(),
            FibreMap::Multiplicative { base, forcing } => f
                .debug_struct("Multiplicative")
                .field("base", &base.kind)
                .field("forcing", &forcing.kind)
                .finish(),
            FibreMap::Arnold(p) => write!(f, "Arnold({p:?})"),
            FibreMap::HarperProjective { e, lambda, .. } => {
                write!(f, "HarperProjective {{ e: {e}, lambda: {lambda} }}")
            }
            FibreMap::Riccati { e, lambda, .. } => write!(f, "Riccati {{ e: {e}, lambda: {lambda} }}"),
            FibreMap::Custom { domain, .. } => write!(f, "Custom {{ domain: {domain:?} }}"),
        }
    }
}

/// Constants of the quantitative hypotheses.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StrictConstants {
    pub alpha: f64,
    pub gamma: f64,
    pub l1: f64,
    pub l2: f64,
}

impl StrictConstants {
    /// `K = 3·L1/L2 + 2`.
    pub fn k(&self) -> f64 {
        3.0 * self.l1 / self.l2 + 2.0
    }
}

/// A quasiperiodically forced system `(θ, x) ↦ (θ + ω, T_θ(x))`.
#[derive(Debug, Clone)]
pub struct QpfSystem {
    pub name: String,
    pub map: FibreMap,
    pub spec: RotationSpec,
    pub strict: Option<StrictConstants>,
    /// Whether the family satisfies `−T_θ(x) = T_{θ+½}(−x)`.
    pub symmetric: bool,
}

impl QpfSystem {
    pub fn omega(&self) -> f64 {
        self.spec.omega
    }

    /// `T_θ(x)` without domain checks.
    #[inline]
    pub fn apply(&self, theta: f64, x: f64) -> f64 {
        match &self.map {
            FibreMap::Additive { base, forcing, beta } => base.value(x) - beta * forcing.eval(theta),
            FibreMap::Multiplicative { base, forcing } => base.value(x) * forcing.eval(theta),
            FibreMap::Arnold(p) => wrap(arnold_lift(p, theta, x)),
            FibreMap::HarperProjective { e, lambda, potential } => {
                let t = (-x).tan() - e + lambda * potential.eval(theta);
                projective_atan_recip(t)
            }
            FibreMap::Riccati { e, lambda, potential } => {
                -1.0 / x + e - lambda * potential.eval(wrap(theta + self.spec.omega))
            }
            FibreMap::Custom { f, .. } => f(theta, x),
        }
    }

    /// `T_θ(x)`, failing if the value leaves the domain.
    pub fn fibre_apply(&self, theta: f64, x: f64) -> Result<f64> {
        let y = self.apply(theta, x);
        if self.is_circle() || matches!(self.map, FibreMap::Riccati { .. }) {
            return Ok(y);
        }
        let (lo, hi) = self.domain();
        if !(lo..=hi).contains(&y) {
            return Err(QpfError::DomainExit { value: y, lo, hi });
        }
        Ok(y)
    }

    /// `∂T_θ/∂x`.
    #[inline]
    pub fn derivative(&self, theta: f64, x: f64) -> f64 {
        match &self.map {
            FibreMap::Additive { base, .. } => base.derivative(x),
            FibreMap::Multiplicative { base, forcing } => base.derivative(x) * forcing.eval(theta),
            FibreMap::Arnold(p) => 1.0 + p.alpha * (2.0 * PI * x).cos(),
            FibreMap::HarperProjective { e, lambda, potential } => {
                let tx = x.tan();
                let t = -tx - e + lambda * potential.eval(theta);
                (1.0 + tx * tx) / (1.0 + t * t)
            }
            FibreMap::Riccati { .. } => 1.0 / (x * x),
            FibreMap::Custom { df, .. } => df(theta, x),
        }
    }

    /// Preimage of `y` on the fibre over `θ`: the `x` with `T_θ(x) = y`.
    pub fn inverse(&self, theta: f64, y: f64) -> Result<f64> {
        let err = || QpfError::InverseOutOfRange { theta, value: y };
        let x = match &self.map {
            FibreMap::Additive { base, forcing, beta } => {
                base.inverse(y + beta * forcing.eval(theta)).ok_or_else(err)?
            }
            FibreMap::Multiplicative { base, forcing } => {
                let g = forcing.eval(theta);
                if g == 0.0 {
                    return Err(err());
                }
                base.inverse(y / g).ok_or_else(err)?
            }
            FibreMap::HarperProjective { e, lambda, potential } => {
                // y = arctan(1/t), t = tan(−x) − E + λV
                let t = 1.0 / y.tan();
                let tx = t + e - lambda * potential.eval(theta);
                -projective_atan(tx)
            }
            FibreMap::Riccati { e, lambda, potential } => {
                let c = e - lambda * potential.eval(wrap(theta + self.spec.omega));
                -1.0 / (y - c)
            }
            FibreMap::Arnold(p) => {
                if p.alpha.abs() >= 1.0 {
                    return Err(err());
                }
                arnold_inverse(p, theta, y)
            }
            FibreMap::Custom { .. } => {
                let (lo, hi) = self.domain();
                bracket_inverse(|x| self.apply(theta, x), y, lo, hi).ok_or_else(err)?
            }
        };
        if !x.is_finite() {
            return Err(err());
        }
        Ok(x)
    }

    /// Driven space `X`. Circle fibres report `[0, 1)`.
    pub fn domain(&self) -> (f64, f64) {
        match &self.map {
            FibreMap::Additive { base, .. } | FibreMap::Multiplicative { base, .. } => base.domain,
            FibreMap::Arnold(_) => (0.0, 1.0),
            FibreMap::HarperProjective { .. } => (-FRAC_PI_2, FRAC_PI_2),
            FibreMap::Riccati { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            FibreMap::Custom { domain, .. } => *domain,
        }
    }

    pub fn is_circle(&self) -> bool {
        matches!(self.map, FibreMap::Arnold(_) | FibreMap::HarperProjective { .. })
    }

    /// Forcing parameter of additive families.
    pub fn beta(&self) -> Option<f64> {
        match &self.map {
            FibreMap::Additive { beta, .. } => Some(*beta),
            FibreMap::Arnold(p) => Some(p.beta),
            _ => None,
        }
    }

    /// Copy with a new forcing parameter (additive and Arnold families).
    pub fn with_beta(&self, new_beta: f64) -> QpfSystem {
        let mut s = self.clone();
        match &mut s.map {
            FibreMap::Additive { beta, .. } => *beta = new_beta,
            FibreMap::Arnold(p) => p.beta = new_beta,
            _ => panic!("with_beta on a family without a forcing parameter"),
        }
        s
    }

    /// Whether the forcing is one-sided (`g ≥ 0`, acting downwards).
    pub fn one_sided(&self) -> bool {
        match &self.map {
            FibreMap::Additive { forcing, .. } => forcing.range.0 >= 0.0,
            _ => false,
        }
    }

    /// The unforced base and forcing of an additive system.
    pub fn additive_parts(&self) -> Option<(&FibreBase, &ForcingFunction, f64)> {
        match &self.map {
            FibreMap::Additive { base, forcing, beta } => Some((base, forcing, *beta)),
            _ => None,
        }
    }

    /// Forcing value `g(θ)` (or potential for Harper forms).
    pub fn forcing_value(&self, theta: f64) -> f64 {
        match &self.map {
            FibreMap::Additive { forcing, .. } | FibreMap::Multiplicative { forcing, .. } => {
                forcing.eval(theta)
            }
            FibreMap::HarperProjective { potential, .. } | FibreMap::Riccati { potential, .. } => {
                potential.eval(theta)
            }
            FibreMap::Arnold(p) => arnold_forcing(p, theta),
            FibreMap::Custom { .. } => 0.0,
        }
    }
}

/// `arctan(1/t)` in `(−π/2, π/2]`, with `t = 0 ↦ π/2`.
#[inline]
fn projective_atan_recip(t: f64) -> f64 {
    let a = 1f64.atan2(t);
    if a > FRAC_PI_2 {
        a - PI
    } else {
        a
    }
}

/// `arctan(v)` on the projective line, `±∞ ↦ π/2`.
#[inline]
fn projective_atan(v: f64) -> f64 {
    if v.is_infinite() {
        FRAC_PI_2
    } else {
        v.atan()
    }
}

fn arnold_forcing(p: &ArnoldParams, theta: f64) -> f64 {
    match p.forcing {
        ArnoldForcing::Sine => (2.0 * PI * theta).sin(),
        ArnoldForcing::Peak => -(1.0 - 10.0 * circle_dist(theta, 0.5)).max(0.0),
    }
}

#[inline]
fn arnold_lift(p: &ArnoldParams, theta: f64, x: f64) -> f64 {
    x + p.tau + p.alpha / (2.0 * PI) * (2.0 * PI * x).sin() + p.beta * arnold_forcing(p, theta)
}

fn arnold_inverse(p: &ArnoldParams, theta: f64, y: f64) -> f64 {
    // The lift minus x is 1-periodic, so solve lift(x) ∈ y + ℤ on [0,1).
    let c = p.tau + p.beta * arnold_forcing(p, theta);
    let target = y - c;
    let h = |x: f64| x + p.alpha / (2.0 * PI) * (2.0 * PI * x).sin();
    let k = (target - h(0.0)).floor();
    let t = target - k;
    let x = bracket_inverse(h, t, 0.0, 1.0).unwrap_or(0.0);
    wrap(x)
}

/// Monotone inversion by bisection on `[lo, hi]`.
pub fn bracket_inverse(f: impl Fn(f64) -> f64, y: f64, lo: f64, hi: f64) -> Option<f64> {
    let (mut a, mut b) = (lo, hi);
    let (fa, fb) = (f(a), f(b));
    let increasing = fb >= fa;
    let (min, max) = if increasing { (fa, fb) } else { (fb, fa) };
    if !(min..=max).contains(&y) {
        return None;
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let below = (f(m) < y) == increasing;
        if below {
            a = m;
        } else {
            b = m;
        }
    }
    Some(0.5 * (a + b))
}

fn arctan_domain() -> (f64, f64) {
    (-3.0, 3.0)
}

/// `arctan(αx)/arctan(α) − β·(1 − sin(πθ))`.
pub fn make_arctan_family(alpha: f64, beta: f64, spec: RotationSpec) -> QpfSystem {
    assert!(alpha > 1.0);
    QpfSystem {
        name: format!("arctan(alpha={alpha})"),
        map: FibreMap::Additive {
            base: FibreBase {
                kind: BaseKind::NormalizedArctan { alpha },
                fixed_points: [-1.0, 0.0, 1.0],
                domain: arctan_domain(),
                negative_schwarzian: true,
                concave_on_positive: true,
            },
            forcing: ForcingFunction::one_minus_sin_pi(),
            beta,
        },
        spec,
        strict: None,
        symmetric: false,
    }
}

/// `C(α) = (1 + 2/√α) / arctan(α^{4/3} + 2α^{5/6})`.
pub fn rescaled_constant(alpha: f64) -> f64 {
    (1.0 + 2.0 / alpha.sqrt()) / (alpha.powf(4.0 / 3.0) + 2.0 * alpha.powf(5.0 / 6.0)).atan()
}

/// The rescaled arctan family `C(α)·arctan(α^{4/3}x) − β·(1 − sin(πθ))`
/// as a factory over `β`.
#[derive(Debug, Clone)]
pub struct RescaledArctanFamily {
    pub alpha: f64,
    pub spec: RotationSpec,
    pub gamma: f64,
}

impl RescaledArctanFamily {
    /// `x_α = 1 + 2/√α`.
    pub fn x_alpha(&self) -> f64 {
        1.0 + 2.0 / self.alpha.sqrt()
    }

    pub fn base(&self) -> FibreBase {
        let xa = self.x_alpha();
        FibreBase {
            kind: BaseKind::RescaledArctan {
                alpha: self.alpha,
                c: rescaled_constant(self.alpha),
                slope: self.alpha.powf(4.0 / 3.0),
            },
            fixed_points: [-xa, 0.0, xa],
            domain: arctan_domain(),
            negative_schwarzian: true,
            concave_on_positive: true,
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn at(&self, beta: f64) -> QpfSystem {
        QpfSystem {
            name: format!("rescaled-arctan(alpha={})", self.alpha),
            map: FibreMap::Additive {
                base: self.base(),
                forcing: ForcingFunction::one_minus_sin_pi(),
                beta,
            },
            spec: self.spec.clone(),
            strict: Some(StrictConstants { alpha: self.alpha, gamma: self.gamma, l1: PI, l2: 2.0 }),
            symmetric: false,
        }
    }
}

/// Rescaled arctan factory; `γ` defaults to `1/16`.
pub fn make_rescaled_arctan(alpha: f64, spec: RotationSpec) -> RescaledArctanFamily {
    assert!(alpha >= 1.0);
    RescaledArctanFamily { alpha, spec, gamma: 1.0 / 16.0 }
}

/// Reparametrisation maps relating the arctan family to the rescaled one.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ArctanConjugacy {
    pub sigma1: f64,
    pub tau1: f64,
    /// `σ(α) = σ₂⁻¹(σ₁(α))`.
    pub sigma: f64,
    /// `τ(α) = τ₁(α) / τ₂(σ(α))`.
    pub tau: f64,
    /// Scale `k` with `T̃_{σ,τβ}(k·x) = k·T_{α,β}(x)`.
    pub scale: f64,
}

/// `σ₂(a) = C(a)·a^{4/3}`.
fn sigma2(a: f64) -> f64 {
    rescaled_constant(a) * a.powf(4.0 / 3.0)
}

/// Computes `σ(α)` and `τ(α)`; `σ₂⁻¹` by bisection in `log a`.
pub fn conjugacy_maps_arctan(alpha: f64) -> ArctanConjugacy {
    assert!(alpha > 0.0);
    let sigma1 = alpha / alpha.atan();
    let tau1 = alpha.atan();
    let (mut lo, mut hi) = (-40f64, 40f64);
    for _ in 0..200 {
        let m = 0.5 * (lo + hi);
        if sigma2(m.exp()) < sigma1 {
            lo = m;
        } else {
            hi = m;
        }
    }
    let sigma = (0.5 * (lo + hi)).exp();
    let c = rescaled_constant(sigma);
    // τ₂(a) = 1/C(a)
    let tau = tau1 * c;
    ArctanConjugacy { sigma1, tau1, sigma, tau, scale: c * tau1 }
}

/// Projective Harper map `arctan(1/(tan(−x) − E + λV(θ)))`.
pub fn make_harper(e: f64, lambda: f64, potential: ForcingFunction, spec: RotationSpec) -> QpfSystem {
    QpfSystem {
        name: format!("harper(E={e}, lambda={lambda})"),
        map: FibreMap::HarperProjective { e, lambda, potential },
        spec,
        strict: None,
        symmetric: false,
    }
}

/// Riccati form `−1/x + E − λV(θ + ω)`.
pub fn make_riccati(e: f64, lambda: f64, potential: ForcingFunction, spec: RotationSpec) -> QpfSystem {
    QpfSystem {
        name: format!("riccati(E={e}, lambda={lambda})"),
        map: FibreMap::Riccati { e, lambda, potential },
        spec,
        strict: None,
        symmetric: false,
    }
}

/// The Riccati map rewritten as an interval map fixing `0` and `1 + 2/√α`.
#[derive(Debug, Clone, Serialize)]
pub struct HarperIntervalModel {
    pub e: f64,
    /// `α = E^{3/2}`.
    pub alpha: f64,
    pub x1: f64,
    pub x2: f64,
    pub s: f64,
}

impl HarperIntervalModel {
    pub fn base(&self) -> FibreBase {
        let top = self.top();
        FibreBase {
            kind: BaseKind::HarperInterval { s: self.s, x1: self.x1, e: self.e },
            fixed_points: [f64::NAN, 0.0, 1.0 + 2.0 / self.alpha.sqrt()],
            domain: (-self.s * self.x1 * (1.0 - 1e-12), top),
            negative_schwarzian: false,
            concave_on_positive: true,
        }
    }

    /// Supremum of `F₂`, the image of `x = +∞`.
    pub fn top(&self) -> f64 {
        self.s * (self.e - self.x1)
    }

    /// `β = s·λ`.
    pub fn beta(&self, lambda: f64) -> f64 {
        self.s * lambda
    }

    /// `h(x) = (x − x1)·s`.
    pub fn to_interval(&self, x: f64) -> f64 {
        (x - self.x1) * self.s
    }

    pub fn from_interval(&self, y: f64) -> f64 {
        y / self.s + self.x1
    }

    /// Additive system `F₂(y) − sλ·V(θ + ω)`.
    pub fn system(&self, lambda: f64, potential: ForcingFunction, spec: RotationSpec) -> QpfSystem {
        let omega = spec.omega;
        QpfSystem {
            name: format!("harper-interval(E={}, lambda={lambda})", self.e),
            map: FibreMap::Additive { base: self.base(), forcing: potential.shifted(omega), beta: self.beta(lambda) },
            spec,
            strict: None,
            symmetric: false,
        }
    }
}

/// Affine coordinates in which the Riccati map fixes `0` and `1 + 2/√α`.
pub fn harper_interval_model(e: f64) -> Result<HarperIntervalModel> {
    if !(e > 2.0) {
        return Err(QpfError::EBelowThreshold { e });
    }
    let disc = (e * e - 4.0).sqrt();
    let x2 = 0.5 * (e + disc);
    // x1 = 1/x2 avoids cancellation.
    let x1 = 1.0 / x2;
    let alpha = e.powf(1.5);
    let s = (1.0 + 2.0 / alpha.sqrt()) / (x2 - x1);
    Ok(HarperIntervalModel { e, alpha, x1, x2, s })
}

/// Pinched skew product `tanh(αx)·sin(πθ)` on `[0, 1]`.
pub fn make_pinched(alpha: f64, spec: RotationSpec) -> QpfSystem {
    QpfSystem {
        name: format!("pinched(alpha={alpha})"),
        map: FibreMap::Multiplicative {
            base: FibreBase {
                kind: BaseKind::Tanh { alpha },
                fixed_points: [0.0, 0.0, 1.0],
                domain: (0.0, 1.0),
                negative_schwarzian: true,
                concave_on_positive: true,
            },
            forcing: ForcingFunction::sin_pi(),
        },
        spec,
        strict: None,
        symmetric: false,
    }
}

/// Quasiperiodically forced Arnold circle map.
pub fn make_arnold(tau: f64, alpha: f64, beta: f64, spec: RotationSpec, forcing: ArnoldForcing) -> QpfSystem {
    QpfSystem {
        name: format!("arnold(tau={tau}, alpha={alpha}, beta={beta}, {forcing:?})"),
        map: FibreMap::Arnold(ArnoldParams { tau, alpha, beta, forcing }),
        spec,
        strict: None,
        symmetric: false,
    }
}

/// Symmetric family `arctan(αx) − β·(1 − 4d(θ,0))`.
pub fn make_symmetric(alpha: f64, beta: f64, spec: RotationSpec) -> QpfSystem {
    let fp = symmetric_fixed_point(alpha);
    QpfSystem {
        name: format!("symmetric(alpha={alpha})"),
        map: FibreMap::Additive {
            base: FibreBase {
                kind: BaseKind::Arctan { alpha },
                fixed_points: [-fp, 0.0, fp],
                domain: (-4.0, 4.0),
                negative_schwarzian: true,
                concave_on_positive: true,
            },
            forcing: ForcingFunction::tent(),
            beta,
        },
        spec,
        strict: None,
        symmetric: true,
    }
}

fn symmetric_fixed_point(alpha: f64) -> f64 {
    if alpha <= 1.0 {
        return 0.0;
    }
    bracket_inverse(|x| (alpha * x).atan() - x, 0.0, 1e-9, FRAC_PI_2 + 1.0).unwrap_or(f64::NAN)
}

/// `tanh(5x) + 1.2015·sin(2πθ)`.
pub fn make_tanh_strip(spec: RotationSpec) -> QpfSystem {
    QpfSystem {
        name: "tanh-strip".into(),
        map: FibreMap::Additive {
            base: FibreBase {
                kind: BaseKind::Tanh { alpha: 5.0 },
                fixed_points: [f64::NAN, 0.0, f64::NAN],
                domain: (-3.0, 3.0),
                negative_schwarzian: true,
                concave_on_positive: true,
            },
            forcing: ForcingFunction::sin_2pi(),
            beta: -1.2015,
        },
        spec,
        strict: None,
        symmetric: false,
    }
}

/// A custom system from an evaluator and derivative pair.
pub fn make_custom(name: &str, f: FibreFn, df: FibreFn, domain: (f64, f64), spec: RotationSpec) -> QpfSystem {
    QpfSystem {
        name: name.into(),
        map: FibreMap::Custom { f, df, domain },
        spec,
        strict: None,
        symmetric: false,
    }
}

/// One checked condition.
#[derive(Debug, Clone, Serialize)]
pub struct HypothesisCheck {
    pub name: &'static str,
    pub holds: bool,
    /// A grid point or value witnessing a violation.
    pub witness: Option<String>,
}

/// Per-condition report.
#[derive(Debug, Clone, Serialize)]
pub struct HypothesisReport {
    pub system: String,
    pub checks: Vec<HypothesisCheck>,
    pub k: Option<f64>,
}

impl HypothesisReport {
    pub fn get(&self, name: &str) -> Option<bool> {
        self.checks.iter().find(|c| c.name == name).map(|c| c.holds)
    }

    pub fn all_hold(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }

    pub fn failing(&self) -> Vec<&'static str> {
        self.checks.iter().filter(|c| !c.holds).map(|c| c.name).collect()
    }
}

/// `S_∞(α) = α/(α − 1)`.
pub fn s_infinity(alpha: f64) -> f64 {
    alpha / (alpha - 1.0)
}

/// Scalar predicates on `(α, γ, K)` that do not need `F` or `g`.
pub fn constant_predicates(c: &StrictConstants) -> Vec<HypothesisCheck> {
    let (a, g, k) = (c.alpha, c.gamma, c.k());
    let s = s_infinity(a);
    let chk = |name, holds: bool, w: String| HypothesisCheck { name, holds, witness: (!holds).then_some(w) };
    vec![
        chk("gamma0", g <= 1.0 / 16.0, format!("gamma = {g}")),
        chk("alphagamma0", a.sqrt() > 4.0 / g && 4.0 / g >= 64.0, format!("sqrt(alpha) = {}, 4/gamma = {}", a.sqrt(), 4.0 / g)),
        chk("alpha1", a.sqrt() >= 2.0 * k, format!("sqrt(alpha) = {}, 2K = {}", a.sqrt(), 2.0 * k)),
        chk("alpha2", a >= s + 1.0, format!("alpha = {a}")),
        chk("alphagamma1", g >= (s + 1.0) / a, format!("(S+1)/alpha = {}", (s + 1.0) / a)),
        chk(
            "alpha3",
            0.5 * a.sqrt() >= 6.0 + k * s_infinity(a.powf(0.25)),
            format!("lhs = {}, rhs = {}", 0.5 * a.sqrt(), 6.0 + k * s_infinity(a.powf(0.25))),
        ),
        chk("alpha4", a >= 4.0 * s, format!("alpha = {a}")),
    ]
}

/// Checks the quantitative hypotheses on `F`, `g`, `α`, `γ` and `ω`.
///
/// Derivative bounds are scanned on a 10⁴-point grid of `[−3, 3]` (plus
/// the subintervals where they apply); forcing bounds on a 10⁴-point
/// θ-grid.
pub fn check_hypotheses(sys: &QpfSystem) -> Result<HypothesisReport> {
    let c = sys
        .strict
        .ok_or_else(|| QpfError::InvalidArgument("system carries no strict constants".into()))?;
    let (base, forcing, _) = sys
        .additive_parts()
        .ok_or_else(|| QpfError::InvalidArgument("hypotheses apply to additive families".into()))?;
    let (a, gamma) = (c.alpha, c.gamma);
    let mut checks = constant_predicates(&c);
    let chk = |name, bad: Option<String>| HypothesisCheck { name, holds: bad.is_none(), witness: bad };

    let xs: Vec<f64> = (0..=10_000).map(|i| -3.0 + 6.0 * i as f64 / 10_000.0).collect();
    let first_bad = |pts: &[f64], pred: &dyn Fn(f64) -> bool| -> Option<String> {
        pts.iter().copied().find(|&x| !pred(x)).map(|x| format!("x = {x}"))
    };

    checks.push(chk("F1", first_bad(&xs, &|x| base.derivative(x) > 0.0)));
    checks.push(chk("Fmapsinto", first_bad(&xs, &|x| base.value(x).abs() <= 1.5)));
    let xa = 1.0 + 2.0 / a.sqrt();
    let fp_err = base.value(0.0).abs().max((base.value(xa) - xa).abs()).max((base.value(-xa) + xa).abs());
    checks.push(chk("Ffixedpoints", (fp_err > 1e-12).then(|| format!("residual = {fp_err}"))));
    checks.push(chk(
        "Funiformbounds",
        first_bad(&xs, &|x| {
            let d = base.derivative(x);
            2.0 / (a * a) <= d && d <= a * a
        }),
    ));
    let near: Vec<f64> = (0..=1000).map(|i| -2.0 / a + 4.0 / a * i as f64 / 1000.0).collect();
    checks.push(chk(
        "Fexpansion",
        first_bad(&near, &|x| base.derivative(x) >= 2.0 * a.sqrt()),
    ));
    checks.push(chk(
        "Fcontraction",
        first_bad(&xs.iter().copied().filter(|x| x.abs() >= gamma).chain([gamma, -gamma]).collect::<Vec<_>>(), &|x| {
            base.derivative(x) <= 0.5 / a.sqrt()
        }),
    ));
    let up = base.value(1.0 / a);
    let dn = base.value(-1.0 / a);
    checks.push(chk(
        "Fmapsover",
        (!(up >= 1.0 - gamma && dn <= -(1.0 - gamma))).then(|| format!("F(1/alpha) = {up}, F(-1/alpha) = {dn}")),
    ));

    let n = 10_000;
    let thetas: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
    let gv: Vec<f64> = thetas.iter().map(|&t| forcing.eval(t)).collect();
    let gmax = gv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let g1_bad = gv
        .iter()
        .zip(&thetas)
        .find(|(v, _)| !(-1e-15..=1.0 + 1e-15).contains(*v))
        .map(|(v, t)| format!("g({t}) = {v}"))
        .or_else(|| ((gmax - 1.0).abs() > 1e-12).then(|| format!("max g = {gmax}")));
    checks.push(chk("g1", g1_bad));
    let mut lip_bad = None;
    for i in 0..n {
        let j = (i + 1) % n;
        let slope = (gv[j] - gv[i]).abs() / circle_dist(thetas[j], thetas[i]);
        if slope > c.l1 * (1.0 + 1e-6) {
            lip_bad = Some(format!("slope {slope} at theta = {}", thetas[i]));
            break;
        }
    }
    checks.push(chk("glipschitz", lip_bad));
    let targets: Vec<f64> = if sys.symmetric { vec![0.0, 0.5] } else { vec![0.0] };
    let peak_bad = thetas.iter().zip(&gv).find_map(|(&t, &v)| {
        let bound = (1.0 - 3.0 * gamma).max(1.0 - c.l2 * circle_dist_to_set(t, &targets));
        (v.abs() > bound + 1e-12).then(|| format!("theta = {t}"))
    });
    checks.push(chk("sharppeak", peak_bad));
    let fit = crate::circle::estimate_dioph(&sys.spec, 10_000);
    checks.push(chk("diophantine", (!fit.holds).then(|| format!("fitted c = {}, d = {}", fit.c, fit.d))));
    checks.push(chk(
        "F3",
        (!(base.negative_schwarzian || base.concave_on_positive)).then(|| "no Schwarzian or concavity flag".into()),
    ));
    Ok(HypothesisReport { system: sys.name.clone(), checks, k: Some(c.k()) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn golden() -> RotationSpec {
        RotationSpec::golden_mean()
    }

    #[test]
    fn rescaled_fixed_points() {
        let fam = make_rescaled_arctan(100.0, golden());
        let b = fam.base();
        assert!((fam.x_alpha() - 1.2).abs() < 1e-15);
        assert!((b.value(1.2) - 1.2).abs() < 1e-12);
        assert_eq!(b.value(0.0), 0.0);
        let s = fam.at(1.0);
        assert!((s.apply(0.0, 0.0) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn harper_interval_fixed_points() {
        let m = harper_interval_model(10.0).unwrap();
        assert!(((m.x2 - m.x1) - 96f64.sqrt()).abs() < 1e-12);
        assert!(m.s >= 0.1 && m.s <= 0.2);
        let b = m.base();
        let xa = 1.0 + 2.0 / m.alpha.sqrt();
        assert!(b.value(0.0).abs() < 1e-12);
        assert!((b.value(xa) - xa).abs() < 1e-12);
        assert!(harper_interval_model(1.5).is_err());
    }

    #[test]
    fn riccati_fixed_points_e10() {
        let s = make_riccati(10.0, 0.0, ForcingFunction::cos_2pi(), golden());
        for x in [(10.0 - 96f64.sqrt()) / 2.0, (10.0 + 96f64.sqrt()) / 2.0] {
            assert!((s.apply(0.3, x) - x).abs() < 1e-12);
        }
        assert!((s.derivative(0.1, 0.5) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn pinched_zero_fibre() {
        let s = make_pinched(10.0, golden());
        assert_eq!(s.apply(0.0, 0.7), 0.0);
        assert_eq!(s.apply(0.4, 0.0), 0.0);
        assert!((s.derivative(0.25, 0.0) - 10.0 * (PI / 4.0).sin()).abs() < 1e-12);
    }

    #[test]
    fn arctan_derivative_formula() {
        let s = make_arctan_family(10.0, 0.5, golden());
        for x in [-0.7, 0.0, 0.3, 2.0] {
            let exact = (10.0 / 10f64.atan()) / (1.0 + 100.0 * x * x);
            assert!((s.derivative(0.2, x) - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn harper_inverse_round_trip() {
        let s = make_harper(4.4, 4.0, ForcingFunction::cos_2pi(), golden());
        for &(t, x) in &[(0.1, 0.3), (0.7, -1.2), (0.5, 1.5)] {
            let y = s.apply(t, x);
            let back = s.inverse(t, y).unwrap();
            assert!((s.apply(t, back) - y).abs() < 1e-10, "{t} {x} {y} {back} {}", s.apply(t, back));
        }
    }

    #[test]
    fn k_constant_and_alpha1_threshold() {
        let c = StrictConstants { alpha: 180.3, gamma: 1.0 / 16.0, l1: PI, l2: 2.0 };
        assert!((c.k() - 6.7124).abs() < 1e-4);
        assert!((2.0 * c.k()).powi(2) > 180.0 && (2.0 * c.k()).powi(2) < 180.3);
        let p = constant_predicates(&c);
        assert!(p.iter().find(|x| x.name == "alpha1").unwrap().holds);
    }

    #[test]
    fn rescaled_alpha10_fails_alphagamma0() {
        let s = make_rescaled_arctan(10.0, golden()).at(0.5);
        let r = check_hypotheses(&s).unwrap();
        assert_eq!(r.get("alphagamma0"), Some(false));
        assert_eq!(r.get("g1"), Some(true));
    }

    #[test]
    fn conjugacy_reproduces_arctan_family() {
        let alpha = 20.0;
        let cj = conjugacy_maps_arctan(alpha);
        assert!((cj.sigma1 - alpha / alpha.atan()).abs() < 1e-12);
        assert!((cj.tau1 - alpha.atan()).abs() < 1e-15);
        let beta = 0.7;
        let t = make_arctan_family(alpha, beta, golden());
        let tt = make_rescaled_arctan(cj.sigma, golden()).at(cj.tau * beta);
        for i in 0..50 {
            let th = i as f64 / 50.0;
            let x = -1.0 + 2.0 * i as f64 / 49.0;
            let lhs = tt.apply(th, cj.scale * x) / cj.scale;
            assert!((lhs - t.apply(th, x)).abs() < 1e-12, "{lhs} vs {}", t.apply(th, x));
        }
    }
}
