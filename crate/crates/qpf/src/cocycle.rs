//! Schrödinger cocycles over the rotation: transfer matrices, their
//! Lyapunov exponent, the projective derivative identity and the critical
//! coupling curve of the associated interval model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bifurcation::{survives, EscapeOptions};
use crate::circle::{orbit_point, wrap, RotationSpec};
use crate::error::{QpfError, Result};
use crate::systems::{harper_interval_model, ForcingFunction};

const RENORM_EVERY: usize = 32;

/// A real 2×2 matrix `((a, b), (c, d))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Mat2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2 { a: 1.0, b: 0.0, c: 0.0, d: 1.0 };

    /// `self · rhs`.
    pub fn mul(&self, rhs: &Mat2) -> Mat2 {
        Mat2 {
            a: self.a * rhs.a + self.b * rhs.c,
            b: self.a * rhs.b + self.b * rhs.d,
            c: self.c * rhs.a + self.d * rhs.c,
            d: self.c * rhs.b + self.d * rhs.d,
        }
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [self.a * v[0] + self.b * v[1], self.c * v[0] + self.d * v[1]]
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn scale(&self, s: f64) -> Mat2 {
        Mat2 { a: self.a * s, b: self.b * s, c: self.c * s, d: self.d * s }
    }

    fn max_abs(&self) -> f64 {
        self.a.abs().max(self.b.abs()).max(self.c.abs()).max(self.d.abs())
    }

    /// Spectral norm, the largest singular value.
    pub fn norm(&self) -> f64 {
        let s = self.max_abs();
        if s == 0.0 {
            return 0.0;
        }
        let m = self.scale(1.0 / s);
        let f = m.a * m.a + m.b * m.b + m.c * m.c + m.d * m.d;
        let dt = m.det();
        let disc = (f * f - 4.0 * dt * dt).max(0.0).sqrt();
        s * (0.5 * (f + disc)).sqrt()
    }
}

/// `((E − λV(θ), −1), (1, 0))`.
pub fn schrodinger_matrix(theta: f64, e: f64, lambda: f64, v: &ForcingFunction) -> Mat2 {
    Mat2 { a: e - lambda * v.eval(theta), b: -1.0, c: 1.0, d: 0.0 }
}

fn vnorm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

/// `log ‖A_n(θ0)‖` for `A_n(θ) = A(θ + ω_{n−1}) ⋯ A(θ)`, with the product
/// rescaled every few steps.
pub fn log_norm_product(theta0: f64, e: f64, lambda: f64, v: &ForcingFunction, spec: &RotationSpec, n: usize) -> f64 {
    let mut m = Mat2::IDENTITY;
    let mut log_scale = 0.0;
    for k in 0..n {
        let a = schrodinger_matrix(wrap(theta0 + orbit_point(spec.omega, k as i64)), e, lambda, v);
        m = a.mul(&m);
        if (k + 1) % RENORM_EVERY == 0 {
            let s = m.max_abs();
            m = m.scale(1.0 / s);
            log_scale += s.ln();
        }
    }
    log_scale + m.norm().ln()
}

/// Per-step trace of `log ‖A_k(θ0)‖` for `k = 1..=n`.
#[derive(Debug, Clone, Serialize)]
pub struct CocycleRun {
    pub theta0: f64,
    pub n: usize,
    pub log_norm_trace: Vec<f64>,
}

pub fn cocycle_run(theta0: f64, e: f64, lambda: f64, v: &ForcingFunction, spec: &RotationSpec, n: usize) -> CocycleRun {
    let mut m = Mat2::IDENTITY;
    let mut log_scale = 0.0;
    let mut trace = Vec::with_capacity(n);
    for k in 0..n {
        let a = schrodinger_matrix(wrap(theta0 + orbit_point(spec.omega, k as i64)), e, lambda, v);
        m = a.mul(&m);
        trace.push(log_scale + m.norm().ln());
        if (k + 1) % RENORM_EVERY == 0 {
            let s = m.max_abs();
            m = m.scale(1.0 / s);
            log_scale += s.ln();
        }
    }
    CocycleRun { theta0, n, log_norm_trace: trace }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CocycleEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
    pub n: usize,
}

/// Average of `(1/n) log ‖A_n(θ)‖` over `samples` seeded random `θ`.
pub fn cocycle_lyapunov(
    e: f64,
    lambda: f64,
    v: &ForcingFunction,
    spec: &RotationSpec,
    n: usize,
    samples: usize,
    seed: u64,
) -> CocycleEstimate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let thetas: Vec<f64> = (0..samples).map(|_| rng.gen::<f64>()).collect();
    let vals: Vec<f64> = thetas
        .par_iter()
        .map(|&t| log_norm_product(t, e, lambda, v, spec, n) / n as f64)
        .collect();
    let k = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / k;
    let var = if vals.len() > 1 { vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0) } else { 0.0 };
    CocycleEstimate { mean, stderr: (var / k).sqrt(), samples, n }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct IdentityCheck {
    /// `∏ DT` along the projective orbit.
    pub lhs: f64,
    /// `‖v⁰‖² / ‖vⁿ‖²`.
    pub rhs: f64,
    /// `|lhs/rhs − 1|`, computed in log space.
    pub gap: f64,
}

/// Compares the derivative of `x ↦ arctan(1/(c_k − tan x))` along the
/// projective orbit of `v0` with the norm ratio of the propagated vector.
pub fn projective_derivative_identity(
    theta0: f64,
    v0: [f64; 2],
    e: f64,
    lambda: f64,
    v: &ForcingFunction,
    spec: &RotationSpec,
    n: usize,
) -> Result<IdentityCheck> {
    if v0 == [0.0, 0.0] {
        return Err(QpfError::InvalidArgument("v0 must be non-zero".into()));
    }
    let mut x = (v0[1] / v0[0]).atan();
    let mut sum_log_dt = 0.0;
    let mut vec = v0;
    let mut log_vscale = 0.0;
    for k in 0..n {
        let c = e - lambda * v.eval(wrap(theta0 + orbit_point(spec.omega, k as i64)));
        let t = x.tan();
        sum_log_dt += ((1.0 + t * t) / (1.0 + (t - c) * (t - c))).ln();
        x = (1.0 / (c - t)).atan();
        vec = [c * vec[0] - vec[1], vec[0]];
        let s = vnorm(vec);
        vec = [vec[0] / s, vec[1] / s];
        log_vscale += s.ln();
    }
    let log_rhs = 2.0 * vnorm(v0).ln() - 2.0 * (log_vscale + vnorm(vec).ln());
    Ok(IdentityCheck { lhs: sum_log_dt.exp(), rhs: log_rhs.exp(), gap: (sum_log_dt - log_rhs).exp_m1().abs() })
}

/// Bracket of the critical coupling at one energy.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CriticalCoupling {
    pub e: f64,
    pub lambda_lo: f64,
    pub lambda_hi: f64,
}

fn keeps_graphs(e: f64, lambda: f64, v: &ForcingFunction, spec: &RotationSpec, opts: &EscapeOptions) -> Result<bool> {
    let model = harper_interval_model(e)?;
    Ok(survives(&model.system(lambda, v.clone(), spec.clone()), opts))
}

/// `λ_c(E)`: bisection over whether the interval model keeps its two
/// invariant graphs above the repelling level.
pub fn lambda_c(e: f64, v: &ForcingFunction, spec: &RotationSpec, tol: f64, opts: &EscapeOptions) -> Result<CriticalCoupling> {
    if !keeps_graphs(e, 0.0, v, spec, opts)? {
        return Err(QpfError::SolveFailed(format!("unforced model at E = {e} escapes")));
    }
    let mut hi = 2.0 * e;
    let mut lo = 0.0;
    while keeps_graphs(e, hi, v, spec, opts)? {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Err(QpfError::SolveFailed(format!("no escape below lambda = {hi}")));
        }
    }
    while hi - lo > tol {
        let m = 0.5 * (lo + hi);
        if keeps_graphs(e, m, v, spec, opts)? {
            lo = m;
        } else {
            hi = m;
        }
    }
    Ok(CriticalCoupling { e, lambda_lo: lo, lambda_hi: hi })
}

pub fn lambda_c_curve(es: &[f64], v: &ForcingFunction, spec: &RotationSpec, tol: f64, opts: &EscapeOptions) -> Result<Vec<CriticalCoupling>> {
    es.iter().map(|&e| lambda_c(e, v, spec, tol, opts)).collect()
}

/// Bracket `[E_lo, E_hi]` of the energy whose critical coupling is `λ`,
/// found by bisection on `E` in `range`.
pub fn e_c_inverse(
    lambda: f64,
    v: &ForcingFunction,
    spec: &RotationSpec,
    range: (f64, f64),
    tol: f64,
    opts: &EscapeOptions,
) -> Result<(f64, f64)> {
    let (mut lo, mut hi) = range;
    // graphs survive at large E for fixed λ
    if keeps_graphs(lo, lambda, v, spec, opts)? || !keeps_graphs(hi, lambda, v, spec, opts)? {
        return Err(QpfError::SolveFailed(format!("E range [{lo}, {hi}] does not bracket lambda = {lambda}")));
    }
    while hi - lo > tol {
        let m = 0.5 * (lo + hi);
        if keeps_graphs(m, lambda, v, spec, opts)? {
            hi = m;
        } else {
            lo = m;
        }
    }
    Ok((lo, hi))
}
