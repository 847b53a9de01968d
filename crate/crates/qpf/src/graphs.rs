//! Sampled invariant graphs, their Lyapunov exponents, and finite-time
//! exponents along orbits.
//!
//! A graph value at a grid point `θ` is always obtained from a full orbit
//! that ends on the fibre `θ`; fibres along the orbit are recomputed as
//! `θ − ω_k` from scratch, never interpolated or accumulated.

use std::io::{self, Read, Write};

use rayon::prelude::*;
use serde::Serialize;

use crate::circle::{orbit_point, wrap};
use crate::error::{QpfError, Result};
use crate::systems::QpfSystem;

/// Which object a sample approximates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GraphKind {
    Upper,
    Lower,
    Middle,
    /// Iterates of an arbitrary start value.
    Iterate,
}

/// An invariant graph sampled on a θ-grid.
#[derive(Debug, Clone, Serialize)]
pub struct GraphSample {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub kind: GraphKind,
    pub iterates_used: usize,
    pub lyap: Option<f64>,
    /// `max_θ |φ_n(θ) − φ_{n−1}(θ)|`, i.e. the invariance residual.
    pub residual: f64,
    /// Bisection bracket width for middle graphs.
    pub resolution: Option<f64>,
}

/// Per-point finite-time exponents.
#[derive(Debug, Clone, Serialize)]
pub struct ExponentProfile {
    pub horizons: Vec<usize>,
    pub forward: Vec<f64>,
    pub backward: Vec<f64>,
}

/// `k/G`, `k = 0..G`.
pub fn uniform_grid(g: usize) -> Vec<f64> {
    assert!(g >= 2);
    (0..g).map(|k| k as f64 / g as f64).collect()
}

/// Sorted, deduplicated union of grids, wrapped into `[0,1)`.
pub fn merge_grids(parts: &[Vec<f64>]) -> Vec<f64> {
    let mut all: Vec<f64> = parts.iter().flatten().map(|&t| wrap(t)).collect();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    all.dedup();
    all
}

/// Period of the fibre for circle-valued families (`None` for intervals).
fn fibre_period(sys: &QpfSystem) -> Option<f64> {
    use crate::systems::FibreMap;
    match sys.map {
        FibreMap::Arnold(_) => Some(1.0),
        FibreMap::HarperProjective { .. } => Some(std::f64::consts::PI),
        _ => None,
    }
}

fn fibre_gap(period: Option<f64>, a: f64, b: f64) -> f64 {
    match period {
        None => (a - b).abs(),
        Some(p) => {
            let d = (a - b).rem_euclid(p);
            d.min(p - d)
        }
    }
}

/// `T^n` applied to `x0` on the fibre `θ − nω`, ending on fibre `θ`.
#[inline]
pub fn pushforward(sys: &QpfSystem, theta: f64, x0: f64, n: usize) -> f64 {
    let omega = sys.omega();
    let mut x = x0;
    for i in 0..n {
        let fibre = wrap(theta - orbit_point(omega, (n - i) as i64));
        x = sys.apply(fibre, x);
    }
    x
}

/// `n` forward iterates of the constant line `x0`, sampled on `grid`.
pub fn iterate_on_grid(sys: &QpfSystem, x0: f64, n: usize, grid: &[f64], kind: GraphKind) -> GraphSample {
    let period = fibre_period(sys);
    let pairs: Vec<(f64, f64)> = grid
        .par_iter()
        .map(|&t| {
            if n == 0 {
                return (x0, 0.0);
            }
            let prev = pushforward(sys, wrap(t - sys.omega()), x0, n - 1);
            let cur = sys.apply(wrap(t - sys.omega()), prev);
            let cur = match period {
                Some(p) => cur.rem_euclid(p),
                None => cur,
            };
            // φ_{n−1} at θ itself for the residual
            let prev_here = pushforward(sys, t, x0, n - 1);
            (cur, fibre_gap(period, cur, prev_here))
        })
        .collect();
    let residual = pairs.iter().map(|p| p.1).fold(0.0, f64::max);
    GraphSample {
        grid: grid.to_vec(),
        values: pairs.into_iter().map(|p| p.0).collect(),
        kind,
        iterates_used: n,
        lyap: None,
        residual,
        resolution: None,
    }
}

/// Upper or lower boundary of the driven space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Boundary {
    Upper,
    Lower,
}

/// The `n`-th iterate of the upper or lower boundary line on a `G`-point
/// uniform grid.
pub fn iterate_boundary(sys: &QpfSystem, which: Boundary, n: usize, g: usize) -> GraphSample {
    iterate_boundary_on(sys, which, n, &uniform_grid(g))
}

pub fn iterate_boundary_on(sys: &QpfSystem, which: Boundary, n: usize, grid: &[f64]) -> GraphSample {
    let (lo, hi) = sys.domain();
    let (x0, kind) = match which {
        Boundary::Upper => (hi, GraphKind::Upper),
        Boundary::Lower => (lo, GraphKind::Lower),
    };
    iterate_on_grid(sys, x0, n, grid, kind)
}

/// Doubles the iterate count from `n_min` until the invariance residual
/// drops below `tol` or `n_max` is reached.
pub fn converge_boundary(
    sys: &QpfSystem,
    which: Boundary,
    grid: &[f64],
    tol: f64,
    n_min: usize,
    n_max: usize,
) -> GraphSample {
    let mut n = n_min.max(1);
    loop {
        let g = iterate_boundary_on(sys, which, n, grid);
        if g.residual <= tol || n >= n_max {
            return g;
        }
        n = (2 * n).min(n_max);
    }
}

/// Circle average of `log DT_θ(φ(θ))` over the grid.
///
/// Fails with `NotInvariant` if the stored residual exceeds `tol`.
pub fn graph_lyapunov(sys: &QpfSystem, graph: &GraphSample, tol: f64) -> Result<f64> {
    if !(graph.residual <= tol) {
        return Err(QpfError::NotInvariant { residual: graph.residual, tolerance: tol });
    }
    let s: f64 = graph
        .grid
        .iter()
        .zip(&graph.values)
        .map(|(&t, &x)| sys.derivative(t, x).ln())
        .sum();
    Ok(s / graph.grid.len() as f64)
}

/// Forward orbit average of `log DT` over `n` steps after `transient`.
pub fn orbit_lyapunov(sys: &QpfSystem, theta0: f64, x0: f64, n: usize, transient: usize) -> f64 {
    let omega = sys.omega();
    let mut x = x0;
    for i in 0..transient {
        x = sys.apply(wrap(theta0 + orbit_point(omega, i as i64)), x);
    }
    let mut sum = 0.0;
    for i in transient..transient + n {
        let t = wrap(theta0 + orbit_point(omega, i as i64));
        sum += sys.derivative(t, x).ln();
        x = sys.apply(t, x);
    }
    sum / n as f64
}

/// Backward orbit average of `log DT` along `T⁻¹`-iterates of `(θ0, x0)`.
///
/// Points attracted under `T⁻¹` (repellers of `T`) are reached this way;
/// the returned value is the average of `log DT` at the backward orbit
/// points, i.e. the exponent of the graph they converge to.
pub fn backward_orbit_lyapunov(sys: &QpfSystem, theta0: f64, x0: f64, n: usize, transient: usize) -> Result<f64> {
    let omega = sys.omega();
    let mut x = x0;
    let mut sum = 0.0;
    for k in 1..=transient + n {
        let t = wrap(theta0 - orbit_point(omega, k as i64));
        x = sys.inverse(t, x)?;
        if k > transient {
            sum += sys.derivative(t, x).ln();
        }
    }
    Ok(sum / n as f64)
}

/// `T^{−n}` applied to `x0` on fibre `θ + nω`, ending on fibre `θ`.
pub fn pullback(sys: &QpfSystem, theta: f64, x0: f64, n: usize) -> Result<f64> {
    let omega = sys.omega();
    let mut x = x0;
    for k in (0..n).rev() {
        x = sys.inverse(wrap(theta + orbit_point(omega, k as i64)), x)?;
    }
    Ok(x)
}

/// Repelling graph obtained by pulling back the line `x0` under `T⁻¹`.
pub fn pullback_graph(sys: &QpfSystem, x0: f64, n: usize, grid: &[f64]) -> Result<GraphSample> {
    let pairs: Vec<Result<(f64, f64)>> = grid
        .par_iter()
        .map(|&t| {
            let v = pullback(sys, t, x0, n)?;
            let v_prev = pullback(sys, t, x0, n - 1)?;
            Ok((v, (v - v_prev).abs()))
        })
        .collect();
    let pairs: Vec<(f64, f64)> = pairs.into_iter().collect::<Result<_>>()?;
    Ok(GraphSample {
        grid: grid.to_vec(),
        residual: pairs.iter().map(|p| p.1).fold(0.0, f64::max),
        values: pairs.into_iter().map(|p| p.0).collect(),
        kind: GraphKind::Middle,
        iterates_used: n,
        lyap: None,
        resolution: None,
    })
}

/// Forward and backward finite-time exponents of `(θ, x)`.
///
/// Forward: `(1/n) Σ_{i<n} log DT(T^i(θ,x))`. Backward: `−(1/n) Σ_{i=1}^{n}
/// log DT(T^{−i}(θ,x))`, along preimages found by monotone inversion.
pub fn finite_time_exponents(sys: &QpfSystem, theta: f64, x: f64, horizons: &[usize]) -> Result<ExponentProfile> {
    let n_max = horizons.iter().copied().max().unwrap_or(0);
    let omega = sys.omega();
    let mut fwd_sums = Vec::with_capacity(n_max + 1);
    let mut s = 0.0;
    let mut y = x;
    fwd_sums.push(0.0);
    for i in 0..n_max {
        let t = wrap(theta + orbit_point(omega, i as i64));
        s += sys.derivative(t, y).ln();
        y = sys.apply(t, y);
        fwd_sums.push(s);
    }
    let mut bwd_sums = Vec::with_capacity(n_max + 1);
    bwd_sums.push(0.0);
    let mut s = 0.0;
    let mut y = x;
    for i in 1..=n_max {
        let t = wrap(theta - orbit_point(omega, i as i64));
        let pre = sys.inverse(t, y)?;
        s -= sys.derivative(t, pre).ln();
        y = pre;
        bwd_sums.push(s);
    }
    Ok(ExponentProfile {
        horizons: horizons.to_vec(),
        forward: horizons.iter().map(|&n| if n == 0 { 0.0 } else { fwd_sums[n] / n as f64 }).collect(),
        backward: horizons.iter().map(|&n| if n == 0 { 0.0 } else { bwd_sums[n] / n as f64 }).collect(),
    })
}

/// Exponent profile along a recorded orbit `orbit[k] = x_{k+offset}` on
/// fibres `ω_{k+offset}` (used when the orbit is known more accurately
/// than forward iteration can reproduce it).
///
/// Forward horizons `j` average `log DT` at indices `start..start+j`;
/// backward horizons average `−log DT` at `start−1, …, start−j`.
pub fn profile_from_orbit(sys: &QpfSystem, orbit: &[f64], offset: i64, start: i64, fwd_max: usize, bwd_max: usize) -> ExponentProfile {
    let omega = sys.omega();
    let at = |k: i64| -> f64 {
        let x = orbit[(k - offset) as usize];
        sys.derivative(orbit_point(omega, k), x).ln()
    };
    let mut forward = Vec::with_capacity(fwd_max);
    let mut s = 0.0;
    for j in 1..=fwd_max {
        s += at(start + j as i64 - 1);
        forward.push(s / j as f64);
    }
    let mut backward = Vec::with_capacity(bwd_max);
    let mut s = 0.0;
    for j in 1..=bwd_max {
        s -= at(start - j as i64);
        backward.push(s / j as f64);
    }
    let horizons = (1..=fwd_max.max(bwd_max)).collect();
    ExponentProfile { horizons, forward, backward }
}

/// Middle graph `ψ` by per-fibre bisection.
///
/// A start value is classified "down" if its orbit enters `x < 0`
/// within the test horizon, "up" if it stays non-negative and ends in
/// the upper half of the driven space. Undecided orbits double the horizon
/// up to 16 times `n_test`.
pub fn middle_graph(sys: &QpfSystem, grid: &[f64], n_test: usize) -> Result<GraphSample> {
    let (_, hi) = sys.domain();
    let omega = sys.omega();
    let decide = |theta: f64, x0: f64| -> bool {
        // true = goes down
        let mut n = n_test;
        loop {
            let mut x = x0;
            for i in 0..n {
                if x < 0.0 {
                    return true;
                }
                x = sys.apply(wrap(theta + orbit_point(omega, i as i64)), x);
            }
            if x < 0.0 {
                return true;
            }
            if x > 0.25 * hi.min(1.0) || n >= 16 * n_test {
                return false;
            }
            n *= 2;
        }
    };
    let out: Vec<Option<(f64, f64)>> = grid
        .par_iter()
        .map(|&t| {
            if decide(t, hi) {
                return None;
            }
            let (mut a, mut b) = (0.0f64, hi);
            if !decide(t, a) {
                return Some((0.0, 0.0));
            }
            for _ in 0..60 {
                let m = 0.5 * (a + b);
                if decide(t, m) {
                    a = m;
                } else {
                    b = m;
                }
            }
            Some((0.5 * (a + b), b - a))
        })
        .collect();
    if out.iter().all(|o| o.is_none()) {
        return Err(QpfError::NoBasinBoundary);
    }
    let mut values = Vec::with_capacity(grid.len());
    let mut width: f64 = 0.0;
    for o in out {
        match o {
            Some((v, w)) => {
                values.push(v);
                width = width.max(w);
            }
            None => return Err(QpfError::NoBasinBoundary),
        }
    }
    Ok(GraphSample {
        grid: grid.to_vec(),
        values,
        kind: GraphKind::Middle,
        iterates_used: n_test,
        lyap: None,
        residual: width,
        resolution: Some(width),
    })
}

/// Minimum of `b − a` over the grid and its location.
pub fn min_graph_distance(a: &GraphSample, b: &GraphSample) -> Result<(f64, f64)> {
    if a.grid != b.grid {
        return Err(QpfError::GridMismatch);
    }
    let (mut best, mut at) = (f64::INFINITY, 0.0);
    for ((&t, &x), &y) in a.grid.iter().zip(&a.values).zip(&b.values) {
        if y - x < best {
            best = y - x;
            at = t;
        }
    }
    Ok((best, at))
}

/// Fraction of fibres where the two graphs are within `tol`.
pub fn pinched_fraction(a: &GraphSample, b: &GraphSample, tol: f64) -> Result<f64> {
    if a.grid != b.grid {
        return Err(QpfError::GridMismatch);
    }
    let close = a.values.iter().zip(&b.values).filter(|(x, y)| (*x - *y).abs() < tol).count();
    Ok(close as f64 / a.grid.len() as f64)
}

const COLUMNAR_MAGIC: &[u8; 8] = b"QPFGRAF1";

impl GraphSample {
    /// `theta,value` rows with round-trip decimal floats.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "theta,value")?;
        for (t, v) in self.grid.iter().zip(&self.values) {
            writeln!(w, "{t:?},{v:?}")?;
        }
        Ok(())
    }

    /// Binary columnar dump: magic, point count (`u64`), then the θ column
    /// and the value column as little-endian `f64`.
    pub fn write_columnar<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(COLUMNAR_MAGIC)?;
        w.write_all(&(self.grid.len() as u64).to_le_bytes())?;
        for x in self.grid.iter().chain(&self.values) {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads the columns written by [`GraphSample::write_columnar`].
    pub fn read_columnar<R: Read>(mut r: R) -> io::Result<(Vec<f64>, Vec<f64>)> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != COLUMNAR_MAGIC {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "not a graph dump"));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let n = u64::from_le_bytes(len) as usize;
        let mut column = |n: usize| -> io::Result<Vec<f64>> {
            let mut buf = [0u8; 8];
            (0..n)
                .map(|_| {
                    r.read_exact(&mut buf)?;
                    Ok(f64::from_le_bytes(buf))
                })
                .collect()
        };
        let grid = column(n)?;
        let values = column(n)?;
        Ok((grid, values))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circle::RotationSpec;
    use crate::systems::*;

    #[test]
    fn exports_round_trip() {
        let s = make_arctan_family(10.0, 0.9, RotationSpec::golden_mean());
        let g = iterate_boundary(&s, Boundary::Upper, 40, 64);
        let mut bin = Vec::new();
        g.write_columnar(&mut bin).unwrap();
        let (grid, values) = GraphSample::read_columnar(bin.as_slice()).unwrap();
        assert_eq!((grid, values), (g.grid.clone(), g.values.clone()));
        let mut csv = Vec::new();
        g.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        let parsed: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
        assert_eq!(parsed, g.values);
    }

    #[test]
    fn zero_iterates_is_constant() {
        let s = make_arctan_family(10.0, 0.5, RotationSpec::golden_mean());
        let g = iterate_boundary(&s, Boundary::Upper, 0, 16);
        assert!(g.values.iter().all(|&v| v == 3.0));
    }

    #[test]
    fn unforced_rescaled_converges_to_fixed_point() {
        let fam = make_rescaled_arctan(100.0, RotationSpec::golden_mean());
        let g = iterate_boundary(&fam.at(0.0), Boundary::Upper, 50, 64);
        assert!(g.values.iter().all(|&v| (v - 1.2).abs() < 1e-12));
    }

    #[test]
    fn unforced_lower_exponent() {
        let s = make_arctan_family(10.0, 0.0, RotationSpec::golden_mean());
        let g = iterate_boundary(&s, Boundary::Lower, 200, 64);
        let lam = graph_lyapunov(&s, &g, 1e-10).unwrap();
        let exact = (10.0 / 10f64.atan() / 101.0).ln();
        assert!((lam - exact).abs() < 1e-9);
    }

    #[test]
    fn identity_is_neutral() {
        use std::sync::Arc;
        let s = make_custom(
            "id",
            Arc::new(|_, x| x),
            Arc::new(|_, _| 1.0),
            (-1.0, 1.0),
            RotationSpec::golden_mean(),
        );
        let g = iterate_on_grid(&s, 0.3, 10, &uniform_grid(8), GraphKind::Iterate);
        assert_eq!(graph_lyapunov(&s, &g, 1e-12).unwrap(), 0.0);
    }

    #[test]
    fn first_horizon_is_log_derivative() {
        let s = make_arctan_family(10.0, 0.9, RotationSpec::golden_mean());
        let p = finite_time_exponents(&s, 0.3, 0.5, &[1]).unwrap();
        assert!((p.forward[0] - s.derivative(0.3, 0.5).ln()).abs() < 1e-15);
    }

    #[test]
    fn middle_graph_unforced_is_zero() {
        let s = make_arctan_family(10.0, 0.0, RotationSpec::golden_mean());
        let m = middle_graph(&s, &uniform_grid(8), 200).unwrap();
        assert!(m.values.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn past_bifurcation_has_no_basin_boundary() {
        let s = make_arctan_family(10.0, 1.2, RotationSpec::golden_mean());
        assert_eq!(middle_graph(&s, &uniform_grid(16), 500).unwrap_err(), QpfError::NoBasinBoundary);
    }

    #[test]
    fn identical_graphs() {
        let s = make_arctan_family(10.0, 0.5, RotationSpec::golden_mean());
        let g = iterate_boundary(&s, Boundary::Upper, 10, 16);
        assert_eq!(min_graph_distance(&g, &g).unwrap().0, 0.0);
        assert_eq!(pinched_fraction(&g, &g, 1e-12).unwrap(), 1.0);
    }
}
