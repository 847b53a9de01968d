//! Peaks of sampled invariant graphs: detection by prominence, tracking
//! along the rotation and sharpening rates.

use serde::Serialize;

use crate::circle::{circle_dist, wrap};
use crate::error::{QpfError, Result};
use crate::graphs::GraphSample;

/// A local minimum of a sampled graph.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Peak {
    pub location: f64,
    /// Grid index of the minimum.
    pub index: usize,
    /// Prominence: drop below the lower of the two enclosing maxima.
    pub depth: f64,
    pub slope_left: f64,
    pub slope_right: f64,
    /// Width at half depth.
    pub width: f64,
    pub generation: Option<usize>,
}

impl Peak {
    pub fn steepness(&self) -> f64 {
        0.5 * (self.slope_left.abs() + self.slope_right.abs())
    }
}

/// Default detection threshold: ten times the invariance residual.
pub fn default_min_depth(graph: &GraphSample) -> f64 {
    (10.0 * graph.residual).max(1e-12)
}

fn gap(grid: &[f64], i: usize, j: usize) -> f64 {
    // angular step from grid[i] forward to grid[j]
    let d = grid[j] - grid[i];
    if d > 0.0 {
        d
    } else {
        d + 1.0
    }
}

/// Local minima with prominence at least `min_depth`. The grid must be
/// sorted in `[0, 1)` and is treated as circular.
pub fn detect_peaks(graph: &GraphSample, min_depth: f64) -> Vec<Peak> {
    let v = &graph.values;
    let t = &graph.grid;
    let n = v.len();
    if n < 3 {
        return vec![];
    }
    let prev = |i: usize| (i + n - 1) % n;
    let next = |i: usize| (i + 1) % n;
    let mut out = Vec::new();
    for i in 0..n {
        let (l, r) = (prev(i), next(i));
        if !(v[i] < v[l] && v[i] <= v[r]) {
            continue;
        }
        let walk = |step: &dyn Fn(usize) -> usize| -> f64 {
            let mut k = step(i);
            let mut top = v[i];
            while k != i && v[k] >= v[i] {
                top = top.max(v[k]);
                k = step(k);
            }
            top
        };
        let left_max = walk(&prev);
        let right_max = walk(&next);
        let depth = left_max.min(right_max) - v[i];
        if depth < min_depth {
            continue;
        }
        let half = v[i] + 0.5 * depth;
        let reach = |step: &dyn Fn(usize) -> usize, forward: bool| -> f64 {
            let mut k = i;
            let mut acc = 0.0;
            loop {
                let k2 = step(k);
                if k2 == i {
                    return acc;
                }
                let dt = if forward { gap(t, k, k2) } else { gap(t, k2, k) };
                if v[k2] >= half {
                    let frac = (half - v[k]) / (v[k2] - v[k]);
                    return acc + frac * dt;
                }
                acc += dt;
                k = k2;
            }
        };
        let width = reach(&prev, false) + reach(&next, true);
        out.push(Peak {
            location: t[i],
            index: i,
            depth,
            slope_left: (v[i] - v[l]) / gap(t, l, i),
            slope_right: (v[r] - v[i]) / gap(t, i, r),
            width,
            generation: None,
        });
    }
    out
}

fn nearest(peaks: &[Peak], theta: f64, tol: f64) -> Option<usize> {
    peaks
        .iter()
        .enumerate()
        .map(|(k, p)| (k, circle_dist(p.location, theta)))
        .filter(|&(_, d)| d <= tol)
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(k, _)| k)
}

/// Generation assignment across a sequence of peak lists.
#[derive(Debug, Clone, Serialize)]
pub struct TrackReport {
    /// Peak lists with `generation` set to the step at which each lineage
    /// first appeared.
    pub steps: Vec<Vec<Peak>>,
    /// Number of peaks without a predecessor at each step.
    pub new_per_step: Vec<usize>,
    /// `(step, peak)` pairs with no successor in the following step.
    pub unmatched: Vec<(usize, usize)>,
    /// Lineages as `(step, peak)` index chains.
    pub chains: Vec<Vec<(usize, usize)>>,
}

/// Matches each peak at `θ` in step `k` to the peak nearest `θ + ω` in step
/// `k + 1`, within `tol`.
pub fn track_peaks(steps: &[Vec<Peak>], omega: f64, tol: f64) -> TrackReport {
    let mut out: Vec<Vec<Peak>> = steps.to_vec();
    let mut chains: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut chain_of: Vec<Vec<Option<usize>>> = steps.iter().map(|s| vec![None; s.len()]).collect();
    let mut new_per_step = Vec::with_capacity(steps.len());
    let mut unmatched = Vec::new();
    for k in 0..steps.len() {
        if k > 0 {
            let mut taken = vec![false; steps[k].len()];
            for (i, p) in steps[k - 1].iter().enumerate() {
                match nearest(&steps[k], wrap(p.location + omega), tol) {
                    Some(j) if !taken[j] => {
                        taken[j] = true;
                        let c = chain_of[k - 1][i].expect("chain assigned");
                        chain_of[k][j] = Some(c);
                        chains[c].push((k, j));
                    }
                    _ => unmatched.push((k - 1, i)),
                }
            }
        }
        let mut fresh = 0;
        for j in 0..steps[k].len() {
            if chain_of[k][j].is_none() {
                chain_of[k][j] = Some(chains.len());
                chains.push(vec![(k, j)]);
                fresh += 1;
            }
        }
        new_per_step.push(fresh);
    }
    for (k, row) in out.iter_mut().enumerate() {
        for (j, p) in row.iter_mut().enumerate() {
            let c = chain_of[k][j].unwrap();
            p.generation = Some(chains[c][0].0);
        }
    }
    TrackReport { steps: out, new_per_step, unmatched, chains }
}

/// Follows the peaks of a single graph from the one nearest `start` along
/// `θ ↦ θ + ω`, stopping at the first gap.
pub fn chain_in_graph(peaks: &[Peak], start: f64, omega: f64, tol: f64) -> Vec<Peak> {
    let mut chain = Vec::new();
    let mut used = vec![false; peaks.len()];
    let mut theta = start;
    while let Some(k) = nearest(peaks, theta, tol) {
        if used[k] {
            break;
        }
        used[k] = true;
        let mut p = peaks[k].clone();
        p.generation = Some(chain.len() + 1);
        theta = wrap(p.location + omega);
        chain.push(p);
    }
    chain
}

/// Geometric mean of the steepness ratios along a chain.
pub fn sharpening_rate(chain: &[Peak]) -> Result<f64> {
    if chain.len() < 2 || chain.iter().any(|p| !(p.steepness() > 0.0)) {
        return Err(QpfError::ChainTooShort { len: chain.len() });
    }
    let logs: f64 = chain.windows(2).map(|w| (w[1].steepness() / w[0].steepness()).ln()).sum();
    Ok((logs / (chain.len() - 1) as f64).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::GraphKind;

    fn sample(grid: Vec<f64>, values: Vec<f64>) -> GraphSample {
        GraphSample { grid, values, kind: GraphKind::Iterate, iterates_used: 0, lyap: None, residual: 0.0, resolution: None }
    }

    #[test]
    fn constant_graph_has_no_peaks() {
        let g = sample((0..100).map(|i| i as f64 / 100.0).collect(), vec![0.7; 100]);
        assert!(detect_peaks(&g, 1e-9).is_empty());
    }

    #[test]
    fn single_v_shape() {
        let grid: Vec<f64> = (0..200).map(|i| i as f64 / 200.0).collect();
        let values = grid.iter().map(|&t| (4.0 * circle_dist(t, 0.3)).min(1.0)).collect();
        let peaks = detect_peaks(&sample(grid, values), 0.1);
        assert_eq!(peaks.len(), 1);
        let p = &peaks[0];
        assert!((p.location - 0.3).abs() < 1e-12);
        assert!((p.depth - 1.0).abs() < 1e-12);
        assert!((p.slope_left + 4.0).abs() < 1e-9 && (p.slope_right - 4.0).abs() < 1e-9);
        assert!((p.width - 0.25).abs() < 1e-9);
    }

    #[test]
    fn short_chain_is_rejected() {
        assert!(matches!(sharpening_rate(&[]), Err(QpfError::ChainTooShort { len: 0 })));
    }
}
