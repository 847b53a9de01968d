use proptest::prelude::*;
use qpf::circle::{circle_dist, wrap, RotationSpec};
use qpf::graphs::{converge_boundary, uniform_grid, Boundary, GraphKind, GraphSample};
use qpf::peaks::*;
use qpf::systems::make_arctan_family;

fn sample(grid: Vec<f64>, values: Vec<f64>) -> GraphSample {
    GraphSample { grid, values, kind: GraphKind::Upper, iterates_used: 0, lyap: None, residual: 0.0, resolution: None }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn separated_notches_are_all_found(
        slots in proptest::collection::btree_set(0usize..16, 1..8),
        depth in 0.1f64..1.0,
    ) {
        // notches centred on grid points, at least one slot apart
        let g = 1600;
        let centres: Vec<usize> = slots.iter().map(|s| s * 100 + 50).collect();
        let grid = uniform_grid(g);
        let values: Vec<f64> = grid
            .iter()
            .map(|&t| {
                centres
                    .iter()
                    .map(|&c| (1.0 - depth + 40.0 * circle_dist(t, c as f64 / g as f64)).min(1.0))
                    .fold(1.0, f64::min)
            })
            .collect();
        let peaks = detect_peaks(&sample(grid, values), 0.05);
        let found: Vec<usize> = peaks.iter().map(|p| p.index).collect();
        prop_assert_eq!(found, centres);
        for p in &peaks {
            prop_assert!((p.depth - depth).abs() < 1e-9);
            prop_assert!((p.width - depth / 40.0).abs() < 2.0 / g as f64);
        }
    }

    #[test]
    fn chain_follows_rotation(start in 0.0f64..1.0, len in 2usize..20) {
        let omega = RotationSpec::golden_mean().omega;
        let peaks: Vec<Peak> = (0..len)
            .map(|k| Peak {
                location: wrap(start + k as f64 * omega),
                index: k,
                depth: 1.0,
                slope_left: -(2f64.powi(k as i32)),
                slope_right: 2f64.powi(k as i32),
                width: 0.01,
                generation: None,
            })
            .collect();
        let chain = chain_in_graph(&peaks, start, omega, 1e-9);
        prop_assert_eq!(chain.len(), len);
        prop_assert!((sharpening_rate(&chain).unwrap() - 2.0).abs() < 1e-12);
    }
}

#[test]
fn sharp_peaks_map_to_local_minima() {
    let spec = RotationSpec::golden_mean();
    let omega = spec.omega;
    let sys = make_arctan_family(10.0, 0.96, spec);
    let g = 8192;
    let grid = uniform_grid(g);
    let graph = converge_boundary(&sys, Boundary::Upper, &grid, 1e-10, 256, 1 << 13);
    let peaks = detect_peaks(&graph, 1e-3);
    // the primary peak sits over ω; each image should be the next link
    let chain = chain_in_graph(&peaks, omega, omega, 2.0 / g as f64);
    assert!(chain.len() >= 4, "{}", chain.len());
    assert_eq!(chain.len(), peaks.len(), "detected peaks outside the chain");
    for w in chain.windows(2) {
        assert!(circle_dist(w[1].location, wrap(w[0].location + omega)) <= 2.0 / g as f64);
        assert!(w[1].depth < w[0].depth);
    }
}
