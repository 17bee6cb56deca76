mod common;

use fiberann::graph::build_graph;
use fiberann::signals::{boundary_improving_set, drift, fiber_density, node_signals, potential, PotentialCache};
use fiberann::{FilterPredicate, GraphBuildParams, Neighbors};
use proptest::prelude::*;

use common::{naive_dot, naive_matches, random_dataset, random_predicate, random_unit, rng};

const FIELDS: [(&str, usize, f64); 2] = [("a", 3, 0.9), ("b", 2, 0.7)];

fn setup(seed: u64) -> (fiberann::Dataset, fiberann::ProximityGraph, FilterPredicate, Vec<f32>) {
    let mut r = rng(seed);
    let ds = random_dataset(&mut r, 50, 4, &FIELDS);
    let g = build_graph(
        &ds,
        &GraphBuildParams {
            k: 6,
            max_degree: 8,
            alpha: 1.2,
        },
    )
    .unwrap();
    let p = random_predicate(&mut r, &FIELDS);
    let q = random_unit(&mut r, 4);
    (ds, g, p, q)
}

#[test]
fn signals_match_a_direct_computation() {
    for seed in 0..10 {
        let (ds, g, p, q) = setup(seed);
        let fiber = ds.fiber(&p);
        let v = |i: u32| 1.0 - naive_dot(&q, ds.vector(i));
        for x in 0..50u32 {
            let nbrs = g.neighbors(x);
            let filt: Vec<u32> = nbrs.iter().copied().filter(|&y| naive_matches(&ds, &p, y)).collect();
            let rho = if nbrs.is_empty() { 0.0 } else { filt.len() as f64 / nbrs.len() as f64 };
            assert_eq!(fiber_density(&g, &fiber, x), rho);
            assert!((potential(&q, &ds, x) - v(x)).abs() < 1e-6);

            let want_drift =
                (!filt.is_empty()).then(|| filt.iter().map(|&y| v(y) - v(x)).sum::<f64>() / filt.len() as f64);
            let got = drift(&q, &ds, &g, &fiber, x, None);
            match (got, want_drift) {
                (Some(a), Some(b)) => assert!((a - b).abs() < 1e-6),
                (None, None) => {}
                other => panic!("drift mismatch {other:?}"),
            }
            let b_want: Vec<u32> = nbrs
                .iter()
                .copied()
                .filter(|&y| !naive_matches(&ds, &p, y) && v(y) < v(x))
                .collect();
            assert_eq!(boundary_improving_set(&q, &ds, &g, &fiber, x, None), b_want);

            let s = node_signals(&q, &ds, &g, &fiber, x, None);
            assert_eq!(s.node, x);
            assert_eq!(s.fiber_density, rho);
            assert_eq!(s.filtered_neighbor_count, filt.len());
            assert_eq!(s.boundary_improving_count, b_want.len());
            assert_eq!(s.drift.is_some(), want_drift.is_some());
        }
    }
}

#[test]
fn cache_counts_distinct_nodes() {
    let (ds, g, p, q) = setup(77);
    let fiber = ds.fiber(&p);
    let mut cache = PotentialCache::new();
    for x in 0..10u32 {
        node_signals(&q, &ds, &g, &fiber, x, Some(&mut cache));
    }
    let mut touched: Vec<u32> = (0..10u32).flat_map(|x| std::iter::once(x).chain(g.neighbors(x).iter().copied())).collect();
    touched.sort_unstable();
    touched.dedup();
    assert_eq!(cache.computed(), touched.len());
    assert_eq!(cache.peek(0), Some(potential(&q, &ds, 0)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bounds_and_implications(seed in 0u64..10_000) {
        let (ds, g, p, q) = setup(seed);
        let fiber = ds.fiber(&p);
        for x in 0..50u32 {
            let s = node_signals(&q, &ds, &g, &fiber, x, None);
            prop_assert!((0.0..=1.0).contains(&s.fiber_density));
            prop_assert!((-1e-6..=2.0 + 1e-6).contains(&s.potential));
            if let Some(d) = s.drift {
                prop_assert!((-2.0 - 1e-6..=2.0 + 1e-6).contains(&d));
            }
            prop_assert_eq!(s.drift.is_none(), s.filtered_neighbor_count == 0);
            // Non-negative drift means no filtered neighbor lowers V on average,
            // so at least one filtered neighbor is no better than x.
            if s.drift.is_some_and(|d| d >= 0.0) {
                prop_assert!(g.neighbors(x).iter().any(|&y| fiber.contains(y) && potential(&q, &ds, y) >= s.potential - 1e-12));
            }
            prop_assert!(s.filtered_neighbor_count + s.boundary_improving_count <= g.node_count().min(g.neighbors(x).len()));
        }
    }
}
