//! Local signals a walk reads at an expanded node: potential, fiber density,
//! drift and the boundary-improving set.

use std::collections::HashMap;

use serde::Serialize;

use crate::dataset::{dot, Dataset, Membership};
use crate::graph::Neighbors;

/// V(x) = 1 − cos(q, x).
#[inline]
pub fn potential(q: &[f32], ds: &Dataset, x: u32) -> f64 {
    1.0 - f64::from(dot(q, ds.vector(x)))
}

/// Per-walk read-through cache of potentials.
#[derive(Debug, Default, Clone)]
pub struct PotentialCache {
    values: HashMap<u32, f64>,
    misses: usize,
}

impl PotentialCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&mut self, q: &[f32], ds: &Dataset, x: u32) -> f64 {
        if let Some(&v) = self.values.get(&x) {
            return v;
        }
        self.misses += 1;
        let v = potential(q, ds, x);
        self.values.insert(x, v);
        v
    }

    pub fn peek(&self, x: u32) -> Option<f64> {
        self.values.get(&x).copied()
    }

    /// Number of potentials actually computed.
    pub fn computed(&self) -> usize {
        self.misses
    }
}

fn value(q: &[f32], ds: &Dataset, cache: &mut Option<&mut PotentialCache>, x: u32) -> f64 {
    match cache {
        Some(c) => c.get(q, ds, x),
        None => potential(q, ds, x),
    }
}

/// ρ_S(x) = |N_S(x)| / |N(x)|, 0 for isolated nodes.
pub fn fiber_density<G: Neighbors + ?Sized, M: Membership + ?Sized>(g: &G, fiber: &M, x: u32) -> f64 {
    let nbrs = g.neighbors(x);
    if nbrs.is_empty() {
        return 0.0;
    }
    let hits = nbrs.iter().filter(|&&y| fiber.contains(y)).count();
    hits as f64 / nbrs.len() as f64
}

/// Mean of V(y) − V(x) over filtered neighbors; `None` when there are none.
pub fn drift<G: Neighbors + ?Sized, M: Membership + ?Sized>(
    q: &[f32],
    ds: &Dataset,
    g: &G,
    fiber: &M,
    x: u32,
    mut cache: Option<&mut PotentialCache>,
) -> Option<f64> {
    let vx = value(q, ds, &mut cache, x);
    let mut sum = 0.0;
    let mut count = 0usize;
    for &y in g.neighbors(x) {
        if fiber.contains(y) {
            sum += value(q, ds, &mut cache, y) - vx;
            count += 1;
        }
    }
    (count > 0).then(|| sum / count as f64)
}

/// Non-matching neighbors with strictly lower potential than x.
pub fn boundary_improving_set<G: Neighbors + ?Sized, M: Membership + ?Sized>(
    q: &[f32],
    ds: &Dataset,
    g: &G,
    fiber: &M,
    x: u32,
    mut cache: Option<&mut PotentialCache>,
) -> Vec<u32> {
    let vx = value(q, ds, &mut cache, x);
    g.neighbors(x)
        .iter()
        .copied()
        .filter(|&y| !fiber.contains(y) && value(q, ds, &mut cache, y) < vx)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NodeSignals {
    pub node: u32,
    pub potential: f64,
    pub fiber_density: f64,
    pub drift: Option<f64>,
    pub filtered_neighbor_count: usize,
    pub boundary_improving_count: usize,
}

/// All signals at x in one pass over N(x).
pub fn node_signals<G: Neighbors + ?Sized, M: Membership + ?Sized>(
    q: &[f32],
    ds: &Dataset,
    g: &G,
    fiber: &M,
    x: u32,
    mut cache: Option<&mut PotentialCache>,
) -> NodeSignals {
    let vx = value(q, ds, &mut cache, x);
    let nbrs = g.neighbors(x);
    let mut filtered = 0usize;
    let mut sum = 0.0;
    let mut improving = 0usize;
    for &y in nbrs {
        let vy = value(q, ds, &mut cache, y);
        if fiber.contains(y) {
            filtered += 1;
            sum += vy - vx;
        } else if vy < vx {
            improving += 1;
        }
    }
    NodeSignals {
        node: x,
        potential: vx,
        fiber_density: if nbrs.is_empty() {
            0.0
        } else {
            filtered as f64 / nbrs.len() as f64
        },
        drift: (filtered > 0).then(|| sum / filtered as f64),
        filtered_neighbor_count: filtered,
        boundary_improving_count: improving,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::FilterPredicate;
    use crate::graph::ProximityGraph;

    fn angle_ds(angles: &[f64], tags: &[&str]) -> Dataset {
        let v = angles
            .iter()
            .flat_map(|a| [a.cos() as f32, a.sin() as f32])
            .collect();
        let rows = tags
            .iter()
            .map(|t| [("tag".to_string(), t.to_string())].into_iter().collect())
            .collect();
        Dataset::new(2, v, rows).unwrap()
    }

    #[test]
    fn potential_extremes() {
        let ds = Dataset::new(
            2,
            vec![1.0, 0.0, 0.0, 1.0, -1.0, 0.0],
            vec![Default::default(); 3],
        )
        .unwrap();
        let q = [1.0f32, 0.0];
        assert_eq!(potential(&q, &ds, 0), 0.0);
        assert_eq!(potential(&q, &ds, 1), 1.0);
        assert_eq!(potential(&q, &ds, 2), 2.0);
    }

    #[test]
    fn density_counts() {
        let ds = angle_ds(&[0.0, 0.1, 0.2, 0.3, 0.4], &["a", "a", "b", "b", "b"]);
        let g = ProximityGraph::from_adjacency(vec![vec![1, 2, 3, 4], vec![], vec![], vec![], vec![]]).unwrap();
        let a = ds.fiber(&FilterPredicate::eq("tag", "a"));
        let b = ds.fiber(&FilterPredicate::eq("tag", "b"));
        assert_eq!(fiber_density(&g, &a, 0), 0.25);
        assert_eq!(fiber_density(&g, &b, 0), 0.75);
        assert_eq!(fiber_density(&g, &a, 1), 0.0);
    }

    #[test]
    fn drift_cases() {
        // q along angle 0; choose angles so V = 1 - cos(angle)
        let va = |v: f64| (1.0 - v).acos();
        let ds = angle_ds(&[va(0.5), va(0.4), va(0.3), va(0.7)], &["x", "a", "a", "b"]);
        let g = ProximityGraph::from_adjacency(vec![vec![1, 2, 3], vec![0], vec![0], vec![0]]).unwrap();
        let q = [1.0f32, 0.0];
        let a = ds.fiber(&FilterPredicate::eq("tag", "a"));
        let d = drift(&q, &ds, &g, &a, 0, None).unwrap();
        assert!((d + 0.15).abs() < 1e-6, "{d}");
        let none = ds.fiber(&FilterPredicate::eq("tag", "zzz"));
        assert_eq!(drift(&q, &ds, &g, &none, 0, None), None);

        let flat = angle_ds(&[0.3, 0.3, -0.3], &["x", "a", "a"]);
        let g = ProximityGraph::from_adjacency(vec![vec![1, 2], vec![], vec![]]).unwrap();
        let a = flat.fiber(&FilterPredicate::eq("tag", "a"));
        assert!(drift(&q, &flat, &g, &a, 0, None).unwrap().abs() < 1e-7);
    }

    #[test]
    fn boundary_set() {
        let ds = angle_ds(&[0.5, 0.1, 0.9, 0.2, 0.3], &["a", "b", "b", "a", "a"]);
        let g = ProximityGraph::from_adjacency(vec![vec![1, 2, 3], vec![], vec![], vec![], vec![]]).unwrap();
        let q = [1.0f32, 0.0];
        let a = ds.fiber(&FilterPredicate::eq("tag", "a"));
        assert_eq!(boundary_improving_set(&q, &ds, &g, &a, 0, None), vec![1]);
        let g = ProximityGraph::from_adjacency(vec![vec![3, 4], vec![], vec![], vec![], vec![]]).unwrap();
        assert!(boundary_improving_set(&q, &ds, &g, &a, 0, None).is_empty());
    }

    #[test]
    fn node_signals_agree_with_parts() {
        let ds = angle_ds(&[0.5, 0.1, 0.9, 0.2, 0.7], &["a", "b", "b", "a", "a"]);
        let g = ProximityGraph::from_adjacency(vec![vec![1, 2, 3, 4], vec![], vec![], vec![], vec![]]).unwrap();
        let q = [1.0f32, 0.0];
        let a = ds.fiber(&FilterPredicate::eq("tag", "a"));
        let mut cache = PotentialCache::new();
        let s = node_signals(&q, &ds, &g, &a, 0, Some(&mut cache));
        assert_eq!(s.fiber_density, fiber_density(&g, &a, 0));
        assert_eq!(s.drift, drift(&q, &ds, &g, &a, 0, None));
        assert_eq!(s.boundary_improving_count, boundary_improving_set(&q, &ds, &g, &a, 0, None).len());
        assert_eq!(s.filtered_neighbor_count, 2);
        assert_eq!(cache.computed(), 5);
        node_signals(&q, &ds, &g, &a, 0, Some(&mut cache));
        assert_eq!(cache.computed(), 5);
    }
}
