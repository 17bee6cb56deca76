//! Lloyd's k-means with k-means++ seeding.

use rand::Rng;

use crate::error::{Error, Result};
use crate::{par_map, seed};

#[derive(Debug, Clone)]
pub struct KMeans {
    pub dim: usize,
    /// `k` rows of `dim` values.
    pub centroids: Vec<f32>,
    pub assignment: Vec<u32>,
    /// Sum of squared distances to the assigned centroid.
    pub objective: f64,
    pub iterations: usize,
}

impl KMeans {
    pub fn k(&self) -> usize {
        self.centroids.len() / self.dim
    }

    pub fn centroid(&self, c: usize) -> &[f32] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }
}

#[inline]
fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = f64::from(*x) - f64::from(*y);
            d * d
        })
        .sum()
}

fn nearest(point: &[f32], centroids: &[f32], dim: usize) -> (u32, f64) {
    let mut best = (0u32, f64::INFINITY);
    for (c, centroid) in centroids.chunks_exact(dim).enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c as u32, d);
        }
    }
    best
}

fn plus_plus_init(data: &[f32], dim: usize, k: usize, seed: u64) -> Vec<f32> {
    let n = data.len() / dim;
    let row = |i: usize| &data[i * dim..(i + 1) * dim];
    let mut rng = seed::rng(seed);
    let mut centroids = Vec::with_capacity(k * dim);
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    centroids.extend_from_slice(row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(row(i), row(first))).collect();

    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc >= target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave the target just past the final sum
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            // all remaining points coincide with a centroid
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[pick] = true;
        centroids.extend_from_slice(row(pick));
        for (i, slot) in d2.iter_mut().enumerate() {
            let d = sq_dist(row(i), row(pick));
            if d < *slot {
                *slot = d;
            }
        }
    }
    centroids
}

/// Runs k-means on `data` (row-major, `dim` columns) until `max_iters`
/// assignment steps or a relative objective improvement below `1e-4`.
pub fn kmeans(data: &[f32], dim: usize, k: usize, max_iters: usize, seed: u64) -> Result<KMeans> {
    if dim == 0 || !data.len().is_multiple_of(dim) {
        return Err(Error::InvalidParameter("data does not form rows".into()));
    }
    let n = data.len() / dim;
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!(
            "cluster count {k} must be in 1..={n}"
        )));
    }
    let row = |i: usize| &data[i * dim..(i + 1) * dim];
    let mut centroids = plus_plus_init(data, dim, k, seed);
    let mut prev_objective = f64::INFINITY;
    let mut iterations = 0;

    loop {
        let assigned = par_map(n, |i| nearest(row(i), &centroids, dim));
        let objective: f64 = assigned.iter().map(|&(_, d)| d).sum();
        iterations += 1;
        let improvement = prev_objective - objective;
        let converged = objective == 0.0
            || (prev_objective.is_finite() && improvement < 1e-4 * prev_objective);
        if converged || iterations >= max_iters.max(1) {
            return Ok(KMeans {
                dim,
                centroids,
                assignment: assigned.into_iter().map(|(c, _)| c).collect(),
                objective,
                iterations,
            });
        }
        prev_objective = objective;

        let mut sums = vec![0.0f64; k * dim];
        let mut counts = vec![0usize; k];
        for (i, &(c, _)) in assigned.iter().enumerate() {
            let c = c as usize;
            counts[c] += 1;
            for (s, &x) in sums[c * dim..(c + 1) * dim].iter_mut().zip(row(i)) {
                *s += f64::from(x);
            }
        }
        // Empty clusters take the worst-served points, farthest first.
        let mut donors: Vec<(f64, usize)> = assigned
            .iter()
            .enumerate()
            .filter(|(_, &(c, _))| counts[c as usize] > 1)
            .map(|(i, &(_, d))| (d, i))
            .collect();
        donors.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut donors = donors.into_iter();
        for c in 0..k {
            let target = &mut centroids[c * dim..(c + 1) * dim];
            if counts[c] == 0 {
                if let Some((_, i)) = donors.next() {
                    target.copy_from_slice(row(i));
                }
                continue;
            }
            let inv = 1.0 / counts[c] as f64;
            for (t, s) in target.iter_mut().zip(&sums[c * dim..(c + 1) * dim]) {
                *t = (s * inv) as f32;
            }
        }
    }
}
