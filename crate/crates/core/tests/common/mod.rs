#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use fiberann::dataset::MetadataRow;
use fiberann::{Dataset, FilterPredicate, Neighbors};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f32 {
    // Box-Muller; adequate for test data
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random();
    ((-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()) as f32
}

/// `fields[i]` = (name, vocabulary size, fill probability).
pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, d: usize, fields: &[(&str, usize, f64)]) -> Dataset {
    let vectors: Vec<f32> = (0..n * d).map(|_| gaussian(rng)).collect();
    let rows: Vec<MetadataRow> = (0..n)
        .map(|_| {
            let mut row = MetadataRow::new();
            for &(name, vocab, fill) in fields {
                if rng.random_bool(fill) {
                    row.insert(name.to_string(), format!("v{}", rng.random_range(0..vocab)));
                }
            }
            row
        })
        .collect();
    let names = fields.iter().map(|f| f.0.to_string()).collect();
    Dataset::with_fields(d, vectors, names, rows).unwrap()
}

/// One or two clauses with one to three allowed values each.
pub fn random_predicate(rng: &mut ChaCha8Rng, fields: &[(&str, usize, f64)]) -> FilterPredicate {
    let clauses = rng.random_range(1..=fields.len().min(2));
    let mut picked: Vec<usize> = (0..fields.len()).collect();
    let mut map = BTreeMap::new();
    for _ in 0..clauses {
        let f = picked.remove(rng.random_range(0..picked.len()));
        let (name, vocab, _) = fields[f];
        let m = rng.random_range(1..=vocab.min(3));
        let values: BTreeSet<String> = (0..m).map(|_| format!("v{}", rng.random_range(0..vocab))).collect();
        map.insert(name.to_string(), values);
    }
    FilterPredicate::new(map).unwrap()
}

/// Predicate semantics straight from the metadata strings.
pub fn naive_matches(ds: &Dataset, p: &FilterPredicate, id: u32) -> bool {
    let row = ds.metadata_row(id);
    p.clauses()
        .iter()
        .all(|(f, allowed)| row.get(f).is_some_and(|v| allowed.contains(v)))
}

pub fn naive_dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum()
}

/// Nodes reachable from `starts` along out-edges.
pub fn reachable<G: Neighbors>(g: &G, starts: &[u32]) -> BTreeSet<u32> {
    let mut seen: BTreeSet<u32> = starts.iter().copied().collect();
    let mut queue: VecDeque<u32> = starts.iter().copied().collect();
    while let Some(x) = queue.pop_front() {
        for &y in g.neighbors(x) {
            if seen.insert(y) {
                queue.push_back(y);
            }
        }
    }
    seen
}

pub fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f32> {
    let mut v: Vec<f32> = (0..d).map(|_| gaussian(rng)).collect();
    assert!(fiberann::dataset::normalize(&mut v));
    v
}
