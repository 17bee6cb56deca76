//! Gaussian-mixture benchmark generator with Zipf-distributed categorical
//! metadata and queries spread over selectivity bins.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Zipf};

use crate::dataset::{normalize, Dataset, FilterPredicate, MetadataRow, QueryRecord};
use crate::diagnostics::{bin_index, DEFAULT_EDGES};
use crate::error::{Error, Result};
use crate::eval::{brute_force_topk, GroundTruth};
use crate::par_map;
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSpec {
    pub name: String,
    pub vocab: usize,
    /// Zipf exponent of the value frequencies.
    pub zipf: f64,
    /// Probability that a point's value is tied to its mixture component.
    /// Zero makes the field independent of geometry.
    pub purity: f64,
    /// Probability that the field is populated at all.
    pub fill: f64,
}

impl FieldSpec {
    pub fn new(name: &str, vocab: usize, zipf: f64) -> Self {
        FieldSpec {
            name: name.to_string(),
            vocab,
            zipf,
            purity: 0.0,
            fill: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n: usize,
    pub dim: usize,
    pub components: usize,
    /// Per-coordinate standard deviation around a component mean, relative
    /// to 1/√d.
    pub spread: f64,
    pub fields: Vec<FieldSpec>,
    pub queries_per_bin: usize,
    pub k: usize,
    pub bin_edges: Vec<f64>,
    pub seed: u64,
}

impl SyntheticSpec {
    /// The pinned benchmark: 20,000 points in 32 dimensions, three fields,
    /// 200 queries in each of the five selectivity bins.
    pub fn benchmark(seed: u64) -> Self {
        SyntheticSpec {
            n: 20_000,
            dim: 32,
            components: 64,
            spread: 1.0,
            fields: vec![
                FieldSpec {
                    purity: 0.85,
                    ..FieldSpec::new("category", 120, 1.0)
                },
                FieldSpec::new("colour", 60, 1.1),
                FieldSpec {
                    fill: 0.8,
                    ..FieldSpec::new("size", 8, 0.8)
                },
            ],
            queries_per_bin: 200,
            k: 25,
            bin_edges: DEFAULT_EDGES.to_vec(),
            seed,
        }
    }

    /// A scaled-down variant of [`SyntheticSpec::benchmark`].
    pub fn small(n: usize, queries_per_bin: usize, seed: u64) -> Self {
        SyntheticSpec {
            n,
            components: 16,
            queries_per_bin,
            ..Self::benchmark(seed)
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticBench {
    pub dataset: Dataset,
    pub queries: Vec<QueryRecord>,
    pub truth: Vec<GroundTruth>,
    pub component_means: Vec<Vec<f32>>,
    /// Mixture component of each point.
    pub components: Vec<u32>,
}

fn gaussian_unit(rng: &mut ChaCha8Rng, center: Option<&[f32]>, dim: usize, scale: f64) -> Vec<f32> {
    loop {
        let mut v: Vec<f32> = (0..dim)
            .map(|j| {
                let z: f64 = StandardNormal.sample(rng);
                center.map_or(0.0, |c| f64::from(c[j])) as f32 + (z * scale) as f32
            })
            .collect();
        if normalize(&mut v) {
            return v;
        }
    }
}

fn zipf(vocab: usize, s: f64) -> Result<Zipf<f64>> {
    Zipf::new(vocab as f64, s).map_err(|e| Error::InvalidParameter(format!("zipf({vocab}, {s}): {e}")))
}

fn value_name(field: &str, v: usize) -> String {
    format!("{field}_{v:03}")
}

/// Generates the dataset, a query batch covering every selectivity bin and
/// its exact ground truth.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<SyntheticBench> {
    if spec.n == 0 || spec.dim == 0 || spec.components == 0 || spec.k == 0 {
        return Err(Error::InvalidParameter(
            "n, dim, components and k must be at least 1".into(),
        ));
    }
    if let Some(f) = spec.fields.iter().find(|f| f.vocab == 0) {
        return Err(Error::InvalidParameter(format!("field `{}` has an empty vocabulary", f.name)));
    }
    let mut geo = seed::rng(seed::derive(spec.seed, "synthetic/geometry"));
    let mut meta = seed::rng(seed::derive(spec.seed, "synthetic/metadata"));
    let mut qrng = seed::rng(seed::derive(spec.seed, "synthetic/queries"));

    let means: Vec<Vec<f32>> = (0..spec.components)
        .map(|_| gaussian_unit(&mut geo, None, spec.dim, 1.0))
        .collect();
    let scale = spec.spread / (spec.dim as f64).sqrt();
    let mut vectors = Vec::with_capacity(spec.n * spec.dim);
    let mut components = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let c = geo.random_range(0..spec.components);
        components.push(c as u32);
        vectors.extend(gaussian_unit(&mut geo, Some(&means[c]), spec.dim, scale));
    }

    // Each field's global value order is a fixed random permutation so that
    // value ids carry no frequency information.
    let mut rows: Vec<MetadataRow> = vec![MetadataRow::new(); spec.n];
    for f in &spec.fields {
        let dist = zipf(f.vocab, f.zipf)?;
        let mut perm: Vec<usize> = (0..f.vocab).collect();
        perm.shuffle(&mut meta);
        for (i, row) in rows.iter_mut().enumerate() {
            if f.fill < 1.0 && !meta.random_bool(f.fill.clamp(0.0, 1.0)) {
                continue;
            }
            let rank = dist.sample(&mut meta) as usize - 1;
            let v = if f.purity > 0.0 && meta.random_bool(f.purity.clamp(0.0, 1.0)) {
                // values local to the component: a band of the vocabulary
                let offset = components[i] as usize * f.vocab / spec.components;
                perm[(offset + rank) % f.vocab]
            } else {
                perm[rank]
            };
            row.insert(f.name.clone(), value_name(&f.name, v));
        }
    }
    let field_names: Vec<String> = spec.fields.iter().map(|f| f.name.clone()).collect();
    let dataset = Dataset::with_fields(spec.dim, vectors, field_names, rows)?;

    let pool = predicate_pool(&dataset, spec)?;
    let mut queries = Vec::new();
    for (b, candidates) in pool.iter().enumerate() {
        if candidates.is_empty() {
            return Err(Error::Infeasible(format!(
                "no predicate falls in selectivity bin {b}"
            )));
        }
        for _ in 0..spec.queries_per_bin {
            let p = candidates[qrng.random_range(0..candidates.len())].clone();
            let c = qrng.random_range(0..spec.components);
            let v = gaussian_unit(&mut qrng, Some(&means[c]), spec.dim, scale);
            queries.push(QueryRecord::new(v, p, spec.k)?);
        }
    }
    let truth = par_map(queries.len(), |i| {
        let fiber = dataset.fiber(&queries[i].predicate);
        brute_force_topk(&queries[i].vector, &fiber, queries[i].k, &dataset)
    });
    Ok(SyntheticBench {
        dataset,
        queries,
        truth,
        component_means: means,
        components,
    })
}

/// Candidate predicates grouped by selectivity bin: single values, cross
/// field pairs and unions of the most frequent values of one field.
fn predicate_pool(ds: &Dataset, spec: &SyntheticSpec) -> Result<Vec<Vec<FilterPredicate>>> {
    let n = ds.len() as f64;
    let nf = ds.field_names().len();
    let mut counts: Vec<HashMap<u32, usize>> = vec![HashMap::new(); nf];
    let mut pairs: BTreeMap<(usize, u32, usize, u32), usize> = BTreeMap::new();
    for i in 0..ds.len() as u32 {
        for f in 0..nf {
            if let Some(v) = ds.value_of(f, i) {
                *counts[f].entry(v).or_default() += 1;
                for g in f + 1..nf {
                    if let Some(w) = ds.value_of(g, i) {
                        *pairs.entry((f, v, g, w)).or_default() += 1;
                    }
                }
            }
        }
    }
    let mut bins: Vec<Vec<FilterPredicate>> = vec![Vec::new(); spec.bin_edges.len() + 1];
    let mut push = |count: usize, p: FilterPredicate| {
        if count > 0 {
            bins[bin_index(count as f64 / n, &spec.bin_edges)].push(p);
        }
    };
    let name = |f: usize, v: u32| (ds.field_names()[f].clone(), ds.vocabulary(f)[v as usize].clone());

    for (f, c) in counts.iter().enumerate() {
        let mut ordered: Vec<(u32, usize)> = c.iter().map(|(&v, &k)| (v, k)).collect();
        ordered.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        for &(v, k) in &ordered {
            let (fname, vname) = name(f, v);
            push(k, FilterPredicate::eq(fname, vname));
        }
        for m in 2..=ordered.len().min(6) {
            let values: BTreeSet<String> = ordered[..m].iter().map(|&(v, _)| name(f, v).1).collect();
            let total = ordered[..m].iter().map(|p| p.1).sum();
            let clauses = BTreeMap::from([(ds.field_names()[f].clone(), values)]);
            push(total, FilterPredicate::new(clauses)?);
        }
    }
    for (&(f, v, g, w), &k) in &pairs {
        let (fa, va) = name(f, v);
        let (fb, vb) = name(g, w);
        push(k, FilterPredicate::eq(fa, va).and_in(fb, [vb])?);
    }
    Ok(bins)
}
