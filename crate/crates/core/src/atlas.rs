//! Anchor atlas: k-means clusters over the unit vectors, augmented with
//! `members[(cluster, field, value)]` point lists and an inverted
//! `cluster_index[(field, value)]` → clusters map.
//!
//! Both structures are sparse: a point contributes one member entry per
//! populated field and at most one cluster-index entry per populated field,
//! so storage is bounded by the number of populated (point, field) pairs and
//! does not depend on vocabulary sizes or the cluster count.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::index;

use crate::dataset::{dot, normalize, Dataset, Fiber};
use crate::error::{Error, Result};
use crate::kmeans::kmeans;
use crate::seed;

const ATLAS_MAGIC: &[u8; 4] = b"FATL";

/// Seed selection budgets for one restart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnchorParams {
    /// n_s: seeds gathered per restart.
    pub seed_budget: usize,
    /// C_max: clusters consulted per restart.
    pub cluster_budget: usize,
    pub rng_seed: u64,
}

impl Default for AnchorParams {
    fn default() -> Self {
        AnchorParams {
            seed_budget: 10,
            cluster_budget: 5,
            rng_seed: 0,
        }
    }
}

impl AnchorParams {
    pub fn validate(&self) -> Result<()> {
        if self.seed_budget == 0 || self.cluster_budget == 0 {
            return Err(Error::InvalidParameter(
                "seed and cluster budgets must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Seeds drawn for one restart and every cluster consulted to get them.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnchorSelection {
    pub seeds: Vec<u32>,
    pub used_clusters: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct AnchorAtlas {
    dim: usize,
    centroids: Vec<f32>,
    assignment: Vec<u32>,
    members: HashMap<(u32, u32, u32), Vec<u32>>,
    cluster_index: HashMap<(u32, u32), Vec<u32>>,
}

/// ⌈√n⌉, at least 1.
pub fn default_cluster_count(n: usize) -> usize {
    let mut k = (n as f64).sqrt().ceil() as usize;
    while k * k < n {
        k += 1;
    }
    while k > 1 && (k - 1) * (k - 1) >= n {
        k -= 1;
    }
    k.max(1)
}

/// Clusters the dataset and indexes its metadata.
pub fn build_atlas(ds: &Dataset, clusters: usize, rng_seed: u64, max_iters: usize) -> Result<AnchorAtlas> {
    if clusters == 0 || clusters > ds.len() {
        return Err(Error::InvalidParameter(format!(
            "cluster count {clusters} must be in 1..={}",
            ds.len()
        )));
    }
    let km = kmeans(ds.vectors(), ds.dim(), clusters, max_iters, rng_seed)?;
    let mut centroids = km.centroids;
    for (c, centroid) in centroids.chunks_exact_mut(ds.dim()).enumerate() {
        if !normalize(centroid) {
            // opposing members cancelled out; fall back to the first member
            let first = km.assignment.iter().position(|&a| a as usize == c).unwrap_or(0);
            centroid.copy_from_slice(ds.vector(first as u32));
        }
    }
    AnchorAtlas::from_parts(ds, centroids, km.assignment)
}

impl AnchorAtlas {
    /// Assembles an atlas from centroids and an assignment, rebuilding the
    /// member lists and cluster index from the dataset's metadata.
    pub fn from_parts(ds: &Dataset, centroids: Vec<f32>, assignment: Vec<u32>) -> Result<Self> {
        let dim = ds.dim();
        if centroids.is_empty() || !centroids.len().is_multiple_of(dim) {
            return Err(Error::InvalidParameter("centroids do not form rows".into()));
        }
        let k = centroids.len() / dim;
        if assignment.len() != ds.len() {
            return Err(Error::RowCountMismatch {
                vectors: ds.len(),
                metadata: assignment.len(),
            });
        }
        if let Some(&bad) = assignment.iter().find(|&&c| c as usize >= k) {
            return Err(Error::InvalidParameter(format!(
                "assignment references cluster {bad} of {k}"
            )));
        }

        let mut members: HashMap<(u32, u32, u32), Vec<u32>> = HashMap::new();
        let mut index: HashMap<(u32, u32), BTreeSet<u32>> = HashMap::new();
        for (i, &c) in assignment.iter().enumerate() {
            for f in 0..ds.field_names().len() {
                if let Some(v) = ds.value_of(f, i as u32) {
                    members.entry((c, f as u32, v)).or_default().push(i as u32);
                    index.entry((f as u32, v)).or_default().insert(c);
                }
            }
        }
        let cluster_index = index
            .into_iter()
            .map(|(key, set)| (key, set.into_iter().collect()))
            .collect();
        Ok(AnchorAtlas {
            dim,
            centroids,
            assignment,
            members,
            cluster_index,
        })
    }

    pub fn cluster_count(&self) -> usize {
        self.centroids.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn centroid(&self, c: u32) -> &[f32] {
        let c = c as usize;
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }

    pub fn assignment(&self) -> &[u32] {
        &self.assignment
    }

    /// Points of cluster `c` whose `field` equals value id `value`.
    pub fn members(&self, c: u32, field: usize, value: u32) -> &[u32] {
        self.members
            .get(&(c, field as u32, value))
            .map_or(&[], Vec::as_slice)
    }

    /// Clusters holding at least one point with `field` = `value`, ascending.
    pub fn clusters_with(&self, field: usize, value: u32) -> &[u32] {
        self.cluster_index
            .get(&(field as u32, value))
            .map_or(&[], Vec::as_slice)
    }

    /// Total ids stored across all member lists.
    pub fn member_entries(&self) -> usize {
        self.members.values().map(Vec::len).sum()
    }

    /// Total cluster ids stored across the inverted index.
    pub fn index_entries(&self) -> usize {
        self.cluster_index.values().map(Vec::len).sum()
    }

    /// C_match: per clause the union of the allowed values' posting lists,
    /// intersected across clauses. For multi-clause predicates this can
    /// include clusters with no point satisfying the whole conjunction.
    pub fn candidate_clusters(&self, fiber: &Fiber<'_>) -> Vec<u32> {
        if !fiber.is_satisfiable() {
            return Vec::new();
        }
        let mut acc: Option<Vec<u32>> = None;
        for (field, values) in fiber.clauses() {
            let union: BTreeSet<u32> = values
                .iter()
                .flat_map(|&v| self.clusters_with(field, v).iter().copied())
                .collect();
            acc = Some(match acc {
                None => union.into_iter().collect(),
                Some(prev) => prev.into_iter().filter(|c| union.contains(c)).collect(),
            });
            if acc.as_ref().is_some_and(Vec::is_empty) {
                break;
            }
        }
        acc.unwrap_or_default()
    }

    /// Points in cluster `c` satisfying the full conjunction, ascending.
    pub fn matching_members(&self, c: u32, fiber: &Fiber<'_>) -> Vec<u32> {
        let mut acc: Option<Vec<u32>> = None;
        for (field, values) in fiber.clauses() {
            let mut union: Vec<u32> = values
                .iter()
                .flat_map(|&v| self.members(c, field, v).iter().copied())
                .collect();
            union.sort_unstable();
            acc = Some(match acc {
                None => union,
                Some(prev) => prev
                    .into_iter()
                    .filter(|id| union.binary_search(id).is_ok())
                    .collect(),
            });
        }
        let mut out = acc.unwrap_or_default();
        out.retain(|&id| fiber.contains(id));
        out
    }

    /// Candidate clusters not yet processed, best centroid similarity first.
    pub fn ranked_clusters(&self, fiber: &Fiber<'_>, q: &[f32], processed: &BTreeSet<u32>) -> Vec<u32> {
        let mut scored: Vec<(f32, u32)> = self
            .candidate_clusters(fiber)
            .into_iter()
            .filter(|c| !processed.contains(c))
            .map(|c| (dot(q, self.centroid(c)), c))
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        scored.into_iter().map(|(_, c)| c).collect()
    }

    /// Draws up to `seed_budget` matching points from the best-ranked
    /// unprocessed clusters, consulting at most `cluster_budget` of them.
    /// Within a cluster, points are sampled uniformly without replacement
    /// from a stream keyed by `(sample_seed, cluster)`.
    pub fn select_anchors(
        &self,
        fiber: &Fiber<'_>,
        q: &[f32],
        processed: &BTreeSet<u32>,
        params: &AnchorParams,
        sample_seed: u64,
    ) -> AnchorSelection {
        let mut out = AnchorSelection::default();
        for c in self
            .ranked_clusters(fiber, q, processed)
            .into_iter()
            .take(params.cluster_budget)
        {
            if out.seeds.len() >= params.seed_budget {
                break;
            }
            out.used_clusters.push(c);
            let pool = self.matching_members(c, fiber);
            let take = (params.seed_budget - out.seeds.len()).min(pool.len());
            let mut rng = seed::rng(seed::combine(sample_seed, u64::from(c)));
            out.seeds
                .extend(index::sample(&mut rng, pool.len(), take).iter().map(|i| pool[i]));
        }
        out
    }
}

pub fn save_atlas(atlas: &AnchorAtlas, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_atlas(atlas, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_atlas(atlas: &AnchorAtlas, w: &mut impl Write) -> Result<()> {
    w.write_all(ATLAS_MAGIC)?;
    w.write_all(&(atlas.cluster_count() as u32).to_le_bytes())?;
    w.write_all(&(atlas.dim as u32).to_le_bytes())?;
    for x in &atlas.centroids {
        w.write_all(&x.to_le_bytes())?;
    }
    for c in &atlas.assignment {
        w.write_all(&c.to_le_bytes())?;
    }
    Ok(())
}

/// Loads centroids and assignment, then rebuilds the metadata index from `ds`.
pub fn load_atlas(path: impl AsRef<Path>, ds: &Dataset) -> Result<AnchorAtlas> {
    read_atlas(BufReader::new(File::open(path)?), ds)
}

pub fn read_atlas(mut r: impl Read, ds: &Dataset) -> Result<AnchorAtlas> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < 12 || &bytes[..4] != ATLAS_MAGIC {
        return Err(Error::format("FATL", "bad magic or truncated header"));
    }
    let word = |i: usize| u32::from_le_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]);
    let k = word(4) as usize;
    let d = word(8) as usize;
    if d != ds.dim() {
        return Err(Error::DimensionMismatch {
            expected: ds.dim(),
            actual: d,
        });
    }
    let body = &bytes[12..];
    let centroid_bytes = k * d * 4;
    if body.len() < centroid_bytes || !(body.len() - centroid_bytes).is_multiple_of(4) {
        return Err(Error::format("FATL", "truncated centroids or assignment"));
    }
    let floats = |b: &[u8]| -> Vec<f32> {
        b.chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect()
    };
    let centroids = floats(&body[..centroid_bytes]);
    let assignment = body[centroid_bytes..]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    AnchorAtlas::from_parts(ds, centroids, assignment)
}
