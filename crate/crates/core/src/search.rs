//! Filtered top-k search: the anchor restart loop around one of two walks.
//!
//! The beam walk expands the best unexpanded candidate of a width-B list
//! over the full graph and passively collects matching points. The guided
//! walk descends along the fiber while the filtered neighborhood slopes
//! toward the query (phase 1) and falls back to a full-graph beam otherwise
//! (phase 2), giving up after `stall_budget` expansions without a new
//! matching point so the outer loop can restart elsewhere.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::atlas::{AnchorAtlas, AnchorParams, AnchorSelection};
use crate::dataset::{Dataset, Fiber, FilterPredicate, Membership};
use crate::error::{Error, Result};
use crate::graph::Neighbors;
use crate::seed;
use crate::signals::{node_signals, NodeSignals, PotentialCache};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WalkKind {
    Beam,
    Guided,
}

impl fmt::Display for WalkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WalkKind::Beam => "beam",
            WalkKind::Guided => "guided",
        })
    }
}

impl FromStr for WalkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "beam" => Ok(WalkKind::Beam),
            "guided" => Ok(WalkKind::Guided),
            _ => Err(Error::InvalidParameter(format!("unknown walk kind `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    EarlyStop,
    StallBudget,
    MaxHops,
    Converged,
    FrontierExhaustedThenConverged,
}

impl Termination {
    pub const ALL: [Termination; 5] = [
        Termination::EarlyStop,
        Termination::StallBudget,
        Termination::MaxHops,
        Termination::Converged,
        Termination::FrontierExhaustedThenConverged,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Termination::EarlyStop => "early_stop",
            Termination::StallBudget => "stall_budget",
            Termination::MaxHops => "max_hops",
            Termination::Converged => "converged",
            Termination::FrontierExhaustedThenConverged => "frontier_exhausted_then_converged",
        }
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Walk and restart parameters. `usize::MAX` stands for "unbounded" in
/// `stall_budget` and `max_hops`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchParams {
    pub k: usize,
    /// J: restarts after the first walk.
    pub jumps: usize,
    pub walk: WalkKind,
    pub beam_width: usize,
    pub frontier_width: usize,
    pub stall_budget: usize,
    pub max_hops: usize,
    pub anchor: AnchorParams,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self::guided()
    }
}

impl SearchParams {
    pub fn guided() -> Self {
        SearchParams {
            k: 25,
            jumps: 3,
            walk: WalkKind::Guided,
            beam_width: 2,
            frontier_width: 5,
            stall_budget: 100,
            max_hops: 100,
            anchor: AnchorParams::default(),
        }
    }

    pub fn beam() -> Self {
        SearchParams {
            walk: WalkKind::Beam,
            beam_width: 40,
            ..Self::guided()
        }
    }

    /// Guided preset used for stall diagnostics: wider beam, longer walks.
    pub fn diagnostic() -> Self {
        SearchParams {
            beam_width: 4,
            max_hops: 500,
            ..Self::guided()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        if self.beam_width == 0 || self.frontier_width == 0 {
            return Err(Error::InvalidParameter(
                "beam and frontier widths must be at least 1".into(),
            ));
        }
        if self.stall_budget == 0 || self.max_hops == 0 {
            return Err(Error::InvalidParameter(
                "stall budget and max hops must be at least 1".into(),
            ));
        }
        self.anchor.validate()
    }
}

/// One walk's outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WalkOutcome {
    pub seeds: Vec<u32>,
    pub used_clusters: Vec<u32>,
    /// Matching points collected, in collection order.
    pub results: Vec<(u32, f32)>,
    pub expansions: usize,
    pub termination: Termination,
    /// Signals at the last expanded node.
    pub stall: Option<NodeSignals>,
    /// Expansions spent in phase 1 and phase 2 (beam walks count as phase 2).
    pub phase_hops: (usize, usize),
    /// Expanded nodes in order with the phase they were expanded in.
    pub path: Vec<(u32, u8)>,
    /// Distinct potentials computed during the walk.
    pub potential_evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryResult {
    /// Best similarity first, ties by lower id.
    pub top_k: Vec<(u32, f32)>,
    pub walks_used: usize,
    pub walks: Vec<WalkOutcome>,
}

impl QueryResult {
    pub fn ids(&self) -> Vec<u32> {
        self.top_k.iter().map(|&(id, _)| id).collect()
    }
}

/// (potential, id) with a total order; lower is better.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64, u32);

impl Eq for Key {}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn dedup_seeds(seeds: &[u32]) -> Vec<u32> {
    let mut seen = HashSet::new();
    seeds.iter().copied().filter(|s| seen.insert(*s)).collect()
}

/// Keeps the k smallest potentials seen so far.
struct KthBest {
    k: usize,
    heap: BinaryHeap<Key>,
}

impl KthBest {
    fn new(k: usize) -> Self {
        KthBest {
            k,
            heap: BinaryHeap::new(),
        }
    }

    fn push(&mut self, key: Key) {
        if self.heap.len() < self.k {
            self.heap.push(key);
        } else if self.heap.peek().is_some_and(|top| key < *top) {
            self.heap.pop();
            self.heap.push(key);
        }
    }

    /// V_(k), once k results are held.
    fn threshold(&self) -> Option<f64> {
        (self.heap.len() >= self.k).then(|| self.heap.peek().map_or(f64::INFINITY, |k| k.0))
    }
}

/// Passive filtered collection with a width-B candidate list.
pub fn beam_walk<G, M>(
    q: &[f32],
    seeds: &[u32],
    fiber: &M,
    beam_width: usize,
    max_hops: usize,
    ds: &Dataset,
    g: &G,
) -> WalkOutcome
where
    G: Neighbors + ?Sized,
    M: Membership + ?Sized,
{
    let seeds = dedup_seeds(seeds);
    let mut cache = PotentialCache::new();
    let mut seen: HashSet<u32> = seeds.iter().copied().collect();
    let mut expanded: HashSet<u32> = HashSet::new();
    let mut results = Vec::new();
    let mut candidates: Vec<Key> = Vec::new();
    for &s in &seeds {
        let v = cache.get(q, ds, s);
        candidates.push(Key(v, s));
        if fiber.contains(s) {
            results.push((s, ds.similarity(q, s)));
        }
    }
    candidates.sort_unstable();
    candidates.truncate(beam_width);

    let mut path = Vec::new();
    let mut last = None;
    let termination = loop {
        let Some(&Key(_, x)) = candidates.iter().find(|c| !expanded.contains(&c.1)) else {
            break Termination::Converged;
        };
        if path.len() >= max_hops {
            break Termination::MaxHops;
        }
        expanded.insert(x);
        path.push((x, 2));
        for &y in g.neighbors(x) {
            if seen.insert(y) {
                let v = cache.get(q, ds, y);
                candidates.push(Key(v, y));
                if fiber.contains(y) {
                    results.push((y, ds.similarity(q, y)));
                }
            }
        }
        candidates.sort_unstable();
        candidates.truncate(beam_width);
        last = Some(x);
    };

    let stall = last.map(|x| node_signals(q, ds, g, fiber, x, Some(&mut cache)));
    WalkOutcome {
        seeds,
        used_clusters: Vec::new(),
        results,
        expansions: path.len(),
        termination,
        stall,
        phase_hops: (0, path.len()),
        path,
        potential_evaluations: cache.computed(),
    }
}

/// Parameters of one guided walk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GuidedParams {
    pub k: usize,
    pub beam_width: usize,
    pub frontier_width: usize,
    pub stall_budget: usize,
    pub max_hops: usize,
}

impl From<&SearchParams> for GuidedParams {
    fn from(p: &SearchParams) -> Self {
        GuidedParams {
            k: p.k,
            beam_width: p.beam_width,
            frontier_width: p.frontier_width,
            stall_budget: p.stall_budget,
            max_hops: p.max_hops,
        }
    }
}

/// Two-phase drift-guided walk.
///
/// The phase-2 beam only ever holds unexpanded nodes: selecting a node pops
/// it. Newly seen neighbors are added after each phase-2 expansion and the
/// beam is cut back to the best `beam_width`.
pub fn guided_walk<G, M>(q: &[f32], seeds: &[u32], fiber: &M, params: &GuidedParams, ds: &Dataset, g: &G) -> WalkOutcome
where
    G: Neighbors + ?Sized,
    M: Membership + ?Sized,
{
    let seeds = dedup_seeds(seeds);
    let mut cache = PotentialCache::new();
    let mut seen: Vec<u32> = Vec::new();
    let mut seen_set: HashSet<u32> = HashSet::new();
    let mut expanded: HashSet<u32> = HashSet::new();
    let mut results = Vec::new();
    let mut kth = KthBest::new(params.k);

    let mut frontier: BinaryHeap<Reverse<Key>> = BinaryHeap::new();
    let mut beam: Vec<Key> = Vec::new();
    for &s in &seeds {
        let v = cache.get(q, ds, s);
        seen_set.insert(s);
        seen.push(s);
        frontier.push(Reverse(Key(v, s)));
        if fiber.contains(s) {
            results.push((s, ds.similarity(q, s)));
            kth.push(Key(v, s));
        }
    }

    let mut phase = 1u8;
    let mut stall = 0usize;
    let mut hops = (0usize, 0usize);
    let mut path = Vec::new();
    let mut last: Option<NodeSignals> = None;

    let termination = loop {
        if path.len() >= params.max_hops {
            break Termination::MaxHops;
        }
        let x = if phase == 1 {
            let mut next = None;
            while let Some(Reverse(Key(_, id))) = frontier.pop() {
                if !expanded.contains(&id) {
                    next = Some(id);
                    break;
                }
            }
            match next {
                Some(x) => x,
                None => {
                    phase = 2;
                    beam = seen
                        .iter()
                        .filter(|id| !expanded.contains(id))
                        .map(|&id| Key(cache.get(q, ds, id), id))
                        .collect();
                    beam.sort_unstable();
                    beam.truncate(params.beam_width);
                    continue;
                }
            }
        } else {
            if beam.is_empty() {
                break if hops.1 == 0 {
                    Termination::FrontierExhaustedThenConverged
                } else {
                    Termination::Converged
                };
            }
            let Key(vx, x) = beam.remove(0);
            if kth.threshold().is_some_and(|vk| vx > vk) {
                break Termination::EarlyStop;
            }
            if stall >= params.stall_budget {
                break Termination::StallBudget;
            }
            x
        };

        expanded.insert(x);
        path.push((x, phase));
        if phase == 1 {
            hops.0 += 1;
        } else {
            hops.1 += 1;
        }

        let mut new_filtered = 0usize;
        let mut fresh = Vec::new();
        for &y in g.neighbors(x) {
            if seen_set.insert(y) {
                seen.push(y);
                let v = cache.get(q, ds, y);
                fresh.push(Key(v, y));
                if fiber.contains(y) {
                    results.push((y, ds.similarity(q, y)));
                    kth.push(Key(v, y));
                    new_filtered += 1;
                }
            }
        }
        let signals = node_signals(q, ds, g, fiber, x, Some(&mut cache));
        last = Some(signals);
        if new_filtered > 0 {
            stall = 0;
        } else {
            stall = stall.saturating_add(1);
        }
        let descending = signals.drift.is_some_and(|d| d < 0.0);

        if phase == 1 {
            if descending {
                let vx = signals.potential;
                let mut cands: Vec<Key> = g
                    .neighbors(x)
                    .iter()
                    .filter(|&&y| fiber.contains(y) && !expanded.contains(&y))
                    .map(|&y| Key(cache.get(q, ds, y), y))
                    .filter(|k| k.0 < vx)
                    .collect();
                cands.sort_unstable();
                cands.truncate(params.frontier_width);
                frontier.extend(cands.into_iter().map(Reverse));
            } else {
                phase = 2;
                let mut pool: BTreeSet<Key> = g
                    .neighbors(x)
                    .iter()
                    .filter(|y| !expanded.contains(y))
                    .map(|&y| Key(cache.get(q, ds, y), y))
                    .collect();
                pool.extend(
                    frontier
                        .drain()
                        .map(|Reverse(k)| k)
                        .filter(|k| !expanded.contains(&k.1)),
                );
                beam = pool.into_iter().take(params.beam_width).collect();
            }
        } else {
            beam.extend(fresh);
            beam.sort_unstable();
            beam.truncate(params.beam_width);
            if descending && new_filtered > 0 {
                frontier = beam
                    .iter()
                    .filter(|k| fiber.contains(k.1))
                    .map(|&k| Reverse(k))
                    .collect();
                if !frontier.is_empty() {
                    phase = 1;
                    beam.clear();
                }
            }
        }
    };

    WalkOutcome {
        seeds,
        used_clusters: Vec::new(),
        results,
        expansions: path.len(),
        termination,
        stall: last,
        phase_hops: hops,
        path,
        potential_evaluations: cache.computed(),
    }
}

/// Seed for the anchor sampler of one query.
pub fn query_sample_seed(rng_seed: u64, q: &[f32]) -> u64 {
    q.iter()
        .fold(seed::mix(rng_seed), |h, x| seed::mix(h ^ u64::from(x.to_bits())))
}

/// Filtered top-k search with anchor restarts.
pub fn filtered_search<G: Neighbors + ?Sized>(
    ds: &Dataset,
    g: &G,
    atlas: &AnchorAtlas,
    q: &[f32],
    predicate: &FilterPredicate,
    params: &SearchParams,
) -> Result<QueryResult> {
    let fiber = ds.fiber(predicate);
    search_fiber(ds, g, atlas, q, &fiber, params)
}

/// [`filtered_search`] with an already compiled predicate.
pub fn search_fiber<G: Neighbors + ?Sized>(
    ds: &Dataset,
    g: &G,
    atlas: &AnchorAtlas,
    q: &[f32],
    fiber: &Fiber<'_>,
    params: &SearchParams,
) -> Result<QueryResult> {
    params.validate()?;
    if q.len() != ds.dim() {
        return Err(Error::DimensionMismatch {
            expected: ds.dim(),
            actual: q.len(),
        });
    }
    if g.node_count() != ds.len() {
        return Err(Error::InvalidParameter(format!(
            "graph has {} nodes for {} points",
            g.node_count(),
            ds.len()
        )));
    }
    let sample_seed = query_sample_seed(params.anchor.rng_seed, q);
    let guided = GuidedParams::from(params);
    let mut processed = BTreeSet::new();
    let mut merged: BTreeMap<u32, f32> = BTreeMap::new();
    let mut walks = Vec::new();

    for _ in 0..=params.jumps {
        // Candidate clusters of a multi-clause predicate may hold no point
        // matching the whole conjunction. Such clusters are consumed without
        // spending a restart; the loop ends only once candidates run out.
        let mut sel = AnchorSelection::default();
        while sel.seeds.is_empty() {
            let next = atlas.select_anchors(fiber, q, &processed, &params.anchor, sample_seed);
            if next.used_clusters.is_empty() {
                break;
            }
            processed.extend(next.used_clusters.iter().copied());
            sel.used_clusters.extend(next.used_clusters);
            sel.seeds = next.seeds;
        }
        if sel.seeds.is_empty() {
            break;
        }
        let mut walk = match params.walk {
            WalkKind::Beam => beam_walk(q, &sel.seeds, fiber, params.beam_width, params.max_hops, ds, g),
            WalkKind::Guided => guided_walk(q, &sel.seeds, fiber, &guided, ds, g),
        };
        walk.used_clusters = sel.used_clusters;
        for &(id, sim) in &walk.results {
            let best = merged.entry(id).or_insert(sim);
            if sim > *best {
                *best = sim;
            }
        }
        walks.push(walk);
        if merged.len() >= params.k {
            break;
        }
    }

    Ok(QueryResult {
        top_k: top_k(merged.into_iter(), params.k),
        walks_used: walks.len(),
        walks,
    })
}

/// Best `k` by similarity, ties by lower id.
pub fn top_k(items: impl Iterator<Item = (u32, f32)>, k: usize) -> Vec<(u32, f32)> {
    let mut all: Vec<(u32, f32)> = items.collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}
