//! Ground truth, recall, the post-filter baseline and the benchmark runner.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::atlas::AnchorAtlas;
use crate::dataset::{dot, normalize, Dataset, Everything, Fiber, Membership, QueryRecord};
use crate::diagnostics::{
    fmt_f, fmt_opt, regime_summary, selectivity_table, write_bins_csv, write_regimes_csv, write_stalls_csv, BinRow,
    QuerySummary, RegimeRow, StallRecord, DEFAULT_EDGES,
};
use crate::error::{Error, Result};
use crate::graph::Neighbors;
use crate::par_map;
use crate::search::{beam_walk, search_fiber, top_k, SearchParams, WalkOutcome};

/// True top-k of one query: ids with their similarities, best first.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub ids: Vec<u32>,
    pub sims: Vec<f32>,
}

/// Exact filtered top-k by scanning the fiber, ties by lower id.
pub fn brute_force_topk<M: Membership + ?Sized>(q: &[f32], fiber: &M, k: usize, ds: &Dataset) -> GroundTruth {
    let scored = (0..ds.len() as u32)
        .filter(|&i| fiber.contains(i))
        .map(|i| (i, dot(q, ds.vector(i))));
    let best = top_k(scored, k);
    GroundTruth {
        ids: best.iter().map(|p| p.0).collect(),
        sims: best.iter().map(|p| p.1).collect(),
    }
}

/// |returned ∩ truth| / min(k, |truth|); 1.0 when the truth is empty.
pub fn recall_at_k(returned: &[u32], truth: &[u32], k: usize) -> f64 {
    let denom = k.min(truth.len());
    if denom == 0 {
        return 1.0;
    }
    let truth: std::collections::HashSet<u32> = truth.iter().take(denom).copied().collect();
    let mut hit: Vec<u32> = returned.iter().copied().filter(|id| truth.contains(id)).collect();
    hit.sort_unstable();
    hit.dedup();
    hit.len() as f64 / denom as f64
}

/// The point most similar to the dataset's mean direction; the fixed entry
/// point of the unfiltered baseline.
pub fn medoid(ds: &Dataset) -> u32 {
    let mut mean = vec![0.0f64; ds.dim()];
    for i in 0..ds.len() as u32 {
        for (m, x) in mean.iter_mut().zip(ds.vector(i)) {
            *m += f64::from(*x);
        }
    }
    let mut dir: Vec<f32> = mean.iter().map(|&m| m as f32).collect();
    if !normalize(&mut dir) {
        return 0;
    }
    (0..ds.len() as u32)
        .map(|i| (i, ds.similarity(&dir, i)))
        .fold(None, |best: Option<(u32, f32)>, cur| match best {
            Some(b) if b.1 >= cur.1 => Some(b),
            _ => Some(cur),
        })
        .map_or(0, |b| b.0)
}

/// Unfiltered beam search for `k·multiplier` candidates from `entry`, then
/// filter and keep the best `k`.
pub fn post_filter_baseline<G, M>(
    q: &[f32],
    fiber: &M,
    k: usize,
    multiplier: usize,
    ds: &Dataset,
    g: &G,
    entry: u32,
) -> Vec<u32>
where
    G: Neighbors + ?Sized,
    M: Membership + ?Sized,
{
    let width = k.saturating_mul(multiplier.max(1));
    let walk = beam_walk(q, &[entry], &Everything, width, usize::MAX, ds, g);
    top_k(walk.results.into_iter(), width)
        .into_iter()
        .filter(|&(id, _)| fiber.contains(id))
        .take(k)
        .map(|(id, _)| id)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Guided,
    Beam,
    PostFilter,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Guided => "guided",
            Method::Beam => "beam",
            Method::PostFilter => "post_filter",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "guided" => Ok(Method::Guided),
            "beam" => Ok(Method::Beam),
            "post_filter" | "post-filter" => Ok(Method::PostFilter),
            _ => Err(Error::InvalidParameter(format!("unknown method `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub methods: Vec<Method>,
    /// Parameters of the guided method (`walk` is forced to guided).
    pub guided: SearchParams,
    /// Parameters of the beam method (`walk` is forced to beam).
    pub beam: SearchParams,
    pub post_filter_multiplier: usize,
    pub bin_edges: Vec<f64>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            methods: vec![Method::Guided, Method::Beam, Method::PostFilter],
            guided: SearchParams::guided(),
            beam: SearchParams::beam(),
            post_filter_multiplier: 20,
            bin_edges: DEFAULT_EDGES.to_vec(),
        }
    }
}

/// One query under one method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryOutcome {
    pub query_id: usize,
    pub selectivity: f64,
    pub ids: Vec<u32>,
    pub recall: f64,
    pub walks: usize,
    pub hops: usize,
    /// Recall of the merged results after each walk.
    pub recall_after_walk: Vec<f64>,
    pub latency_ms: f64,
    #[serde(skip)]
    pub walk_outcomes: Vec<WalkOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodReport {
    pub method: Method,
    pub queries: usize,
    pub mean_recall: f64,
    pub frac_recall_ge_08: f64,
    pub frac_recall_eq_1: f64,
    pub frac_zero_recall: f64,
    pub mean_latency_ms: f64,
    pub mean_walks: f64,
    pub frac_one_walk: f64,
    pub mean_hops: f64,
    /// Entry j: mean recall after walk j+1 over queries needing ≥ j+1 walks.
    pub recall_after_walk: Vec<Option<f64>>,
    pub queries_reaching_walk: Vec<usize>,
}

impl MethodReport {
    pub fn summarize(method: Method, outcomes: &[&QueryOutcome]) -> Self {
        let n = outcomes.len();
        let frac = |pred: &dyn Fn(&QueryOutcome) -> bool| {
            if n == 0 {
                0.0
            } else {
                outcomes.iter().filter(|o| pred(o)).count() as f64 / n as f64
            }
        };
        let mean = |f: &dyn Fn(&QueryOutcome) -> f64| {
            if n == 0 {
                0.0
            } else {
                outcomes.iter().map(|o| f(o)).sum::<f64>() / n as f64
            }
        };
        let depth = outcomes.iter().map(|o| o.recall_after_walk.len()).max().unwrap_or(0);
        let mut recall_after_walk = Vec::with_capacity(depth);
        let mut queries_reaching_walk = Vec::with_capacity(depth);
        for j in 0..depth {
            let reach: Vec<f64> = outcomes
                .iter()
                .filter(|o| o.recall_after_walk.len() > j)
                .map(|o| o.recall_after_walk[j])
                .collect();
            queries_reaching_walk.push(reach.len());
            recall_after_walk.push((!reach.is_empty()).then(|| reach.iter().sum::<f64>() / reach.len() as f64));
        }
        MethodReport {
            method,
            queries: n,
            mean_recall: mean(&|o| o.recall),
            frac_recall_ge_08: frac(&|o| o.recall >= 0.8),
            frac_recall_eq_1: frac(&|o| o.recall >= 1.0),
            frac_zero_recall: frac(&|o| o.recall == 0.0),
            mean_latency_ms: mean(&|o| o.latency_ms),
            mean_walks: mean(&|o| o.walks as f64),
            frac_one_walk: frac(&|o| o.walks == 1),
            mean_hops: mean(&|o| o.hops as f64),
            recall_after_walk,
            queries_reaching_walk,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub methods: Vec<MethodReport>,
    /// Method whose stalls feed the diagnostics tables.
    pub diagnostics_method: Option<Method>,
    pub bins: Vec<BinRow>,
    pub regimes: Vec<RegimeRow>,
    #[serde(skip)]
    pub stalls: Vec<StallRecord>,
    #[serde(skip)]
    pub outcomes: BTreeMap<Method, Vec<QueryOutcome>>,
}

impl BenchReport {
    pub fn method(&self, m: Method) -> Option<&MethodReport> {
        self.methods.iter().find(|r| r.method == m)
    }

    pub fn outcomes(&self, m: Method) -> &[QueryOutcome] {
        self.outcomes.get(&m).map_or(&[], Vec::as_slice)
    }
}

fn cumulative_recall(walks: &[WalkOutcome], truth: &[u32], k: usize) -> Vec<f64> {
    let mut merged: BTreeMap<u32, f32> = BTreeMap::new();
    walks
        .iter()
        .map(|w| {
            for &(id, sim) in &w.results {
                let e = merged.entry(id).or_insert(sim);
                if sim > *e {
                    *e = sim;
                }
            }
            let ids: Vec<u32> = top_k(merged.iter().map(|(&i, &s)| (i, s)), k)
                .into_iter()
                .map(|p| p.0)
                .collect();
            recall_at_k(&ids, truth, k)
        })
        .collect()
}

fn run_one<G: Neighbors + Sync + ?Sized>(
    method: Method,
    query_id: usize,
    query: &QueryRecord,
    truth: &GroundTruth,
    fiber: &Fiber<'_>,
    ctx: &BenchContext<'_, G>,
) -> Result<QueryOutcome> {
    let start = Instant::now();
    let (ids, walks) = match method {
        Method::PostFilter => (
            post_filter_baseline(
                &query.vector,
                fiber,
                query.k,
                ctx.config.post_filter_multiplier,
                ctx.ds,
                ctx.g,
                ctx.entry,
            ),
            Vec::new(),
        ),
        Method::Guided | Method::Beam => {
            let base = if method == Method::Guided {
                &ctx.config.guided
            } else {
                &ctx.config.beam
            };
            let params = SearchParams {
                k: query.k,
                walk: if method == Method::Guided {
                    crate::search::WalkKind::Guided
                } else {
                    crate::search::WalkKind::Beam
                },
                ..*base
            };
            let res = search_fiber(ctx.ds, ctx.g, ctx.atlas, &query.vector, fiber, &params)?;
            (res.ids(), res.walks)
        }
    };
    let latency_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(QueryOutcome {
        query_id,
        selectivity: fiber.selectivity(),
        recall: recall_at_k(&ids, &truth.ids, query.k),
        walks: walks.len(),
        hops: walks.iter().map(|w| w.expansions).sum(),
        recall_after_walk: cumulative_recall(&walks, &truth.ids, query.k),
        ids,
        latency_ms,
        walk_outcomes: walks,
    })
}

struct BenchContext<'a, G: ?Sized> {
    ds: &'a Dataset,
    g: &'a G,
    atlas: &'a AnchorAtlas,
    config: &'a BenchConfig,
    entry: u32,
}

/// Runs every configured method over the batch. Queries run in parallel;
/// all aggregates are order-independent.
pub fn run_benchmark<G: Neighbors + Sync + ?Sized>(
    ds: &Dataset,
    g: &G,
    atlas: &AnchorAtlas,
    queries: &[QueryRecord],
    truth: &[GroundTruth],
    config: &BenchConfig,
) -> Result<BenchReport> {
    if queries.len() != truth.len() {
        return Err(Error::InvalidParameter(format!(
            "{} queries but {} ground-truth rows",
            queries.len(),
            truth.len()
        )));
    }
    let ctx = BenchContext {
        ds,
        g,
        atlas,
        config,
        entry: if config.methods.contains(&Method::PostFilter) {
            medoid(ds)
        } else {
            0
        },
    };
    let mut outcomes = BTreeMap::new();
    let mut reports = Vec::new();
    for &method in &config.methods {
        let per_query: Vec<Result<QueryOutcome>> = par_map(queries.len(), |i| {
            let fiber = ds.fiber(&queries[i].predicate);
            run_one(method, i, &queries[i], &truth[i], &fiber, &ctx)
        });
        let per_query = per_query.into_iter().collect::<Result<Vec<_>>>()?;
        let refs: Vec<&QueryOutcome> = per_query.iter().collect();
        reports.push(MethodReport::summarize(method, &refs));
        outcomes.insert(method, per_query);
    }

    let diagnostics_method = [Method::Guided, Method::Beam]
        .into_iter()
        .find(|m| outcomes.contains_key(m));
    let mut stalls = Vec::new();
    let mut summaries = Vec::new();
    let mut recalls = Vec::new();
    if let Some(m) = diagnostics_method {
        for o in &outcomes[&m] {
            recalls.push(o.recall);
            summaries.push(QuerySummary {
                query_id: o.query_id,
                selectivity: o.selectivity,
                recall: o.recall,
                hops: o.hops,
                walks: o.walks,
            });
            if o.selectivity > 0.0 {
                stalls.extend(
                    o.walk_outcomes
                        .iter()
                        .filter_map(|w| StallRecord::from_walk(o.query_id, o.selectivity, w)),
                );
            }
        }
    }
    let bins = selectivity_table(&stalls, &summaries, &config.bin_edges)?;
    let regimes = regime_summary(&stalls, Some(&recalls))?;
    Ok(BenchReport {
        methods: reports,
        diagnostics_method,
        bins,
        regimes,
        stalls,
        outcomes,
    })
}

/// Writes report.json, report.csv, stalls.csv, bins.csv and regimes.csv.
/// Only report.json carries latency, so the CSVs are reproducible.
pub fn write_bench_outputs(dir: impl AsRef<Path>, report: &BenchReport) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let json = File::create(dir.join("report.json"))?;
    serde_json::to_writer_pretty(BufWriter::new(json), report)?;

    let mut w = BufWriter::new(File::create(dir.join("report.csv"))?);
    write_report_csv(&mut w, report)?;
    w.flush()?;
    let mut w = BufWriter::new(File::create(dir.join("stalls.csv"))?);
    write_stalls_csv(&mut w, &report.stalls)?;
    w.flush()?;
    let mut w = BufWriter::new(File::create(dir.join("bins.csv"))?);
    write_bins_csv(&mut w, &report.bins)?;
    w.flush()?;
    let mut w = BufWriter::new(File::create(dir.join("regimes.csv"))?);
    write_regimes_csv(&mut w, &report.regimes)?;
    w.flush()?;
    Ok(())
}

pub fn write_report_csv(w: &mut impl Write, report: &BenchReport) -> Result<()> {
    let depth = report
        .methods
        .iter()
        .map(|m| m.recall_after_walk.len())
        .max()
        .unwrap_or(0);
    write!(
        w,
        "method,queries,recall,recall_ge_0.8,recall_eq_1,zero_recall,mean_walks,one_walk,mean_hops"
    )?;
    for j in 1..=depth {
        write!(w, ",after_walk_{j},reaching_walk_{j}")?;
    }
    writeln!(w)?;
    for m in &report.methods {
        write!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            m.method,
            m.queries,
            fmt_f(m.mean_recall),
            fmt_f(m.frac_recall_ge_08),
            fmt_f(m.frac_recall_eq_1),
            fmt_f(m.frac_zero_recall),
            fmt_f(m.mean_walks),
            fmt_f(m.frac_one_walk),
            fmt_f(m.mean_hops)
        )?;
        for j in 0..depth {
            write!(
                w,
                ",{},{}",
                fmt_opt(m.recall_after_walk.get(j).copied().flatten()),
                m.queries_reaching_walk.get(j).copied().unwrap_or(0)
            )?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct TruthLine {
    query_id: usize,
    ids: Vec<u32>,
    sims: Vec<f32>,
}

pub fn write_ground_truth(path: impl AsRef<Path>, truth: &[GroundTruth]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (i, t) in truth.iter().enumerate() {
        let line = TruthLine {
            query_id: i,
            ids: t.ids.clone(),
            sims: t.sims.clone(),
        };
        serde_json::to_writer(&mut w, &line)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads ground truth rows; lines may come in any order but must cover
/// query ids 0..m exactly once.
pub fn read_ground_truth(path: impl AsRef<Path>) -> Result<Vec<GroundTruth>> {
    let r = BufReader::new(File::open(path)?);
    let mut rows: BTreeMap<usize, GroundTruth> = BTreeMap::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: TruthLine = serde_json::from_str(&line)?;
        if t.ids.len() != t.sims.len() {
            return Err(Error::format("ground truth", format!("query {}: ids and sims differ in length", t.query_id)));
        }
        if rows
            .insert(t.query_id, GroundTruth { ids: t.ids, sims: t.sims })
            .is_some()
        {
            return Err(Error::format("ground truth", format!("duplicate query id {}", t.query_id)));
        }
    }
    if rows.keys().enumerate().any(|(i, &q)| i != q) {
        return Err(Error::format("ground truth", "query ids are not contiguous from 0"));
    }
    Ok(rows.into_values().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{FilterPredicate, MetadataRow};
    use crate::graph::ProximityGraph;

    fn ds4() -> Dataset {
        let angles = [0.0f64, 0.3, 0.6, 2.0];
        let v = angles.iter().flat_map(|a| [a.cos() as f32, a.sin() as f32]).collect();
        let tags = ["a", "b", "a", "a"];
        let rows: Vec<MetadataRow> = tags
            .iter()
            .map(|t| [("tag".to_string(), t.to_string())].into_iter().collect())
            .collect();
        Dataset::new(2, v, rows).unwrap()
    }

    #[test]
    fn recall_definition() {
        assert_eq!(recall_at_k(&[1, 2, 3], &[1, 2, 3], 3), 1.0);
        assert_eq!(recall_at_k(&[4, 5], &[1, 2], 2), 0.0);
        assert!((recall_at_k(&[1, 9, 2], &[1, 2, 3], 25) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(recall_at_k(&[], &[], 25), 1.0);
        assert_eq!(recall_at_k(&[1, 1], &[1, 2], 2), 0.5);
    }

    #[test]
    fn brute_force_cases() {
        let ds = ds4();
        let q = [1.0f32, 0.0];
        let a = ds.fiber(&FilterPredicate::eq("tag", "a"));
        assert_eq!(brute_force_topk(&q, &a, 25, &ds).ids, vec![0, 2, 3]);
        let b = ds.fiber(&FilterPredicate::eq("tag", "b"));
        assert_eq!(brute_force_topk(&q, &b, 25, &ds).ids, vec![1]);
        let none = ds.fiber(&FilterPredicate::eq("tag", "z"));
        assert!(brute_force_topk(&q, &none, 25, &ds).ids.is_empty());
    }

    #[test]
    fn post_filter_cases() {
        let ds = ds4();
        let g = ProximityGraph::from_adjacency(vec![vec![1], vec![0, 2], vec![1, 3], vec![2]]).unwrap();
        let q = [1.0f32, 0.0];
        let all = post_filter_baseline(&q, &Everything, 2, 1, &ds, &g, 3);
        assert_eq!(all, vec![0, 1]);
        let b = ds.fiber(&FilterPredicate::eq("tag", "b"));
        // only the top 1 unfiltered candidate is kept, and it is not a "b"
        assert!(post_filter_baseline(&q, &b, 1, 1, &ds, &g, 3).is_empty());
        assert_eq!(post_filter_baseline(&q, &b, 1, 2, &ds, &g, 3), vec![1]);
    }

    #[test]
    fn summaries() {
        let hit = QueryOutcome {
            query_id: 0,
            selectivity: 0.5,
            ids: vec![1],
            recall: 1.0,
            walks: 1,
            hops: 4,
            recall_after_walk: vec![1.0],
            latency_ms: 0.0,
            walk_outcomes: vec![],
        };
        let miss = QueryOutcome {
            query_id: 1,
            recall: 0.0,
            walks: 2,
            recall_after_walk: vec![0.0, 0.0],
            ..hit.clone()
        };
        let r = MethodReport::summarize(Method::Guided, &[&hit]);
        assert_eq!((r.mean_recall, r.frac_zero_recall), (1.0, 0.0));
        let r = MethodReport::summarize(Method::Guided, &[&miss]);
        assert_eq!((r.mean_recall, r.frac_zero_recall), (0.0, 1.0));
        let r = MethodReport::summarize(Method::Guided, &[&hit, &miss]);
        assert_eq!(r.recall_after_walk, vec![Some(0.5), Some(0.0)]);
        assert_eq!(r.queries_reaching_walk, vec![2, 1]);
        assert_eq!(r.frac_one_walk, 0.5);
    }

    #[test]
    fn truth_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("gt.jsonl");
        let rows = vec![
            GroundTruth { ids: vec![3, 1], sims: vec![0.9, 0.5] },
            GroundTruth::default(),
        ];
        write_ground_truth(&p, &rows).unwrap();
        assert_eq!(read_ground_truth(&p).unwrap(), rows);
        fs::write(&p, "{\"query_id\":1,\"ids\":[],\"sims\":[]}\n").unwrap();
        assert!(read_ground_truth(&p).is_err());
    }
}
