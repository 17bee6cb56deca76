use std::fs;
use std::io::Write;

use anyhow::{bail, Context, Result};
use fiberann::atlas::{build_atlas as build, default_cluster_count, load_atlas, save_atlas};
use fiberann::dataset::{load_dataset, read_queries, save_dataset, write_queries};
use fiberann::eval::{
    brute_force_topk, read_ground_truth, run_benchmark, write_bench_outputs, write_ground_truth, BenchConfig,
    GroundTruth, Method,
};
use fiberann::graph::{build_graph as build_g, export_graph, import_graph};
use fiberann::search::search_fiber;
use fiberann::synthetic::{gen_synthetic as generate, SyntheticSpec};
use fiberann::{
    seed, AnchorAtlas, AnchorParams, Dataset, GraphBuildParams, ProximityGraph, QueryRecord, SearchParams, Termination,
    WalkKind,
};
use serde::Serialize;

use crate::config::Config;

fn dataset(cfg: &Config) -> Result<Dataset> {
    let v = cfg.require(&cfg.vectors, "vectors")?;
    let m = cfg.require(&cfg.metadata, "metadata")?;
    load_dataset(v, m).with_context(|| format!("loading {}", v.display()))
}

fn graph(cfg: &Config, ds: &Dataset) -> Result<ProximityGraph> {
    let p = cfg.require(&cfg.graph, "graph")?;
    let g = import_graph(p).with_context(|| format!("loading {}", p.display()))?;
    if g.len() != ds.len() {
        bail!("graph has {} nodes for {} points", g.len(), ds.len());
    }
    Ok(g)
}

fn atlas(cfg: &Config, ds: &Dataset) -> Result<AnchorAtlas> {
    let p = cfg.require(&cfg.atlas, "atlas")?;
    load_atlas(p, ds).with_context(|| format!("loading {}", p.display()))
}

pub fn graph_params(cfg: &Config) -> GraphBuildParams {
    GraphBuildParams {
        k: cfg.graph_k,
        max_degree: cfg.max_degree,
        alpha: cfg.alpha,
    }
}

pub fn search_params(cfg: &Config, walk: WalkKind) -> SearchParams {
    SearchParams {
        k: 1,
        jumps: cfg.jumps,
        walk,
        beam_width: match walk {
            WalkKind::Beam => cfg.beam_width,
            WalkKind::Guided => cfg.guided_beam_width,
        },
        frontier_width: cfg.frontier_width,
        stall_budget: cfg.stall_budget,
        max_hops: cfg.max_hops,
        anchor: AnchorParams {
            seed_budget: cfg.seed_budget,
            cluster_budget: cfg.cluster_budget,
            rng_seed: seed::derive(cfg.seed, "anchor"),
        },
    }
}

pub fn build_graph(cfg: &Config, out: &mut impl Write) -> Result<()> {
    let ds = dataset(cfg)?;
    let path = cfg.require(&cfg.graph, "graph")?;
    let g = build_g(&ds, &graph_params(cfg))?;
    export_graph(&g, path).with_context(|| format!("writing {}", path.display()))?;
    let s = g.stats();
    writeln!(
        out,
        "nodes={} edges={} mean_degree={:.3} min_degree={} max_degree={} memory_bytes={}",
        s.nodes, s.edges, s.mean_degree, s.min_degree, s.max_degree, s.memory_bytes
    )?;
    Ok(())
}

pub fn build_atlas(cfg: &Config, out: &mut impl Write) -> Result<()> {
    let ds = dataset(cfg)?;
    let path = cfg.require(&cfg.atlas, "atlas")?;
    let k = if cfg.clusters == 0 {
        default_cluster_count(ds.len())
    } else {
        cfg.clusters
    };
    let a = build(&ds, k, seed::derive(cfg.seed, "atlas"), cfg.kmeans_iters)?;
    save_atlas(&a, path).with_context(|| format!("writing {}", path.display()))?;
    let populated: usize = (0..ds.len() as u32).map(|i| ds.populated_fields(i)).sum();
    let bound = if a.member_entries() == populated { "ok" } else { "violated" };
    writeln!(
        out,
        "clusters={} member_entries={} populated_fields={} index_entries={} bound={bound}",
        a.cluster_count(),
        a.member_entries(),
        populated,
        a.index_entries()
    )?;
    Ok(())
}

#[derive(Serialize)]
struct WalkLine {
    seeds: Vec<u32>,
    used_clusters: Vec<u32>,
    expansions: usize,
    phase_hops: (usize, usize),
    termination: Termination,
}

#[derive(Serialize)]
struct QueryLine {
    query_id: usize,
    ids: Vec<u32>,
    sims: Vec<f32>,
    walks_used: usize,
    walks: Vec<WalkLine>,
}

pub fn query(cfg: &Config, json: Option<&str>, out: &mut impl Write) -> Result<()> {
    let queries: Vec<QueryRecord> = match json {
        Some(text) => vec![serde_json::from_str(text).context("parsing query")?],
        None => {
            let p = cfg.require(&cfg.queries, "queries")?;
            read_queries(p).with_context(|| format!("reading {}", p.display()))?
        }
    };
    let ds = dataset(cfg)?;
    let g = graph(cfg, &ds)?;
    let a = atlas(cfg, &ds)?;
    let base = search_params(cfg, cfg.walk);
    for (i, q) in queries.iter().enumerate() {
        let params = SearchParams { k: q.k, ..base };
        let res = search_fiber(&ds, &g, &a, &q.vector, &ds.fiber(&q.predicate), &params)
            .with_context(|| format!("query {i}"))?;
        let line = QueryLine {
            query_id: i,
            ids: res.ids(),
            sims: res.top_k.iter().map(|p| p.1).collect(),
            walks_used: res.walks_used,
            walks: res
                .walks
                .into_iter()
                .map(|w| WalkLine {
                    seeds: w.seeds,
                    used_clusters: w.used_clusters,
                    expansions: w.expansions,
                    phase_hops: w.phase_hops,
                    termination: w.termination,
                })
                .collect(),
        };
        serde_json::to_writer(&mut *out, &line)?;
        writeln!(out)?;
    }
    Ok(())
}

pub fn bench_config(cfg: &Config, diagnose: bool) -> BenchConfig {
    let mut guided = search_params(cfg, WalkKind::Guided);
    let mut beam = search_params(cfg, WalkKind::Beam);
    let methods = if diagnose {
        let p = match cfg.walk {
            WalkKind::Guided => &mut guided,
            WalkKind::Beam => &mut beam,
        };
        p.beam_width = cfg.diag_beam_width;
        p.max_hops = cfg.diag_max_hops;
        vec![match cfg.walk {
            WalkKind::Guided => Method::Guided,
            WalkKind::Beam => Method::Beam,
        }]
    } else {
        cfg.methods.0.clone()
    };
    BenchConfig {
        methods,
        guided,
        beam,
        post_filter_multiplier: cfg.post_filter_multiplier,
        bin_edges: cfg.bin_edges.0.clone(),
    }
}

pub fn bench(cfg: &Config, diagnose: bool, out: &mut impl Write) -> Result<()> {
    let dir = cfg.require(&cfg.out, "out")?;
    let qp = cfg.require(&cfg.queries, "queries")?;
    let queries = read_queries(qp).with_context(|| format!("reading {}", qp.display()))?;
    let ds = dataset(cfg)?;
    let g = graph(cfg, &ds)?;
    let a = atlas(cfg, &ds)?;
    let truth: Vec<GroundTruth> = if cfg.ground_truth.as_os_str().is_empty() {
        queries
            .iter()
            .map(|q| brute_force_topk(&q.vector, &ds.fiber(&q.predicate), q.k, &ds))
            .collect()
    } else {
        read_ground_truth(&cfg.ground_truth)
            .with_context(|| format!("reading {}", cfg.ground_truth.display()))?
    };
    let report = run_benchmark(&ds, &g, &a, &queries, &truth, &bench_config(cfg, diagnose))?;
    write_bench_outputs(dir, &report).with_context(|| format!("writing {}", dir.display()))?;
    for m in &report.methods {
        writeln!(
            out,
            "method={} queries={} recall={:.4} mean_walks={:.3} mean_hops={:.1} latency_ms={:.3}",
            m.method, m.queries, m.mean_recall, m.mean_walks, m.mean_hops, m.mean_latency_ms
        )?;
    }
    writeln!(out, "stalls={} written to {}", report.stalls.len(), dir.display())?;
    Ok(())
}

pub fn synthetic_spec(cfg: &Config) -> SyntheticSpec {
    SyntheticSpec {
        n: cfg.synth_n,
        dim: cfg.synth_dim,
        components: cfg.synth_components,
        spread: cfg.synth_spread,
        queries_per_bin: cfg.synth_queries_per_bin,
        k: cfg.synth_k,
        bin_edges: cfg.bin_edges.0.clone(),
        ..SyntheticSpec::benchmark(cfg.seed)
    }
}

pub fn gen_synthetic(cfg: &Config, out: &mut impl Write) -> Result<()> {
    let dir = cfg.require(&cfg.out, "out")?;
    let bench = generate(&synthetic_spec(cfg))?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    save_dataset(&bench.dataset, dir.join("vectors.fann"), dir.join("metadata.jsonl"))?;
    write_queries(dir.join("queries.jsonl"), &bench.queries)?;
    write_ground_truth(dir.join("truth.jsonl"), &bench.truth)?;
    writeln!(
        out,
        "points={} dim={} queries={} written to {}",
        bench.dataset.len(),
        bench.dataset.dim(),
        bench.queries.len(),
        dir.display()
    )?;
    Ok(())
}
