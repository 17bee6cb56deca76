//! Browser explorer for filtered graph walks on the 2-sphere.
//!
//! Points live on S², are drawn with an azimuthal equidistant projection
//! about the north pole, and carry one categorical field, `colour`, that is
//! correlated with position. Clicking the disk issues a filtered query from
//! the clicked direction and returns every walk's trail for drawing.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use fiberann::atlas::{build_atlas, default_cluster_count};
use fiberann::eval::{brute_force_topk, recall_at_k};
use fiberann::search::search_fiber;
use fiberann::signals::fiber_density;
use fiberann::synthetic::{gen_synthetic, FieldSpec, SyntheticSpec};
use fiberann::{
    seed, AnchorAtlas, AnchorParams, Dataset, FilterPredicate, GraphBuildParams, ProximityGraph, SearchParams,
    WalkKind,
};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const FIELD: &str = "colour";

/// Unit vector to disk coordinates in [-1, 1]².
pub fn project(v: &[f32]) -> [f64; 2] {
    let (x, y, z) = (f64::from(v[0]), f64::from(v[1]), f64::from(v[2]));
    let r = z.clamp(-1.0, 1.0).acos() / PI;
    let phi = y.atan2(x);
    [r * phi.cos(), r * phi.sin()]
}

/// Inverse of [`project`]; `None` outside the unit disk.
pub fn unproject(px: f64, py: f64) -> Option<[f32; 3]> {
    let r = px.hypot(py);
    if !r.is_finite() || r > 1.0 {
        return None;
    }
    let theta = r * PI;
    let phi = py.atan2(px);
    Some([
        (theta.sin() * phi.cos()) as f32,
        (theta.sin() * phi.sin()) as f32,
        theta.cos() as f32,
    ])
}

#[derive(Serialize)]
struct Points<'a> {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Value index into `colours`, -1 when unset.
    colour: Vec<i32>,
    colours: &'a [String],
}

#[derive(Serialize)]
struct Trail {
    seeds: Vec<u32>,
    /// (x, y, phase) per expansion.
    path: Vec<(f64, f64, u8)>,
    termination: String,
    expansions: usize,
}

#[derive(Serialize)]
struct SearchView {
    query: [f64; 2],
    ids: Vec<u32>,
    truth: Vec<u32>,
    recall: f64,
    fiber_size: usize,
    walks: Vec<Trail>,
}

#[wasm_bindgen]
pub struct Explorer {
    ds: Dataset,
    graph: ProximityGraph,
    atlas: AnchorAtlas,
    seed: u64,
}

#[wasm_bindgen]
impl Explorer {
    /// Generates `n` points and builds the graph and atlas.
    #[wasm_bindgen(constructor)]
    pub fn new(n: usize, seed: u32) -> Result<Explorer, String> {
        let seed = u64::from(seed);
        let spec = SyntheticSpec {
            n,
            dim: 3,
            components: 10,
            spread: 0.35,
            fields: vec![FieldSpec {
                purity: 0.9,
                ..FieldSpec::new(FIELD, 8, 0.6)
            }],
            queries_per_bin: 0,
            k: 10,
            bin_edges: Vec::new(),
            seed,
        };
        let ds = gen_synthetic(&spec).map_err(|e| e.to_string())?.dataset;
        let params = GraphBuildParams {
            k: 8.min(n.saturating_sub(1)),
            max_degree: 16,
            alpha: 1.2,
        };
        let graph = fiberann::graph::build_graph(&ds, &params).map_err(|e| e.to_string())?;
        let atlas = build_atlas(&ds, default_cluster_count(n), seed::derive(seed, "atlas"), 30)
            .map_err(|e| e.to_string())?;
        Ok(Explorer { ds, graph, atlas, seed })
    }

    pub fn len(&self) -> usize {
        self.ds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ds.is_empty()
    }

    /// Projected positions and colour labels as JSON.
    pub fn points(&self) -> String {
        let f = self.ds.field_id(FIELD);
        let (mut x, mut y, mut colour) = (Vec::new(), Vec::new(), Vec::new());
        for i in 0..self.ds.len() as u32 {
            let [px, py] = project(self.ds.vector(i));
            x.push(px);
            y.push(py);
            colour.push(f.and_then(|f| self.ds.value_of(f, i)).map_or(-1, |v| v as i32));
        }
        let colours = f.map_or(&[][..], |f| self.ds.vocabulary(f));
        serde_json::to_string(&Points { x, y, colour, colours }).unwrap_or_default()
    }

    /// Filtered search from the clicked disk position. `colours` is a comma
    /// separated list of allowed values; `walk` is `guided` or `beam`.
    pub fn search(&self, px: f64, py: f64, colours: &str, walk: &str, k: usize) -> Result<String, String> {
        let q = unproject(px, py).ok_or("click inside the disk")?;
        let walk: WalkKind = walk.parse().map_err(|e: fiberann::Error| e.to_string())?;
        let predicate = self.predicate(colours)?;
        let mut params = match walk {
            WalkKind::Guided => SearchParams::guided(),
            WalkKind::Beam => SearchParams::beam(),
        };
        params.k = k.max(1);
        params.anchor = AnchorParams {
            rng_seed: seed::derive(self.seed, "anchor"),
            ..AnchorParams::default()
        };
        let fiber = self.ds.fiber(&predicate);
        let res = search_fiber(&self.ds, &self.graph, &self.atlas, &q, &fiber, &params).map_err(|e| e.to_string())?;
        let truth = brute_force_topk(&q, &fiber, params.k, &self.ds).ids;
        let ids = res.ids();
        let walks = res
            .walks
            .iter()
            .map(|w| Trail {
                seeds: w.seeds.clone(),
                path: w
                    .path
                    .iter()
                    .map(|&(x, phase)| {
                        let [a, b] = project(self.ds.vector(x));
                        (a, b, phase)
                    })
                    .collect(),
                termination: w.termination.to_string(),
                expansions: w.expansions,
            })
            .collect();
        let view = SearchView {
            query: [px, py],
            recall: recall_at_k(&ids, &truth, params.k),
            fiber_size: fiber.count(),
            ids,
            truth,
            walks,
        };
        serde_json::to_string(&view).map_err(|e| e.to_string())
    }

    /// Fiber density of every point for the given colours, as a JSON array.
    pub fn density(&self, colours: &str) -> Result<String, String> {
        let predicate = self.predicate(colours)?;
        let fiber = self.ds.fiber(&predicate);
        let rho: Vec<f64> = (0..self.ds.len() as u32)
            .map(|x| fiber_density(&self.graph, &fiber, x))
            .collect();
        serde_json::to_string(&rho).map_err(|e| e.to_string())
    }
}

impl Explorer {
    fn predicate(&self, colours: &str) -> Result<FilterPredicate, String> {
        let values: BTreeSet<String> = colours
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect();
        if values.is_empty() {
            return Err("pick at least one colour".into());
        }
        FilterPredicate::new(BTreeMap::from([(FIELD.to_string(), values)])).map_err(|e| e.to_string())
    }

    pub fn dataset(&self) -> &Dataset {
        &self.ds
    }
}
