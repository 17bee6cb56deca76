//! α-kNN proximity graph: exact directed kNN, symmetrization, then
//! α-RNG pruning applied only to over-degree nodes.
//!
//! Any graph can be used by the search walks through [`Neighbors`]; graphs
//! built elsewhere (e.g. an HNSW base layer) come in through the `FGRA` file.

use std::cmp::Ordering;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::dataset::{dot, Dataset};
use crate::error::{Error, Result};
use crate::par_map;

const GRAPH_MAGIC: &[u8; 4] = b"FGRA";

/// The neighbor-list interface the walks are written against.
pub trait Neighbors {
    fn node_count(&self) -> usize;
    fn neighbors(&self, x: u32) -> &[u32];
}

/// Immutable adjacency lists in compressed row form.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ProximityGraph {
    offsets: Vec<usize>,
    targets: Vec<u32>,
}

impl ProximityGraph {
    /// Validates and packs adjacency lists: ids in range, no self-loops, no
    /// duplicates. List order is preserved.
    pub fn from_adjacency(lists: Vec<Vec<u32>>) -> Result<Self> {
        let n = lists.len();
        for (node, list) in lists.iter().enumerate() {
            let mut sorted = list.clone();
            sorted.sort_unstable();
            if let Some(&bad) = sorted.iter().find(|&&j| j as usize >= n) {
                return Err(Error::NodeOutOfRange { id: bad as usize, n });
            }
            if sorted.binary_search(&(node as u32)).is_ok() {
                return Err(Error::InvalidAdjacency {
                    node,
                    reason: "self-loop".into(),
                });
            }
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidAdjacency {
                    node,
                    reason: "duplicate neighbor".into(),
                });
            }
        }
        Ok(Self::pack(lists))
    }

    fn pack(lists: Vec<Vec<u32>>) -> Self {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        offsets.push(0);
        let mut targets = Vec::with_capacity(lists.iter().map(Vec::len).sum());
        for list in lists {
            targets.extend_from_slice(&list);
            offsets.push(targets.len());
        }
        ProximityGraph { offsets, targets }
    }

    pub fn len(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn neighbors(&self, x: u32) -> &[u32] {
        let x = x as usize;
        &self.targets[self.offsets[x]..self.offsets[x + 1]]
    }

    pub fn try_neighbors(&self, x: u32) -> Result<&[u32]> {
        if (x as usize) < self.len() {
            Ok(self.neighbors(x))
        } else {
            Err(Error::NodeOutOfRange {
                id: x as usize,
                n: self.len(),
            })
        }
    }

    pub fn degree(&self, x: u32) -> usize {
        self.neighbors(x).len()
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }

    pub fn adjacency(&self) -> Vec<Vec<u32>> {
        (0..self.len() as u32)
            .map(|x| self.neighbors(x).to_vec())
            .collect()
    }

    pub fn stats(&self) -> GraphStats {
        let degrees = (0..self.len() as u32).map(|x| self.degree(x));
        let edges = self.edge_count();
        GraphStats {
            nodes: self.len(),
            edges,
            mean_degree: if self.is_empty() {
                0.0
            } else {
                edges as f64 / self.len() as f64
            },
            min_degree: degrees.clone().min().unwrap_or(0),
            max_degree: degrees.max().unwrap_or(0),
            memory_bytes: edges * std::mem::size_of::<u32>(),
        }
    }
}

impl Neighbors for ProximityGraph {
    fn node_count(&self) -> usize {
        self.len()
    }

    #[inline]
    fn neighbors(&self, x: u32) -> &[u32] {
        ProximityGraph::neighbors(self, x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphStats {
    pub nodes: usize,
    pub edges: usize,
    pub mean_degree: f64,
    pub min_degree: usize,
    pub max_degree: usize,
    /// Neighbor-id payload, 4 bytes per directed edge.
    pub memory_bytes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphBuildParams {
    pub k: usize,
    pub max_degree: usize,
    pub alpha: f64,
}

impl Default for GraphBuildParams {
    fn default() -> Self {
        GraphBuildParams {
            k: 64,
            max_degree: 128,
            alpha: 1.2,
        }
    }
}

impl GraphBuildParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter("graph k must be at least 1".into()));
        }
        if self.max_degree < self.k {
            return Err(Error::InvalidParameter(format!(
                "max degree {} is below k {}",
                self.max_degree, self.k
            )));
        }
        if self.alpha.is_nan() || self.alpha <= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "alpha must exceed 1, got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Orders by similarity descending, then id ascending.
#[inline]
fn by_similarity(a: &(f32, u32), b: &(f32, u32)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// Exact directed kNN under cosine similarity. Every node gets exactly `k`
/// out-edges; ties go to the lower id. Lists are stored sorted by id.
pub fn build_knn(ds: &Dataset, k: usize) -> Result<ProximityGraph> {
    let n = ds.len();
    if k == 0 || k >= n {
        return Err(Error::InvalidParameter(format!(
            "kNN degree {k} must be in 1..{n}"
        )));
    }
    let lists = par_map(n, |i| {
        let xi = ds.vector(i as u32);
        let mut cand: Vec<(f32, u32)> = (0..n as u32)
            .filter(|&j| j as usize != i)
            .map(|j| (dot(xi, ds.vector(j)), j))
            .collect();
        cand.select_nth_unstable_by(k - 1, by_similarity);
        let mut ids: Vec<u32> = cand[..k].iter().map(|&(_, j)| j).collect();
        ids.sort_unstable();
        ids
    });
    Ok(ProximityGraph::pack(lists))
}

/// Adds every missing reverse edge.
pub fn symmetrize(g: &ProximityGraph) -> ProximityGraph {
    let n = g.len();
    let mut lists: Vec<Vec<u32>> = g.adjacency();
    for i in 0..n as u32 {
        for &j in g.neighbors(i) {
            lists[j as usize].push(i);
        }
    }
    for list in &mut lists {
        list.sort_unstable();
        list.dedup();
    }
    ProximityGraph::pack(lists)
}

/// Selective α-RNG pruning under cosine distance `1 − cos`.
pub fn alpha_prune(
    g: &ProximityGraph,
    ds: &Dataset,
    max_degree: usize,
    alpha: f64,
) -> Result<ProximityGraph> {
    if ds.len() != g.len() {
        return Err(Error::InvalidParameter(format!(
            "graph has {} nodes but dataset has {} points",
            g.len(),
            ds.len()
        )));
    }
    alpha_prune_with(g, max_degree, alpha, |a, b| {
        1.0 - f64::from(dot(ds.vector(a), ds.vector(b)))
    })
}

/// [`alpha_prune`] with an arbitrary distance. Nodes with degree at most
/// `max_degree` keep their list verbatim.
pub fn alpha_prune_with<D>(
    g: &ProximityGraph,
    max_degree: usize,
    alpha: f64,
    distance: D,
) -> Result<ProximityGraph>
where
    D: Fn(u32, u32) -> f64 + Sync,
{
    if alpha.is_nan() || alpha <= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "alpha must exceed 1, got {alpha}"
        )));
    }
    let lists = par_map(g.len(), |i| {
        let list = g.neighbors(i as u32);
        if list.len() <= max_degree {
            return list.to_vec();
        }
        let node = i as u32;
        let mut cand: Vec<(f64, u32)> = list.iter().map(|&p| (distance(node, p), p)).collect();
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut kept: Vec<u32> = Vec::with_capacity(max_degree);
        for &(d_ip, p) in &cand {
            if kept.iter().all(|&q| d_ip < alpha * distance(q, p)) {
                kept.push(p);
            }
            if kept.len() >= max_degree {
                break;
            }
        }
        kept.sort_unstable();
        kept
    });
    Ok(ProximityGraph::pack(lists))
}

/// Full three-stage construction.
pub fn build_graph(ds: &Dataset, params: &GraphBuildParams) -> Result<ProximityGraph> {
    params.validate()?;
    let knn = build_knn(ds, params.k)?;
    let sym = symmetrize(&knn);
    alpha_prune(&sym, ds, params.max_degree, params.alpha)
}

pub fn export_graph(g: &ProximityGraph, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_graph(g, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_graph(g: &ProximityGraph, w: &mut impl Write) -> Result<()> {
    w.write_all(GRAPH_MAGIC)?;
    w.write_all(&(g.len() as u32).to_le_bytes())?;
    for x in 0..g.len() as u32 {
        let list = g.neighbors(x);
        w.write_all(&(list.len() as u32).to_le_bytes())?;
        for &j in list {
            w.write_all(&j.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn import_graph(path: impl AsRef<Path>) -> Result<ProximityGraph> {
    read_graph(BufReader::new(File::open(path)?))
}

pub fn read_graph(mut r: impl Read) -> Result<ProximityGraph> {
    let mut word = [0u8; 4];
    let mut next = |r: &mut dyn Read, what: &str| -> Result<u32> {
        r.read_exact(&mut word)
            .map_err(|_| Error::format("FGRA", format!("truncated {what}")))?;
        Ok(u32::from_le_bytes(word))
    };
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::format("FGRA", "truncated header"))?;
    if &magic != GRAPH_MAGIC {
        return Err(Error::format("FGRA", "bad magic"));
    }
    let n = next(&mut r, "header")? as usize;
    let mut lists = Vec::with_capacity(n.min(1 << 24));
    for _ in 0..n {
        let deg = next(&mut r, "degree")? as usize;
        let mut list = Vec::with_capacity(deg.min(1 << 16));
        for _ in 0..deg {
            list.push(next(&mut r, "neighbor list")?);
        }
        lists.push(list);
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::format("FGRA", "trailing bytes after adjacency"));
    }
    ProximityGraph::from_adjacency(lists)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::MetadataRow;

    fn circle(angles: &[f64]) -> Dataset {
        let v: Vec<f32> = angles
            .iter()
            .flat_map(|a| [a.cos() as f32, a.sin() as f32])
            .collect();
        Dataset::new(2, v, vec![MetadataRow::new(); angles.len()]).unwrap()
    }

    #[test]
    fn knn_on_collinear_arc() {
        // angles 0, 0.1, 0.3: nearest of 0 is 1, of 1 is 0, of 2 is 1
        let ds = circle(&[0.0, 0.1, 0.3]);
        let g = build_knn(&ds, 1).unwrap();
        assert_eq!(g.adjacency(), vec![vec![1], vec![0], vec![1]]);
    }

    #[test]
    fn knn_complete_when_k_is_n_minus_one() {
        let ds = circle(&[0.0, 1.0, 2.0, 3.0]);
        let g = build_knn(&ds, 3).unwrap();
        for x in 0..4u32 {
            let expect: Vec<u32> = (0..4).filter(|&j| j != x).collect();
            assert_eq!(g.neighbors(x), expect.as_slice());
        }
        assert!(build_knn(&ds, 4).is_err());
        assert!(build_knn(&ds, 0).is_err());
    }

    #[test]
    fn knn_duplicates_link_each_other() {
        let angles = [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 2.0];
        let ds = circle(&angles);
        let g = build_knn(&ds, 1).unwrap();
        assert_eq!(g.neighbors(4), &[7]);
        assert_eq!(g.neighbors(7), &[4]);
    }

    #[test]
    fn symmetrize_cases() {
        let g = ProximityGraph::from_adjacency(vec![vec![1], vec![]]).unwrap();
        assert_eq!(symmetrize(&g).adjacency(), vec![vec![1], vec![0]]);
        let sym = ProximityGraph::from_adjacency(vec![vec![1, 2], vec![0], vec![0]]).unwrap();
        assert_eq!(symmetrize(&sym), sym);
        let star = ProximityGraph::from_adjacency(vec![vec![], vec![0], vec![0], vec![0], vec![0]])
            .unwrap();
        assert_eq!(symmetrize(&star).degree(0), 4);
    }

    fn line_prune(pos: &[f64], lists: Vec<Vec<u32>>, r: usize, alpha: f64) -> Vec<Vec<u32>> {
        let g = ProximityGraph::from_adjacency(lists).unwrap();
        alpha_prune_with(&g, r, alpha, |a, b| (pos[a as usize] - pos[b as usize]).abs())
            .unwrap()
            .adjacency()
    }

    #[test]
    fn prune_hand_executed() {
        // node 0 at 0; neighbors at 0.1, 0.11, 0.5. kept={0.1}; 0.11 fails
        // 0.11 < 1.2*0.01; 0.5 fails 0.5 < 1.2*0.4.
        let pos = [0.0, 0.1, 0.11, 0.5];
        let out = line_prune(&pos, vec![vec![1, 2, 3], vec![], vec![], vec![]], 2, 1.2);
        assert_eq!(out[0], vec![1]);
        // mirrored far neighbor survives: 0.5 < 1.2*0.6
        let pos = [0.0, 0.1, 0.11, -0.5];
        let out = line_prune(&pos, vec![vec![1, 2, 3], vec![], vec![], vec![]], 2, 1.2);
        assert_eq!(out[0], vec![1, 3]);
    }

    #[test]
    fn prune_leaves_small_lists() {
        let pos = [0.0, 0.1, 0.11];
        let out = line_prune(&pos, vec![vec![2, 1], vec![], vec![]], 2, 1.2);
        assert_eq!(out[0], vec![2, 1]);
        let g = ProximityGraph::from_adjacency(vec![vec![1], vec![]]).unwrap();
        assert!(alpha_prune_with(&g, 1, 1.0, |_, _| 1.0).is_err());
    }

    #[test]
    fn prune_nearest_always_kept() {
        let pos = [0.0, 0.3, 0.2, 0.9, 0.25];
        let out = line_prune(&pos, vec![vec![1, 2, 3, 4], vec![], vec![], vec![], vec![]], 1, 1.5);
        assert_eq!(out[0], vec![2]);
    }

    #[test]
    fn neighbors_out_of_range() {
        let g = ProximityGraph::from_adjacency(vec![vec![], vec![0]]).unwrap();
        assert!(g.try_neighbors(0).unwrap().is_empty());
        assert!(matches!(g.try_neighbors(2), Err(Error::NodeOutOfRange { id: 2, n: 2 })));
    }

    #[test]
    fn rejects_invalid_adjacency() {
        assert!(matches!(
            ProximityGraph::from_adjacency(vec![vec![0]]),
            Err(Error::InvalidAdjacency { .. })
        ));
        assert!(matches!(
            ProximityGraph::from_adjacency(vec![vec![1, 1], vec![]]),
            Err(Error::InvalidAdjacency { .. })
        ));
        assert!(matches!(
            ProximityGraph::from_adjacency(vec![vec![2], vec![]]),
            Err(Error::NodeOutOfRange { id: 2, n: 2 })
        ));
    }

    #[test]
    fn fgra_round_trip_and_errors() {
        let g = ProximityGraph::from_adjacency(vec![
            vec![1, 4],
            vec![0],
            vec![],
            vec![4, 0, 1],
            vec![3],
        ])
        .unwrap();
        let mut buf = Vec::new();
        write_graph(&g, &mut buf).unwrap();
        assert_eq!(read_graph(buf.as_slice()).unwrap(), g);

        let mut empty = Vec::new();
        write_graph(&ProximityGraph::from_adjacency(vec![]).unwrap(), &mut empty).unwrap();
        assert!(read_graph(empty.as_slice()).unwrap().is_empty());

        let mut bad = b"FGRA".to_vec();
        bad.extend(1u32.to_le_bytes());
        bad.extend(1u32.to_le_bytes());
        bad.extend(1u32.to_le_bytes());
        assert!(matches!(read_graph(bad.as_slice()), Err(Error::NodeOutOfRange { .. })));

        assert!(matches!(read_graph(&buf[..buf.len() - 2]), Err(Error::Format { .. })));
        let mut magic = buf.clone();
        magic[3] = b'X';
        assert!(matches!(read_graph(magic.as_slice()), Err(Error::Format { .. })));
    }

    #[test]
    fn stats_from_adjacency() {
        let g = ProximityGraph::from_adjacency(vec![vec![1, 2], vec![0], vec![0]]).unwrap();
        let s = g.stats();
        assert_eq!((s.nodes, s.edges, s.min_degree, s.max_degree), (3, 4, 1, 2));
        assert!((s.mean_degree - 4.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.memory_bytes, 16);
    }
}
