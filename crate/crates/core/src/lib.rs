//! Filtered approximate nearest neighbor search over proximity graphs.
//!
//! A query is a unit vector plus a metadata predicate; the answer is the
//! approximate top-k among points satisfying the predicate. The pieces:
//!
//! - [`dataset`]: vectors, categorical metadata, predicates and file formats.
//! - [`graph`]: the α-kNN proximity graph and the `FGRA` adjacency format.
//! - [`atlas`]: k-means clusters with per-cluster member lists and an
//!   inverted (field, value) → clusters index used to pick restart seeds.
//! - [`signals`]: potential, fiber density, drift, boundary-improving set.
//! - [`search`]: the outer restart loop with beam and drift-guided walks.
//! - [`diagnostics`]: stall records, regime classification and report tables.
//! - [`eval`]: brute-force ground truth, recall, baselines, benchmark runner.
//! - [`synthetic`]: Gaussian-mixture benchmark generator.

pub mod atlas;
pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod eval;
pub mod graph;
pub mod kmeans;
pub mod search;
pub mod seed;
pub mod signals;
pub mod synthetic;

pub use atlas::{AnchorAtlas, AnchorParams, AnchorSelection};
pub use dataset::{Dataset, Everything, Fiber, FilterPredicate, Membership, MetadataRow, QueryRecord};
pub use diagnostics::{Regime, StallRecord};
pub use error::{Error, Result};
pub use graph::{GraphBuildParams, Neighbors, ProximityGraph};
pub use search::{filtered_search, QueryResult, SearchParams, Termination, WalkKind, WalkOutcome};

/// Maps `f` over `0..n`, in parallel when the `parallel` feature is on.
/// Output order always follows the index.
pub(crate) fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}
