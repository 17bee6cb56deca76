//! Vector store, categorical metadata and filter predicates.
//!
//! Vectors are held as a flat row-major `f32` buffer and are unit-normalized
//! on construction, so cosine similarity is a plain dot product. Metadata is
//! interned per field: each field owns a vocabulary and a column of value ids.

mod io;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{
    load_dataset, read_metadata, read_queries, read_vectors, save_dataset, write_metadata,
    write_queries, write_vectors,
};

/// Metadata for one point: field name to value.
pub type MetadataRow = BTreeMap<String, String>;

const MISSING: u32 = u32::MAX;

/// Normalizes `v` to unit L2 norm in place.
///
/// Vectors whose norm is already within a few ulps of 1 are left untouched,
/// which makes the operation idempotent bit-for-bit. Returns `false` for a
/// zero (or non-finite) vector.
pub fn normalize(v: &mut [f32]) -> bool {
    let norm = v
        .iter()
        .map(|&x| f64::from(x) * f64::from(x))
        .sum::<f64>()
        .sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return false;
    }
    if (norm - 1.0).abs() <= 2e-7 {
        return true;
    }
    for x in v.iter_mut() {
        *x = (f64::from(*x) / norm) as f32;
    }
    true
}

#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f32; 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (x, y) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut tail = 0.0f32;
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

#[derive(Debug, Clone, Default)]
struct Vocabulary {
    values: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    fn intern(&mut self, value: &str) -> u32 {
        if let Some(&id) = self.index.get(value) {
            return id;
        }
        let id = self.values.len() as u32;
        self.values.push(value.to_owned());
        self.index.insert(value.to_owned(), id);
        id
    }
}

/// An immutable set of unit vectors with per-point categorical metadata.
#[derive(Debug, Clone)]
pub struct Dataset {
    dim: usize,
    vectors: Vec<f32>,
    field_names: Vec<String>,
    field_index: HashMap<String, usize>,
    vocab: Vec<Vocabulary>,
    columns: Vec<Vec<u32>>,
}

impl Dataset {
    /// Builds a dataset, deriving the field list from the metadata rows in
    /// first-seen order.
    pub fn new(dim: usize, vectors: Vec<f32>, metadata: Vec<MetadataRow>) -> Result<Self> {
        let mut fields = Vec::new();
        let mut seen = BTreeSet::new();
        for row in &metadata {
            for key in row.keys() {
                if seen.insert(key.as_str()) {
                    fields.push(key.clone());
                }
            }
        }
        Self::with_fields(dim, vectors, fields, metadata)
    }

    /// Builds a dataset with an explicit field list. Rows may leave fields
    /// unpopulated but may not use undeclared ones.
    pub fn with_fields(
        dim: usize,
        mut vectors: Vec<f32>,
        field_names: Vec<String>,
        metadata: Vec<MetadataRow>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if !vectors.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: vectors.len() % dim,
            });
        }
        let n = vectors.len() / dim;
        if metadata.len() != n {
            return Err(Error::RowCountMismatch {
                vectors: n,
                metadata: metadata.len(),
            });
        }
        for (i, row) in vectors.chunks_exact_mut(dim).enumerate() {
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::format("vector", format!("row {i} has non-finite values")));
            }
            if !normalize(row) {
                return Err(Error::ZeroVector { index: i });
            }
        }

        let field_index: HashMap<String, usize> = field_names
            .iter()
            .enumerate()
            .map(|(i, f)| (f.clone(), i))
            .collect();
        if field_index.len() != field_names.len() {
            return Err(Error::InvalidParameter("duplicate field name".into()));
        }
        let mut vocab = vec![Vocabulary::default(); field_names.len()];
        let mut columns = vec![vec![MISSING; n]; field_names.len()];
        for (row_id, row) in metadata.iter().enumerate() {
            for (field, value) in row {
                let Some(&f) = field_index.get(field) else {
                    return Err(Error::UndeclaredField {
                        row: row_id,
                        field: field.clone(),
                    });
                };
                columns[f][row_id] = vocab[f].intern(value);
            }
        }

        Ok(Dataset {
            dim,
            vectors,
            field_names,
            field_index,
            vocab,
            columns,
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn vector(&self, id: u32) -> &[f32] {
        let i = id as usize * self.dim;
        &self.vectors[i..i + self.dim]
    }

    pub fn vectors(&self) -> &[f32] {
        &self.vectors
    }

    /// Cosine similarity between a unit query and point `id`.
    #[inline]
    pub fn similarity(&self, q: &[f32], id: u32) -> f32 {
        dot(q, self.vector(id))
    }

    pub fn field_names(&self) -> &[String] {
        &self.field_names
    }

    pub fn field_id(&self, name: &str) -> Option<usize> {
        self.field_index.get(name).copied()
    }

    /// Distinct values observed for a field, indexed by value id.
    pub fn vocabulary(&self, field: usize) -> &[String] {
        &self.vocab[field].values
    }

    pub fn value_id(&self, field: usize, value: &str) -> Option<u32> {
        self.vocab[field].index.get(value).copied()
    }

    /// Value id of `field` for point `id`, if populated.
    #[inline]
    pub fn value_of(&self, field: usize, id: u32) -> Option<u32> {
        match self.columns[field][id as usize] {
            MISSING => None,
            v => Some(v),
        }
    }

    pub fn value(&self, field: usize, id: u32) -> Option<&str> {
        self.value_of(field, id)
            .map(|v| self.vocab[field].values[v as usize].as_str())
    }

    /// Number of populated fields for point `id`.
    pub fn populated_fields(&self, id: u32) -> usize {
        self.columns
            .iter()
            .filter(|c| c[id as usize] != MISSING)
            .count()
    }

    pub fn metadata_row(&self, id: u32) -> MetadataRow {
        (0..self.field_names.len())
            .filter_map(|f| {
                self.value(f, id)
                    .map(|v| (self.field_names[f].clone(), v.to_owned()))
            })
            .collect()
    }

    /// Compiles a predicate against this dataset's vocabularies.
    pub fn fiber(&self, predicate: &FilterPredicate) -> Fiber<'_> {
        let mut satisfiable = true;
        let mut clauses = Vec::with_capacity(predicate.clauses.len());
        for (field, allowed) in &predicate.clauses {
            let Some(f) = self.field_id(field) else {
                satisfiable = false;
                continue;
            };
            let mut values: Vec<u32> = allowed
                .iter()
                .filter_map(|v| self.value_id(f, v))
                .collect();
            values.sort_unstable();
            if values.is_empty() {
                satisfiable = false;
            }
            clauses.push(Clause { field: f, values });
        }
        Fiber {
            ds: self,
            clauses,
            satisfiable,
        }
    }
}

/// A conjunction of per-field allowed-value sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, BTreeSet<String>>", into = "BTreeMap<String, BTreeSet<String>>")]
pub struct FilterPredicate {
    clauses: BTreeMap<String, BTreeSet<String>>,
}

impl FilterPredicate {
    pub fn new(clauses: BTreeMap<String, BTreeSet<String>>) -> Result<Self> {
        if clauses.is_empty() {
            return Err(Error::InvalidPredicate("at least one clause required".into()));
        }
        if let Some((f, _)) = clauses.iter().find(|(_, a)| a.is_empty()) {
            return Err(Error::InvalidPredicate(format!(
                "clause on `{f}` has no allowed values"
            )));
        }
        Ok(FilterPredicate { clauses })
    }

    /// `field = value`.
    pub fn eq(field: impl Into<String>, value: impl Into<String>) -> Self {
        let mut clauses = BTreeMap::new();
        clauses.insert(field.into(), BTreeSet::from([value.into()]));
        FilterPredicate { clauses }
    }

    /// Adds (or replaces) the clause `field ∈ values`.
    pub fn and_in<I, S>(mut self, field: impl Into<String>, values: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = values.into_iter().map(Into::into).collect();
        if set.is_empty() {
            return Err(Error::InvalidPredicate("empty allowed set".into()));
        }
        self.clauses.insert(field.into(), set);
        Ok(self)
    }

    pub fn clauses(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.clauses
    }

    /// Number of clauses (|S| in the cost model).
    pub fn len(&self) -> usize {
        self.clauses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty()
    }
}

impl TryFrom<BTreeMap<String, BTreeSet<String>>> for FilterPredicate {
    type Error = Error;

    fn try_from(clauses: BTreeMap<String, BTreeSet<String>>) -> Result<Self> {
        FilterPredicate::new(clauses)
    }
}

impl From<FilterPredicate> for BTreeMap<String, BTreeSet<String>> {
    fn from(p: FilterPredicate) -> Self {
        p.clauses
    }
}

/// Membership test used by the walks.
pub trait Membership {
    fn contains(&self, id: u32) -> bool;
}

impl<F: Fn(u32) -> bool> Membership for F {
    #[inline]
    fn contains(&self, id: u32) -> bool {
        self(id)
    }
}

/// Accepts every point; used by the unfiltered baseline.
#[derive(Debug, Clone, Copy, Default)]
pub struct Everything;

impl Membership for Everything {
    #[inline]
    fn contains(&self, _id: u32) -> bool {
        true
    }
}

#[derive(Debug, Clone)]
struct Clause {
    field: usize,
    values: Vec<u32>,
}

/// A predicate compiled against a dataset: the set X_S of matching points.
#[derive(Debug, Clone)]
pub struct Fiber<'a> {
    ds: &'a Dataset,
    clauses: Vec<Clause>,
    satisfiable: bool,
}

impl<'a> Fiber<'a> {
    pub fn dataset(&self) -> &'a Dataset {
        self.ds
    }

    #[inline]
    pub fn contains(&self, id: u32) -> bool {
        self.satisfiable
            && self.clauses.iter().all(|c| match self.ds.value_of(c.field, id) {
                Some(v) => c.values.binary_search(&v).is_ok(),
                None => false,
            })
    }

    /// False when some clause references an unknown field or only unknown
    /// values, in which case no point can match.
    pub fn is_satisfiable(&self) -> bool {
        self.satisfiable
    }

    /// `(field id, allowed value ids)` per clause.
    pub fn clauses(&self) -> impl Iterator<Item = (usize, &[u32])> + '_ {
        self.clauses.iter().map(|c| (c.field, c.values.as_slice()))
    }

    pub fn ids(&self) -> Vec<u32> {
        (0..self.ds.len() as u32).filter(|&i| self.contains(i)).collect()
    }

    pub fn count(&self) -> usize {
        (0..self.ds.len() as u32).filter(|&i| self.contains(i)).count()
    }

    /// |X_S| / n.
    pub fn selectivity(&self) -> f64 {
        if self.ds.is_empty() {
            return 0.0;
        }
        self.count() as f64 / self.ds.len() as f64
    }
}

impl Membership for Fiber<'_> {
    #[inline]
    fn contains(&self, id: u32) -> bool {
        Fiber::contains(self, id)
    }
}

/// True iff every clause's field is populated on `id` with an allowed value.
pub fn matches(ds: &Dataset, predicate: &FilterPredicate, id: u32) -> bool {
    ds.fiber(predicate).contains(id)
}

pub fn selectivity(ds: &Dataset, predicate: &FilterPredicate) -> f64 {
    ds.fiber(predicate).selectivity()
}

pub fn fiber_ids(ds: &Dataset, predicate: &FilterPredicate) -> Vec<u32> {
    ds.fiber(predicate).ids()
}

/// One query of a batch: a unit vector, a predicate and the result count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawQuery", into = "RawQuery")]
pub struct QueryRecord {
    pub vector: Vec<f32>,
    pub predicate: FilterPredicate,
    pub k: usize,
}

impl QueryRecord {
    pub fn new(mut vector: Vec<f32>, predicate: FilterPredicate, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("query k must be at least 1".into()));
        }
        if vector.iter().any(|x| !x.is_finite()) || !normalize(&mut vector) {
            return Err(Error::ZeroVector { index: 0 });
        }
        Ok(QueryRecord {
            vector,
            predicate,
            k,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct RawQuery {
    vector: Vec<f32>,
    filter: FilterPredicate,
    k: usize,
}

impl TryFrom<RawQuery> for QueryRecord {
    type Error = Error;

    fn try_from(raw: RawQuery) -> Result<Self> {
        QueryRecord::new(raw.vector, raw.filter, raw.k)
    }
}

impl From<QueryRecord> for RawQuery {
    fn from(q: QueryRecord) -> Self {
        RawQuery {
            vector: q.vector,
            filter: q.predicate,
            k: q.k,
        }
    }
}
