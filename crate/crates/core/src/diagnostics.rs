//! Stall records, regime classification and the per-selectivity and
//! per-regime report tables.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::search::{Termination, WalkOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    TopologicalCut,
    GeometricFold,
    GenuineBasin,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::TopologicalCut, Regime::GeometricFold, Regime::GenuineBasin];

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::TopologicalCut => "topological_cut",
            Regime::GeometricFold => "geometric_fold",
            Regime::GenuineBasin => "genuine_basin",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Signals at the last node a walk expanded.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StallRecord {
    pub query_id: usize,
    pub node: u32,
    pub potential: f64,
    pub fiber_density: f64,
    pub drift: Option<f64>,
    pub boundary_improving_count: usize,
    pub termination: Termination,
    pub selectivity: f64,
}

impl StallRecord {
    /// `None` for a walk that expanded nothing.
    pub fn from_walk(query_id: usize, selectivity: f64, walk: &WalkOutcome) -> Option<Self> {
        let s = walk.stall?;
        Some(StallRecord {
            query_id,
            node: s.node,
            potential: s.potential,
            fiber_density: s.fiber_density,
            drift: s.drift,
            boundary_improving_count: s.boundary_improving_count,
            termination: walk.termination,
            selectivity,
        })
    }
}

/// Cut when ρ_S < σ/2, otherwise fold if some non-matching neighbor improves
/// the potential, otherwise basin.
pub fn classify(fiber_density: f64, boundary_improving: usize, selectivity: f64) -> Result<Regime> {
    if selectivity.is_nan() || selectivity <= 0.0 {
        return Err(Error::InvalidParameter(
            "cannot classify a stall for an empty fiber".into(),
        ));
    }
    Ok(if fiber_density < selectivity / 2.0 {
        Regime::TopologicalCut
    } else if boundary_improving > 0 {
        Regime::GeometricFold
    } else {
        Regime::GenuineBasin
    })
}

pub fn classify_stall(rec: &StallRecord) -> Result<Regime> {
    classify(rec.fiber_density, rec.boundary_improving_count, rec.selectivity)
}

/// Bin edges reproducing the five ranges <0.1%, 0.1–1%, 1–5%, 5–20%, >20%.
pub const DEFAULT_EDGES: [f64; 4] = [0.001, 0.01, 0.05, 0.20];

/// Per-query figures joined onto the selectivity table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuerySummary {
    pub query_id: usize,
    pub selectivity: f64,
    pub recall: f64,
    pub hops: usize,
    pub walks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinRow {
    pub label: String,
    pub queries: usize,
    pub mean_recall: Option<f64>,
    pub mean_hops: Option<f64>,
    pub mean_walks: Option<f64>,
    pub stalls: usize,
    /// Fractions of stalls per regime, in [`Regime::ALL`] order.
    pub regimes: [f64; 3],
    /// Fractions of stalls per termination reason, in [`Termination::ALL`] order.
    pub terminations: [f64; 5],
}

impl BinRow {
    pub fn regime_fraction(&self, r: Regime) -> f64 {
        self.regimes[Regime::ALL.iter().position(|&x| x == r).unwrap()]
    }

    pub fn termination_fraction(&self, t: Termination) -> f64 {
        self.terminations[Termination::ALL.iter().position(|&x| x == t).unwrap()]
    }
}

fn validate_edges(edges: &[f64]) -> Result<()> {
    let ordered = edges.windows(2).all(|w| w[0] < w[1]);
    let inside = edges.iter().all(|&e| e > 0.0 && e < 1.0);
    if ordered && inside {
        Ok(())
    } else {
        Err(Error::InvalidParameter(
            "bin edges must be strictly increasing within (0, 1)".into(),
        ))
    }
}

/// Index of the bin holding `sigma`: bin i covers [edges[i-1], edges[i]).
pub fn bin_index(sigma: f64, edges: &[f64]) -> usize {
    edges.iter().take_while(|&&e| sigma >= e).count()
}

fn percent(x: f64) -> String {
    let s = format!("{:.4}", x * 100.0);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    format!("{s}%")
}

pub fn bin_labels(edges: &[f64]) -> Vec<String> {
    let mut out = Vec::with_capacity(edges.len() + 1);
    for i in 0..=edges.len() {
        out.push(match (i.checked_sub(1).map(|j| edges[j]), edges.get(i)) {
            (None, Some(&hi)) => format!("<{}", percent(hi)),
            (Some(lo), Some(&hi)) => format!("{}-{}", percent(lo), percent(hi)),
            (Some(lo), None) => format!(">={}", percent(lo)),
            (None, None) => "all".to_string(),
        });
    }
    out
}

fn fractions<const N: usize>(counts: [usize; N], total: usize) -> [f64; N] {
    counts.map(|c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Stall regimes and terminations binned by selectivity. Empty bins are
/// omitted.
pub fn bin_by_selectivity(records: &[StallRecord], edges: &[f64]) -> Result<Vec<BinRow>> {
    selectivity_table(records, &[], edges)
}

/// [`bin_by_selectivity`] joined with per-query recall, hops and walks.
/// When `queries` is empty the query count is the number of distinct query
/// ids among the records.
pub fn selectivity_table(records: &[StallRecord], queries: &[QuerySummary], edges: &[f64]) -> Result<Vec<BinRow>> {
    validate_edges(edges)?;
    let labels = bin_labels(edges);
    let mut rows = Vec::new();
    for (b, label) in labels.into_iter().enumerate() {
        let recs: Vec<&StallRecord> = records
            .iter()
            .filter(|r| bin_index(r.selectivity, edges) == b)
            .collect();
        let qs: Vec<&QuerySummary> = queries
            .iter()
            .filter(|q| bin_index(q.selectivity, edges) == b)
            .collect();
        if recs.is_empty() && qs.is_empty() {
            continue;
        }
        let mut regimes = [0usize; 3];
        let mut terms = [0usize; 5];
        for r in &recs {
            let regime = classify_stall(r)?;
            regimes[Regime::ALL.iter().position(|&x| x == regime).unwrap()] += 1;
            terms[Termination::ALL.iter().position(|&x| x == r.termination).unwrap()] += 1;
        }
        let queries_in_bin = if queries.is_empty() {
            recs.iter().map(|r| r.query_id).collect::<BTreeSet<_>>().len()
        } else {
            qs.len()
        };
        rows.push(BinRow {
            label,
            queries: queries_in_bin,
            mean_recall: mean(qs.iter().map(|q| q.recall)),
            mean_hops: mean(qs.iter().map(|q| q.hops as f64)),
            mean_walks: mean(qs.iter().map(|q| q.walks as f64)),
            stalls: recs.len(),
            regimes: fractions(regimes, recs.len()),
            terminations: fractions(terms, recs.len()),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeRow {
    pub regime: Regime,
    pub count: usize,
    pub mean_fiber_density: Option<f64>,
    pub mean_boundary_improving: Option<f64>,
    /// Mean over records with a defined drift.
    pub mean_drift: Option<f64>,
    pub undefined_drift: usize,
    pub mean_potential: Option<f64>,
    pub mean_recall: Option<f64>,
}

/// Means per regime, always three rows. `recall` is indexed by query id.
pub fn regime_summary(records: &[StallRecord], recall: Option<&[f64]>) -> Result<Vec<RegimeRow>> {
    let mut classified = Vec::with_capacity(records.len());
    for r in records {
        classified.push((classify_stall(r)?, r));
    }
    Ok(Regime::ALL
        .iter()
        .map(|&regime| {
            let recs: Vec<&StallRecord> = classified
                .iter()
                .filter(|(g, _)| *g == regime)
                .map(|(_, r)| *r)
                .collect();
            RegimeRow {
                regime,
                count: recs.len(),
                mean_fiber_density: mean(recs.iter().map(|r| r.fiber_density)),
                mean_boundary_improving: mean(recs.iter().map(|r| r.boundary_improving_count as f64)),
                mean_drift: mean(recs.iter().filter_map(|r| r.drift)),
                undefined_drift: recs.iter().filter(|r| r.drift.is_none()).count(),
                mean_potential: mean(recs.iter().map(|r| r.potential)),
                mean_recall: recall.and_then(|rc| mean(recs.iter().filter_map(|r| rc.get(r.query_id).copied()))),
            }
        })
        .collect())
}

pub(crate) fn fmt_f(x: f64) -> String {
    format!("{x:.6}")
}

pub(crate) fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f).unwrap_or_default()
}

pub fn write_stalls_csv(w: &mut impl Write, records: &[StallRecord]) -> Result<()> {
    writeln!(
        w,
        "query_id,node,potential,fiber_density,drift,boundary_improving,termination,selectivity,regime"
    )?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.query_id,
            r.node,
            fmt_f(r.potential),
            fmt_f(r.fiber_density),
            fmt_opt(r.drift),
            r.boundary_improving_count,
            r.termination,
            fmt_f(r.selectivity),
            classify_stall(r)?,
        )?;
    }
    Ok(())
}

pub fn write_bins_csv(w: &mut impl Write, rows: &[BinRow]) -> Result<()> {
    write!(w, "selectivity,queries,recall,hops,walks,stalls")?;
    for r in Regime::ALL {
        write!(w, ",{r}")?;
    }
    for t in Termination::ALL {
        write!(w, ",{t}")?;
    }
    writeln!(w)?;
    for row in rows {
        write!(
            w,
            "{},{},{},{},{},{}",
            row.label,
            row.queries,
            fmt_opt(row.mean_recall),
            fmt_opt(row.mean_hops),
            fmt_opt(row.mean_walks),
            row.stalls
        )?;
        for x in row.regimes.iter().chain(&row.terminations) {
            write!(w, ",{}", fmt_f(*x))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_regimes_csv(w: &mut impl Write, rows: &[RegimeRow]) -> Result<()> {
    writeln!(
        w,
        "regime,count,fiber_density,boundary_improving,drift,undefined_drift,potential,recall"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.regime,
            r.count,
            fmt_opt(r.mean_fiber_density),
            fmt_opt(r.mean_boundary_improving),
            fmt_opt(r.mean_drift),
            r.undefined_drift,
            fmt_opt(r.mean_potential),
            fmt_opt(r.mean_recall),
        )?;
    }
    Ok(())
}
