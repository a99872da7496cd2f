//! Retrieval metrics, dataset distortion and CSV output.

use std::collections::HashSet;
use std::io::Write;

use crate::codebook::ProductCodebook;
use crate::dataset::{GroundTruth, VectorSet};
use crate::error::{Error, Result};
use crate::index::spq_distortion;
use crate::kernels::ScoredId;
use crate::pq::{pq_distortion, PqCodebook};
use crate::scan::SearchStats;

/// Ranked ids per query plus accumulated timings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunResult {
    pub ranked: Vec<Vec<u32>>,
    pub stats: SearchStats,
}

impl RunResult {
    pub fn from_scored(results: Vec<Vec<ScoredId>>, stats: SearchStats) -> Self {
        Self {
            ranked: results.into_iter().map(|r| r.into_iter().map(|s| s.id).collect()).collect(),
            stats,
        }
    }

    pub fn num_queries(&self) -> usize {
        self.ranked.len()
    }

    /// Length of the shortest ranked list.
    pub fn depth(&self) -> usize {
        self.ranked.iter().map(Vec::len).min().unwrap_or(0)
    }
}

fn check_pair(run: &RunResult, gt: &GroundTruth, t_eval: usize) -> Result<()> {
    if run.num_queries() != gt.num_queries() {
        return Err(Error::DimensionMismatch {
            expected: gt.num_queries(),
            actual: run.num_queries(),
        });
    }
    if run.num_queries() == 0 {
        return Err(Error::EmptySet);
    }
    if t_eval == 0 || t_eval > gt.t {
        return Err(Error::invalid(format!("t_eval = {t_eval} outside 1..={}", gt.t)));
    }
    Ok(())
}

/// Mean over queries of `|top-R ∩ first t_eval true neighbours| / t_eval`.
pub fn recall_at_r(run: &RunResult, gt: &GroundTruth, r: usize, t_eval: usize) -> Result<f64> {
    check_pair(run, gt, t_eval)?;
    if r == 0 || r > run.depth() {
        return Err(Error::invalid(format!("R = {r} outside 1..={}", run.depth())));
    }
    let total: usize = run
        .ranked
        .iter()
        .zip(&gt.ids)
        .map(|(ranked, truth)| {
            let truth: HashSet<u32> = truth[..t_eval].iter().copied().collect();
            ranked[..r].iter().filter(|id| truth.contains(id)).count()
        })
        .sum();
    Ok(total as f64 / (t_eval * run.num_queries()) as f64)
}

/// Recall at each `R` in `rs`.
pub fn recall_curve(run: &RunResult, gt: &GroundTruth, rs: &[usize], t_eval: usize) -> Result<Vec<(usize, f64)>> {
    rs.iter().map(|&r| Ok((r, recall_at_r(run, gt, r, t_eval)?))).collect()
}

/// Average precision of one ranked list against `relevant`:
/// `(1/t_eval) Σ_h h / rank_h` over hits in the whole list.
pub fn average_precision(ranked: &[u32], relevant: &[u32]) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let relevant: HashSet<u32> = relevant.iter().copied().collect();
    let mut hits = 0usize;
    let mut sum = 0.0f64;
    for (rank, id) in ranked.iter().enumerate() {
        if relevant.contains(id) {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    sum / relevant.len() as f64
}

pub fn mean_average_precision(run: &RunResult, gt: &GroundTruth, t_eval: usize) -> Result<f64> {
    check_pair(run, gt, t_eval)?;
    let total: f64 = run
        .ranked
        .iter()
        .zip(&gt.ids)
        .map(|(ranked, truth)| average_precision(ranked, &truth[..t_eval]))
        .sum();
    Ok(total / run.num_queries() as f64)
}

/// Encoders whose per-vector distortion can be averaged over a gallery.
#[derive(Debug, Clone, Copy)]
pub enum Encoder<'a> {
    Pq(&'a PqCodebook),
    Spq { codebook: &'a ProductCodebook, sparsity: usize },
}

/// Mean squared reconstruction error per vector.
pub fn dataset_distortion(gallery: &VectorSet, encoder: Encoder<'_>) -> Result<f64> {
    match encoder {
        Encoder::Pq(cb) => pq_distortion(gallery, cb),
        Encoder::Spq { codebook, sparsity } => spq_distortion(gallery, codebook, sparsity),
    }
}

/// One CSV row. `r` is set for rank-dependent metrics only.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub method: String,
    pub code_bits: u32,
    pub index_bits: u32,
    pub coeff_bytes: u32,
    pub metric: String,
    pub r: Option<usize>,
    pub value: f64,
}

pub const CSV_HEADER: &str = "method,code_bits,index_bits,coeff_bytes,metric,r,value";

/// Writes `# key=value` metadata lines, the header, then the rows.
pub fn write_csv<W: Write>(mut w: W, meta: &[(&str, String)], rows: &[MetricRow]) -> Result<()> {
    for (k, v) in meta {
        writeln!(w, "# {k}={v}")?;
    }
    writeln!(w, "{CSV_HEADER}")?;
    for row in rows {
        let r = row.r.map(|r| r.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            row.method, row.code_bits, row.index_bits, row.coeff_bytes, row.metric, r, row.value
        )?;
    }
    Ok(())
}
