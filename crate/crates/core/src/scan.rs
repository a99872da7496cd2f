//! Structure-of-arrays code storage and the table-lookup scan loops.
//!
//! Codes are stored per subspace as planes: for sparse codes one id plane and
//! one coefficient plane per (subspace, slot), each holding `n` entries with
//! stride 1. The scan walks the planes in blocks of [`BLOCK`] items and
//! accumulates into a small buffer, so the inner loop is a branch-free gather
//! and multiply-add.

use std::ops::Range;
use std::time::Duration;

use crate::format::{ByteReader, ByteWriter};
use crate::error::Result;

pub const BLOCK: usize = 1024;

/// Atom ids of one plane; `u8` when `k <= 256`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IdPlane {
    U8(Vec<u8>),
    U16(Vec<u16>),
}

impl IdPlane {
    pub fn with_capacity(k: usize, n: usize) -> Self {
        if k <= 256 {
            IdPlane::U8(Vec::with_capacity(n))
        } else {
            IdPlane::U16(Vec::with_capacity(n))
        }
    }

    pub fn zeros(k: usize, n: usize) -> Self {
        if k <= 256 {
            IdPlane::U8(vec![0; n])
        } else {
            IdPlane::U16(vec![0; n])
        }
    }

    pub fn len(&self) -> usize {
        match self {
            IdPlane::U8(v) => v.len(),
            IdPlane::U16(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> u16 {
        match self {
            IdPlane::U8(v) => v[i] as u16,
            IdPlane::U16(v) => v[i],
        }
    }

    #[inline]
    pub fn set(&mut self, i: usize, id: u16) {
        match self {
            IdPlane::U8(v) => v[i] = id as u8,
            IdPlane::U16(v) => v[i] = id,
        }
    }

    pub fn push(&mut self, id: u16) {
        match self {
            IdPlane::U8(v) => v.push(id as u8),
            IdPlane::U16(v) => v.push(id),
        }
    }

    pub(crate) fn write(&self, w: &mut ByteWriter) {
        match self {
            IdPlane::U8(v) => w.bytes(v),
            IdPlane::U16(v) => w.u16s(v),
        }
    }

    pub(crate) fn read(r: &mut ByteReader<'_>, k: usize, n: usize) -> Result<Self> {
        let plane = if k <= 256 {
            IdPlane::U8(r.u8s(n)?)
        } else {
            IdPlane::U16(r.u16s(n)?)
        };
        let bad = match &plane {
            IdPlane::U8(v) => v.iter().any(|&a| a as usize >= k),
            IdPlane::U16(v) => v.iter().any(|&a| a as usize >= k),
        };
        if bad {
            return Err(r.err(format!("atom id out of range for k = {k}")));
        }
        Ok(plane)
    }
}

/// Per-subspace query tables, `m` rows of `k` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct LookupTables {
    pub m: usize,
    pub k: usize,
    pub values: Vec<f32>,
    /// `‖q‖²` (zero for tables that already hold distances).
    pub q_sq_norm: f32,
}

impl LookupTables {
    #[inline]
    pub fn table(&self, i: usize) -> &[f32] {
        &self.values[i * self.k..(i + 1) * self.k]
    }
}

/// Counters and per-stage wall-clock totals for one or more queries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SearchStats {
    pub queries: u64,
    pub tables: Duration,
    pub scan: Duration,
    pub select: Duration,
    pub rerank: Duration,
    /// Database codes whose score was evaluated.
    pub codes_scanned: u64,
    /// Multiply-accumulate operations performed by the code scan.
    pub macs: u64,
}

impl SearchStats {
    pub fn merge(&mut self, other: &SearchStats) {
        self.queries += other.queries;
        self.tables += other.tables;
        self.scan += other.scan;
        self.select += other.select;
        self.rerank += other.rerank;
        self.codes_scanned += other.codes_scanned;
        self.macs += other.macs;
    }

    pub fn total(&self) -> Duration {
        self.tables + self.scan + self.select + self.rerank
    }

    /// Mean milliseconds per query of a stage.
    pub fn per_query_ms(&self, d: Duration) -> f64 {
        if self.queries == 0 {
            0.0
        } else {
            d.as_secs_f64() * 1e3 / self.queries as f64
        }
    }
}

#[inline]
fn gather_mac_u8(acc: &mut [f32], ids: &[u8], coeffs: &[f32], table: &[f32]) {
    let table: &[f32; 256] = table.try_into().expect("u8 ids need a 256-entry table");
    for ((a, &id), &c) in acc.iter_mut().zip(ids).zip(coeffs) {
        *a += c * table[id as usize];
    }
}

#[inline]
fn gather_mac_u16(acc: &mut [f32], ids: &[u16], coeffs: &[f32], table: &[f32]) {
    for ((a, &id), &c) in acc.iter_mut().zip(ids).zip(coeffs) {
        *a += c * table[id as usize];
    }
}

#[inline]
fn gather_add_u8(acc: &mut [f32], ids: &[u8], table: &[f32]) {
    let table: &[f32; 256] = table.try_into().expect("u8 ids need a 256-entry table");
    for (a, &id) in acc.iter_mut().zip(ids) {
        *a += table[id as usize];
    }
}

#[inline]
fn gather_add_u16(acc: &mut [f32], ids: &[u16], table: &[f32]) {
    for (a, &id) in acc.iter_mut().zip(ids) {
        *a += table[id as usize];
    }
}

/// Pads a `k <= 256` table to 256 entries so the u8 gather is bounds-check free.
fn padded_tables(tables: &LookupTables) -> Option<Vec<f32>> {
    if tables.k >= 256 {
        return None;
    }
    let mut out = vec![0.0f32; tables.m * 256];
    for i in 0..tables.m {
        out[i * 256..i * 256 + tables.k].copy_from_slice(tables.table(i));
    }
    Some(out)
}

/// Sparse-code scan: for every item `j` in `range`,
/// `out[j - range.start] = sq_norms[j] + ‖q‖² − 2 Σ_i Σ_l coeff · T_i[id]`.
///
/// `ids[i * sparsity + l]` / `coeffs[i * sparsity + l]` are the planes of
/// subspace `i`, slot `l`, each of length `n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn scan_sparse(
    ids: &[IdPlane],
    coeffs: &[Vec<f32>],
    sparsity: usize,
    sq_norms: &[f32],
    tables: &LookupTables,
    range: Range<usize>,
    out: &mut [f32],
    stats: &mut SearchStats,
) {
    debug_assert_eq!(out.len(), range.len());
    let padded = padded_tables(tables);
    let width = if padded.is_some() { 256 } else { tables.k };
    let values = padded.as_deref().unwrap_or(&tables.values);
    let mut acc = [0.0f32; BLOCK];
    let mut start = range.start;
    while start < range.end {
        let end = (start + BLOCK).min(range.end);
        let len = end - start;
        let acc = &mut acc[..len];
        acc.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..tables.m {
            let table = &values[i * width..(i + 1) * width];
            for l in 0..sparsity {
                let p = i * sparsity + l;
                let co = &coeffs[p][start..end];
                match &ids[p] {
                    IdPlane::U8(v) => gather_mac_u8(acc, &v[start..end], co, table),
                    IdPlane::U16(v) => gather_mac_u16(acc, &v[start..end], co, table),
                }
                stats.macs += len as u64;
            }
        }
        let o = &mut out[start - range.start..end - range.start];
        for ((o, &a), &xn) in o.iter_mut().zip(acc.iter()).zip(&sq_norms[start..end]) {
            *o = xn + tables.q_sq_norm - 2.0 * a;
        }
        start = end;
    }
    stats.codes_scanned += range.len() as u64;
}

/// Hard-assignment scan: `out[j - range.start] = Σ_i T_i[ids_i[j]]`.
pub(crate) fn scan_hard(
    ids: &[IdPlane],
    tables: &LookupTables,
    range: Range<usize>,
    out: &mut [f32],
    stats: &mut SearchStats,
) {
    debug_assert_eq!(out.len(), range.len());
    let padded = padded_tables(tables);
    let width = if padded.is_some() { 256 } else { tables.k };
    let values = padded.as_deref().unwrap_or(&tables.values);
    let mut start = range.start;
    while start < range.end {
        let end = (start + BLOCK).min(range.end);
        let o = &mut out[start - range.start..end - range.start];
        o.iter_mut().for_each(|v| *v = 0.0);
        for (i, plane) in ids.iter().enumerate() {
            let table = &values[i * width..(i + 1) * width];
            match plane {
                IdPlane::U8(v) => gather_add_u8(o, &v[start..end], table),
                IdPlane::U16(v) => gather_add_u16(o, &v[start..end], table),
            }
        }
        start = end;
    }
    stats.codes_scanned += range.len() as u64;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn id_plane_widths() {
        let mut p = IdPlane::with_capacity(256, 2);
        p.push(255);
        assert!(matches!(p, IdPlane::U8(_)));
        let mut p = IdPlane::zeros(257, 2);
        p.set(1, 256);
        assert_eq!(p.get(1), 256);
        assert!(matches!(p, IdPlane::U16(_)));
    }

    #[test]
    fn sparse_scan_counts_macs() {
        let (n, m, l, k) = (2500, 3, 2, 4);
        let ids: Vec<IdPlane> = (0..m * l)
            .map(|p| {
                let mut pl = IdPlane::with_capacity(k, n);
                (0..n).for_each(|j| pl.push(((j + p) % k) as u16));
                pl
            })
            .collect();
        let coeffs: Vec<Vec<f32>> = (0..m * l).map(|_| vec![0.5; n]).collect();
        let norms = vec![1.0; n];
        let tables = LookupTables {
            m,
            k,
            values: (0..m * k).map(|v| v as f32).collect(),
            q_sq_norm: 2.0,
        };
        let mut out = vec![0.0; n];
        let mut stats = SearchStats::default();
        scan_sparse(&ids, &coeffs, l, &norms, &tables, 0..n, &mut out, &mut stats);
        assert_eq!(stats.macs, (n * m * l) as u64);
        assert_eq!(stats.codes_scanned, n as u64);
        for j in [0usize, 1, 1500, n - 1] {
            let mut dotp = 0.0;
            for i in 0..m {
                for s in 0..l {
                    dotp += 0.5 * tables.table(i)[(j + i * l + s) % k];
                }
            }
            assert_eq!(out[j], 3.0 - 2.0 * dotp);
        }
    }
}
