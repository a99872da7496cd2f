//! Inverted file over residual codes.
//!
//! A coarse k-means quantizer with `k'` raw centroids splits the gallery into
//! cells. Each vector stores the code of its residual `x − c(x)` under one
//! shared residual codebook, either sparse (SPQ) or hard (PQ). A query visits
//! its `w` nearest cells and scores each cell's codes with tables built from
//! `q − c`. Codes are kept contiguous per cell, so a cell is one range of the
//! underlying index planes.
//!
//! File layout (`SPQV`):
//!
//! ```text
//! "SPQV" | version u32 | kind u32 (0 sparse, 1 hard) | n u64 | k' u32 | d u32
//! coarse centroids  k' * d f32
//! list offsets      (k' + 1) u64
//! gallery ids       n u32, in list order
//! residual codes    kind 0: SPQI block; kind 1: SPQB (raw) block then SPQP block
//! ```

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::codebook::{kmeans_fit, ProductCodebook, Trainer, DEFAULT_KMEANS_ITERS};
use crate::dataset::VectorSet;
use crate::error::{Error, Result};
use crate::format::{ByteReader, ByteWriter, VERSION};
use crate::index::{adc_tables, spq_reconstruct, SpqCode, SpqIndex};
use crate::kernels::{l2sq, top_k, ScoredId, TopK};
use crate::pq::{PqCode, PqCodebook, PqIndex};
use crate::scan::SearchStats;
use crate::util::mix_seed;

const MAGIC: &[u8; 4] = b"SPQV";

pub const DEFAULT_COARSE_K: usize = 256;
pub const DEFAULT_PROBES: usize = 8;
pub const DEFAULT_RERANK: usize = 50;
/// Rows sampled from the gallery to train the coarse and residual quantizers.
pub const DEFAULT_TRAIN_SIZE: usize = 16_384;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualKind {
    Sparse,
    Hard,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IvfParams {
    pub coarse_k: usize,
    pub kind: ResidualKind,
    pub subspace_dims: Vec<usize>,
    pub k: usize,
    pub sparsity: usize,
    pub trainer: Trainer,
    pub kmeans_iters: usize,
    pub train_size: usize,
}

impl IvfParams {
    pub fn new(coarse_k: usize, subspace_dims: Vec<usize>, k: usize, sparsity: usize) -> Self {
        Self {
            coarse_k,
            kind: ResidualKind::Sparse,
            subspace_dims,
            k,
            sparsity,
            trainer: Trainer::default(),
            kmeans_iters: DEFAULT_KMEANS_ITERS,
            train_size: DEFAULT_TRAIN_SIZE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum ResidualCodes {
    Sparse(SpqIndex),
    Hard(PqIndex),
}

/// Residual code of one gallery vector.
#[derive(Debug, Clone, PartialEq)]
pub enum ResidualCode {
    Sparse(SpqCode),
    Hard(PqCode),
}

/// Exact re-ranking request: score the top `candidates` against raw vectors.
#[derive(Debug, Clone, Copy)]
pub struct Rerank<'a> {
    pub candidates: usize,
    pub gallery: &'a VectorSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IvfIndex {
    d: usize,
    coarse_k: usize,
    coarse: Vec<f32>,
    offsets: Vec<usize>,
    ids: Vec<u32>,
    positions: Vec<u32>,
    codes: ResidualCodes,
}

fn nearest_cell(x: &[f32], coarse: &[f32], d: usize) -> usize {
    let mut best = (0usize, f32::INFINITY);
    for (c, cent) in coarse.chunks_exact(d).enumerate() {
        let v = l2sq(x, cent);
        if v < best.1 {
            best = (c, v);
        }
    }
    best.0
}

fn residuals(data: &VectorSet, coarse: &[f32], cells: &[usize], order: &[usize]) -> Result<VectorSet> {
    let d = data.d();
    let mut out = Vec::with_capacity(order.len() * d);
    for &j in order {
        let c = &coarse[cells[j] * d..(cells[j] + 1) * d];
        out.extend(data.row(j).iter().zip(c).map(|(x, c)| x - c));
    }
    VectorSet::new(d, out)
}

impl IvfIndex {
    /// Train the coarse quantizer and the residual codebook on a sample of
    /// `train`; the returned index holds no vectors yet.
    pub fn train(train: &VectorSet, params: &IvfParams, seed: u64) -> Result<Self> {
        Ok(Self::train_with_report(train, params, seed)?.0)
    }

    /// As [`IvfIndex::train`], also returning the mean residual distortion of
    /// each subspace on the training sample.
    pub fn train_with_report(train: &VectorSet, params: &IvfParams, seed: u64) -> Result<(Self, Vec<f64>)> {
        if params.coarse_k == 0 || train.n() < params.coarse_k {
            return Err(Error::invalid(format!(
                "coarse quantizer needs 1 <= k' <= n (k'={}, n={})",
                params.coarse_k,
                train.n()
            )));
        }
        let sample = train.sample(params.train_size.max(params.coarse_k), mix_seed(seed, 0));
        let fit = kmeans_fit(&sample, params.coarse_k, params.kmeans_iters, mix_seed(seed, 1))?;
        let d = train.d();
        let cells: Vec<usize> = fit.assignment.iter().map(|&c| c as usize).collect();
        let order: Vec<usize> = (0..sample.n()).collect();
        let resid = residuals(&sample, &fit.centroids, &cells, &order)?;
        let (codes, report) = match params.kind {
            ResidualKind::Sparse => {
                let (pcb, report) = ProductCodebook::train(
                    &resid,
                    &params.subspace_dims,
                    params.k,
                    params.sparsity,
                    params.trainer,
                    mix_seed(seed, 2),
                )?;
                (ResidualCodes::Sparse(SpqIndex::empty(pcb, params.sparsity)?), report)
            }
            ResidualKind::Hard => {
                let (cb, report) = PqCodebook::train(
                    &resid,
                    &params.subspace_dims,
                    params.k,
                    params.kmeans_iters,
                    mix_seed(seed, 2),
                )?;
                (ResidualCodes::Hard(PqIndex::build(&VectorSet::empty(d)?, cb)?), report)
            }
        };
        let index = Self {
            d,
            coarse_k: params.coarse_k,
            coarse: fit.centroids,
            offsets: vec![0; params.coarse_k + 1],
            ids: Vec::new(),
            positions: Vec::new(),
            codes,
        };
        Ok((index, report))
    }

    /// Replace the contents with `gallery`, keeping the trained quantizers.
    pub fn populate(&self, gallery: &VectorSet) -> Result<Self> {
        if gallery.d() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                actual: gallery.d(),
            });
        }
        let n = gallery.n();
        let cells: Vec<usize> = (0..n)
            .into_par_iter()
            .map(|j| nearest_cell(gallery.row(j), &self.coarse, self.d))
            .collect();
        let mut offsets = vec![0usize; self.coarse_k + 1];
        for &c in &cells {
            offsets[c + 1] += 1;
        }
        for c in 0..self.coarse_k {
            offsets[c + 1] += offsets[c];
        }
        let mut fill = offsets.clone();
        let mut order = vec![0usize; n];
        for (j, &c) in cells.iter().enumerate() {
            order[fill[c]] = j;
            fill[c] += 1;
        }
        let resid = residuals(gallery, &self.coarse, &cells, &order)?;
        let codes = match &self.codes {
            ResidualCodes::Sparse(idx) => {
                ResidualCodes::Sparse(SpqIndex::build(&resid, idx.codebook().clone(), idx.sparsity())?)
            }
            ResidualCodes::Hard(idx) => ResidualCodes::Hard(PqIndex::build(&resid, idx.codebook().clone())?),
        };
        let ids: Vec<u32> = order.iter().map(|&j| j as u32).collect();
        Ok(Self {
            positions: invert(&ids),
            ids,
            offsets,
            codes,
            coarse: self.coarse.clone(),
            coarse_k: self.coarse_k,
            d: self.d,
        })
    }

    pub fn build(gallery: &VectorSet, params: &IvfParams, seed: u64) -> Result<Self> {
        Self::train(gallery, params, seed)?.populate(gallery)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn coarse_k(&self) -> usize {
        self.coarse_k
    }

    pub fn kind(&self) -> ResidualKind {
        match self.codes {
            ResidualCodes::Sparse(_) => ResidualKind::Sparse,
            ResidualCodes::Hard(_) => ResidualKind::Hard,
        }
    }

    pub fn centroid(&self, c: usize) -> &[f32] {
        &self.coarse[c * self.d..(c + 1) * self.d]
    }

    /// Gallery ids stored in cell `c`.
    pub fn list(&self, c: usize) -> &[u32] {
        &self.ids[self.offsets[c]..self.offsets[c + 1]]
    }

    pub fn cell_of(&self, id: u32) -> usize {
        let pos = self.positions[id as usize] as usize;
        self.offsets.partition_point(|&o| o <= pos) - 1
    }

    pub fn residual_code(&self, id: u32) -> ResidualCode {
        let pos = self.positions[id as usize] as usize;
        match &self.codes {
            ResidualCodes::Sparse(idx) => ResidualCode::Sparse(idx.code(pos)),
            ResidualCodes::Hard(idx) => ResidualCode::Hard(idx.code(pos)),
        }
    }

    pub fn sparse_codebook(&self) -> Option<&ProductCodebook> {
        match &self.codes {
            ResidualCodes::Sparse(idx) => Some(idx.codebook()),
            ResidualCodes::Hard(_) => None,
        }
    }

    pub fn hard_codebook(&self) -> Option<&PqCodebook> {
        match &self.codes {
            ResidualCodes::Hard(idx) => Some(idx.codebook()),
            ResidualCodes::Sparse(_) => None,
        }
    }

    /// Mean `‖x − c(x) − r̂‖²` over `gallery`, which must be the indexed set.
    pub fn distortion(&self, gallery: &VectorSet) -> Result<f64> {
        if gallery.n() != self.len() || gallery.d() != self.d {
            return Err(Error::invalid("gallery does not match the index"));
        }
        if gallery.is_empty() {
            return Ok(0.0);
        }
        let total: f64 = (0..gallery.n() as u32)
            .into_par_iter()
            .map(|id| {
                let c = self.centroid(self.cell_of(id));
                let rec = match self.residual_code(id) {
                    ResidualCode::Sparse(code) => spq_reconstruct(&code, self.sparse_codebook().unwrap())?,
                    ResidualCode::Hard(code) => self.hard_codebook().unwrap().reconstruct(&code)?,
                };
                Ok(gallery
                    .row(id as usize)
                    .iter()
                    .zip(c)
                    .zip(&rec)
                    .map(|((&x, &c), &r)| (x as f64 - c as f64 - r as f64).powi(2))
                    .sum::<f64>())
            })
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .sum();
        Ok(total / gallery.n() as f64)
    }

    /// The `w` nearest coarse cells of `query`, nearest first.
    pub fn probe_cells(&self, query: &[f32], w: usize) -> Vec<usize> {
        let scores = self
            .coarse
            .chunks_exact(self.d)
            .enumerate()
            .map(|(c, cent)| ScoredId::new(c as u32, l2sq(query, cent)));
        top_k(scores, w).into_iter().map(|s| s.id as usize).collect()
    }

    pub fn search(&self, query: &[f32], w: usize, p: usize, rerank: Option<Rerank<'_>>) -> Result<Vec<ScoredId>> {
        self.search_with_stats(query, w, p, rerank, &mut SearchStats::default())
    }

    /// Probe `w` cells, ADC-score their residual codes and keep the best `p`
    /// (or the best `rerank.candidates`, re-scored exactly and cut to `p`).
    pub fn search_with_stats(
        &self,
        query: &[f32],
        w: usize,
        p: usize,
        rerank: Option<Rerank<'_>>,
        stats: &mut SearchStats,
    ) -> Result<Vec<ScoredId>> {
        if query.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                actual: query.len(),
            });
        }
        if w == 0 || w > self.coarse_k {
            return Err(Error::invalid(format!("probe width {w} outside 1..={}", self.coarse_k)));
        }
        if let Some(r) = &rerank {
            if r.gallery.n() != self.len() || r.gallery.d() != self.d {
                return Err(Error::invalid("re-ranking gallery does not match the index"));
            }
        }
        let keep = rerank.as_ref().map_or(p, |r| r.candidates);

        let t = Instant::now();
        let cells = self.probe_cells(query, w);
        stats.tables += t.elapsed();

        let mut sel = TopK::new(keep);
        let mut resid = vec![0.0f32; self.d];
        let mut scores = Vec::new();
        for c in cells {
            let range = self.offsets[c]..self.offsets[c + 1];
            if range.is_empty() {
                continue;
            }
            let t = Instant::now();
            for ((r, &q), &m) in resid.iter_mut().zip(query).zip(self.centroid(c)) {
                *r = q - m;
            }
            scores.resize(range.len(), 0.0);
            match &self.codes {
                ResidualCodes::Sparse(idx) => {
                    let tables = adc_tables(&resid, idx.codebook())?;
                    stats.tables += t.elapsed();
                    let t = Instant::now();
                    idx.scan(&tables, range.clone(), &mut scores, stats);
                    stats.scan += t.elapsed();
                }
                ResidualCodes::Hard(idx) => {
                    let tables = idx.codebook().adc_tables(&resid)?;
                    stats.tables += t.elapsed();
                    let t = Instant::now();
                    idx.scan(&tables, range.clone(), &mut scores, stats);
                    stats.scan += t.elapsed();
                }
            }
            let t = Instant::now();
            for (&id, &s) in self.ids[range].iter().zip(&scores) {
                sel.push(ScoredId::new(id, s));
            }
            stats.select += t.elapsed();
        }
        let mut out = sel.into_sorted();
        if let Some(r) = rerank {
            let t = Instant::now();
            out = rerank_exact(query, &out, r.gallery, p);
            stats.rerank += t.elapsed();
        }
        stats.queries += 1;
        Ok(out)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::default();
        w.magic(MAGIC);
        w.u32(VERSION);
        w.u32(match self.codes {
            ResidualCodes::Sparse(_) => 0,
            ResidualCodes::Hard(_) => 1,
        });
        w.u64(self.ids.len() as u64);
        w.u32(self.coarse_k as u32);
        w.u32(self.d as u32);
        w.f32s(&self.coarse);
        for &o in &self.offsets {
            w.u64(o as u64);
        }
        w.u32s(&self.ids);
        match &self.codes {
            ResidualCodes::Sparse(idx) => idx.write_block(&mut w),
            ResidualCodes::Hard(idx) => {
                idx.codebook().write_block(&mut w);
                idx.write_codes(&mut w);
            }
        }
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.magic(MAGIC)?;
        r.version()?;
        let kind = r.u32()?;
        let n = r.usize64()?;
        let coarse_k = r.usize32()?;
        let d = r.usize32()?;
        if coarse_k == 0 || d == 0 {
            return Err(r.err("zero coarse size or dimension"));
        }
        let coarse = r.f32s(coarse_k.checked_mul(d).ok_or_else(|| r.err("overflow"))?)?;
        let offsets: Vec<usize> = r.u64s(coarse_k + 1)?.into_iter().map(|o| o as usize).collect();
        if offsets[0] != 0 || offsets[coarse_k] != n || offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(r.err("list offsets are not a partition of the gallery"));
        }
        let ids = r.u32s(n)?;
        let mut seen = vec![false; n];
        for &id in &ids {
            match seen.get_mut(id as usize) {
                Some(s) if !*s => *s = true,
                _ => return Err(r.err(format!("gallery id {id} missing, repeated or out of range"))),
            }
        }
        let at = r.pos();
        let codes = match kind {
            0 => ResidualCodes::Sparse(SpqIndex::read_block(&mut r)?),
            1 => {
                let cb = PqCodebook::read_block(&mut r)?;
                ResidualCodes::Hard(PqIndex::read_codes(&mut r, cb)?)
            }
            other => return Err(Error::format(at, format!("unknown residual kind {other}"))),
        };
        let (code_n, code_d) = match &codes {
            ResidualCodes::Sparse(idx) => (idx.len(), idx.codebook().dim()),
            ResidualCodes::Hard(idx) => (idx.len(), idx.codebook().dim()),
        };
        if code_n != n || code_d != d {
            return Err(Error::format(at, "residual codes do not match the list layout"));
        }
        r.finish()?;
        Ok(Self {
            d,
            coarse_k,
            coarse,
            offsets,
            positions: invert(&ids),
            ids,
            codes,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn invert(ids: &[u32]) -> Vec<u32> {
    let mut pos = vec![0u32; ids.len()];
    for (p, &id) in ids.iter().enumerate() {
        pos[id as usize] = p as u32;
    }
    pos
}

/// Exact squared distances for `candidates`, re-sorted, cut to `p`.
pub fn rerank_exact(query: &[f32], candidates: &[ScoredId], gallery: &VectorSet, p: usize) -> Vec<ScoredId> {
    let rescored = candidates
        .iter()
        .map(|s| ScoredId::new(s.id, l2sq(query, gallery.row(s.id as usize))));
    top_k(rescored, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{exact_knn, gen_gaussian};

    fn params(coarse_k: usize) -> IvfParams {
        IvfParams {
            trainer: Trainer::KMeans { iters: 5 },
            kmeans_iters: 10,
            ..IvfParams::new(coarse_k, vec![4, 4], 16, 2)
        }
    }

    #[test]
    fn centroids_land_in_their_own_cells() {
        let train = gen_gaussian(200, 8, 3).unwrap();
        let trained = IvfIndex::train(&train, &params(8), 1).unwrap();
        let rows: Vec<Vec<f32>> = (0..8).map(|c| trained.centroid(c).to_vec()).collect();
        let g = VectorSet::from_rows(&rows).unwrap();
        let idx = trained.populate(&g).unwrap();
        for c in 0..8 {
            assert_eq!(idx.list(c), &[c as u32]);
        }
        for id in 0..8u32 {
            assert_eq!(idx.cell_of(id), id as usize);
            match idx.residual_code(id) {
                ResidualCode::Sparse(code) => assert_eq!(code.x_sq_norm, 0.0),
                ResidualCode::Hard(_) => unreachable!(),
            }
        }
    }

    #[test]
    fn lists_partition_gallery() {
        let g = gen_gaussian(500, 8, 4).unwrap();
        let idx = IvfIndex::build(&g, &params(16), 2).unwrap();
        let mut all: Vec<u32> = (0..16).flat_map(|c| idx.list(c).to_vec()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..500).collect::<Vec<_>>());
        for id in 0..500u32 {
            let c = idx.cell_of(id);
            assert_eq!(c, nearest_cell(g.row(id as usize), &idx.coarse, 8));
        }
    }

    #[test]
    fn full_probe_equals_exhaustive_cell_scan() {
        let g = gen_gaussian(400, 8, 5).unwrap();
        let idx = IvfIndex::build(&g, &params(8), 3).unwrap();
        let q = gen_gaussian(1, 8, 99).unwrap();
        let got = idx.search(q.row(0), 8, 400, None).unwrap();
        assert_eq!(got.len(), 400);
        // scan each list in cell order and merge
        let mut all = Vec::new();
        for c in 0..8 {
            let resid: Vec<f32> = q.row(0).iter().zip(idx.centroid(c)).map(|(a, b)| a - b).collect();
            let t = adc_tables(&resid, idx.sparse_codebook().unwrap()).unwrap();
            for &id in idx.list(c) {
                let code = match idx.residual_code(id) {
                    ResidualCode::Sparse(s) => s,
                    _ => unreachable!(),
                };
                let mut acc = 0.0f32;
                for (i, sc) in code.codes.iter().enumerate() {
                    for (&a, &co) in sc.ids.iter().zip(&sc.coeffs) {
                        acc += co * t.table(i)[a as usize];
                    }
                }
                all.push(ScoredId::new(id, code.x_sq_norm + t.q_sq_norm - 2.0 * acc));
            }
        }
        all.sort();
        for (a, b) in got.iter().zip(&all) {
            assert_eq!(a.id, b.id);
            assert!((a.score - b.score).abs() <= 1e-4 * b.score.abs().max(1.0));
        }
    }

    #[test]
    fn rerank_with_all_candidates_is_exact() {
        let g = gen_gaussian(300, 8, 6).unwrap();
        let idx = IvfIndex::build(&g, &params(4), 4).unwrap();
        let q = gen_gaussian(3, 8, 7).unwrap();
        let gt = exact_knn(&g, &q, 10).unwrap();
        for qi in 0..3 {
            let r = idx
                .search(q.row(qi), 4, 10, Some(Rerank { candidates: 300, gallery: &g }))
                .unwrap();
            assert_eq!(r.iter().map(|s| s.id).collect::<Vec<_>>(), gt.ids[qi]);
        }
    }

    #[test]
    fn candidate_sets_grow_with_width() {
        let g = gen_gaussian(600, 8, 8).unwrap();
        let idx = IvfIndex::build(&g, &params(16), 5).unwrap();
        let q = gen_gaussian(1, 8, 17).unwrap();
        let mut prev: Vec<usize> = Vec::new();
        for w in 1..=16 {
            let cells = idx.probe_cells(q.row(0), w);
            assert_eq!(&cells[..prev.len()], &prev[..]);
            prev = cells;
        }
    }

    #[test]
    fn errors() {
        let g = gen_gaussian(10, 8, 8).unwrap();
        let mut p = params(11);
        p.k = 4;
        assert!(IvfIndex::build(&g, &p, 0).is_err());
        p.coarse_k = 2;
        let idx = IvfIndex::build(&g, &p, 0).unwrap();
        assert!(idx.search(g.row(0), 0, 1, None).is_err());
        assert!(idx.search(g.row(0), 3, 1, None).is_err());
        let other = gen_gaussian(9, 8, 1).unwrap();
        assert!(idx
            .search(g.row(0), 1, 1, Some(Rerank { candidates: 5, gallery: &other }))
            .is_err());
    }

    #[test]
    fn empty_cells_are_skipped() {
        // two tight clusters, four cells: some lists may be empty
        let mut rows = Vec::new();
        for i in 0..40 {
            let s = if i % 2 == 0 { 10.0 } else { -10.0 };
            rows.push(vec![s + (i as f32) * 1e-3; 8]);
        }
        let g = VectorSet::from_rows(&rows).unwrap();
        let mut p = params(4);
        p.subspace_dims = vec![8];
        p.k = 2;
        p.sparsity = 1;
        let idx = IvfIndex::build(&g, &p, 1).unwrap();
        let r = idx.search(g.row(0), 4, 40, None).unwrap();
        assert_eq!(r.len(), 40);
    }

    #[test]
    fn hard_residuals_and_round_trip() {
        let g = gen_gaussian(300, 8, 9).unwrap();
        let mut p = params(4);
        p.kind = ResidualKind::Hard;
        let idx = IvfIndex::build(&g, &p, 6).unwrap();
        assert_eq!(idx.kind(), ResidualKind::Hard);
        let e = idx.distortion(&g).unwrap();
        let direct: f64 = (0..300u32)
            .map(|id| {
                let ResidualCode::Hard(code) = idx.residual_code(id) else { unreachable!() };
                let rec = idx.hard_codebook().unwrap().reconstruct(&code).unwrap();
                let c = idx.centroid(idx.cell_of(id));
                (0..8).map(|t| (g.row(id as usize)[t] - c[t] - rec[t]) as f64).map(|v| v * v).sum::<f64>()
            })
            .sum::<f64>()
            / 300.0;
        assert!((e - direct).abs() < 1e-4 * direct);
        let bytes = idx.to_bytes();
        assert_eq!(&bytes[..4], b"SPQV");
        assert_eq!(IvfIndex::from_bytes(&bytes).unwrap(), idx);

        let sparse = IvfIndex::build(&g, &params(4), 6).unwrap();
        let bytes = sparse.to_bytes();
        let back = IvfIndex::from_bytes(&bytes).unwrap();
        assert_eq!(back, sparse);
        assert_eq!(back.to_bytes(), bytes);

        let trained = IvfIndex::train(&g, &params(4), 6).unwrap();
        assert!(trained.is_empty());
        let back = IvfIndex::from_bytes(&trained.to_bytes()).unwrap();
        assert_eq!(back.populate(&g).unwrap(), trained.populate(&g).unwrap());
    }
}
