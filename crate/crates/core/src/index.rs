//! Sparse product quantization index.
//!
//! Every gallery vector is cut into `m` subvectors and each one is OMP-coded
//! at sparse level `L` against its subspace codebook. The squared norm of the
//! original vector is kept so that a query scores as
//!
//! ```text
//! d²(q, x) ≈ ‖x‖² + ‖q‖² − 2 Σ_i Σ_l α_il · T_i[id_il]
//! ```
//!
//! with `T_i[j] = ⟨q^i, c^i_j⟩` (ADC) or, for a sparse-coded query `β`,
//! `T_i[j] = Σ_l' β_l' G_i[j][id'_l']` (SDC). Either way the scan costs
//! `m·L` multiply-adds per item. Raw scores are returned without clamping.
//!
//! File layout (`SPQI`):
//!
//! ```text
//! "SPQI" | version u32 | n u64 | m u32 | k u32 | L u32
//! id planes     m*L planes of n ids (u8 if k <= 256, else u16), subspace-major
//! coeff planes  m*L planes of n f32
//! sq norms      n f32
//! codebook      SPQB block
//! ```

use std::ops::Range;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::codebook::ProductCodebook;
use crate::dataset::VectorSet;
use crate::error::{Error, Result};
use crate::format::{ByteReader, ByteWriter, VERSION};
use crate::kernels::{ip, ScoredId, TopK};
use crate::scan::{scan_sparse, IdPlane, LookupTables, SearchStats};
use crate::sparse::{Omp, SparseCode};

const MAGIC: &[u8; 4] = b"SPQI";
const BUILD_CHUNK: usize = 512;

/// Sparse codes of one vector across all subspaces.
#[derive(Debug, Clone, PartialEq)]
pub struct SpqCode {
    pub codes: Vec<SparseCode>,
    pub x_sq_norm: f32,
}

/// Encode one vector against every subspace codebook.
pub fn spq_encode(x: &[f32], pcb: &ProductCodebook, sparsity: usize) -> Result<SpqCode> {
    check_dim(pcb, x)?;
    let codes = (0..pcb.m())
        .map(|i| Omp::new(pcb.book(i), sparsity)?.encode(pcb.sub(x, i)))
        .collect::<Result<_>>()?;
    Ok(SpqCode {
        codes,
        x_sq_norm: ip(x, x),
    })
}

/// Concatenated per-subspace reconstruction.
pub fn spq_reconstruct(code: &SpqCode, pcb: &ProductCodebook) -> Result<Vec<f32>> {
    if code.codes.len() != pcb.m() {
        return Err(Error::invalid("code does not match codebook"));
    }
    let mut out = Vec::with_capacity(pcb.dim());
    for (i, c) in code.codes.iter().enumerate() {
        out.extend(crate::sparse::reconstruct(c, pcb.book(i))?);
    }
    Ok(out)
}

/// Mean over the gallery of the summed per-subspace OMP distortion.
pub fn spq_distortion(gallery: &VectorSet, pcb: &ProductCodebook, sparsity: usize) -> Result<f64> {
    check_set(pcb, gallery)?;
    if gallery.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = (0..pcb.m())
        .into_par_iter()
        .map(|i| {
            let mut omp = Omp::new(pcb.book(i), sparsity)?;
            Ok(gallery
                .rows()
                .map(|x| omp.encode_distortion(pcb.sub(x, i)))
                .sum::<f64>())
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .sum();
    Ok(total / gallery.n() as f64)
}

fn check_dim(pcb: &ProductCodebook, x: &[f32]) -> Result<()> {
    if x.len() != pcb.dim() {
        return Err(Error::DimensionMismatch {
            expected: pcb.dim(),
            actual: x.len(),
        });
    }
    Ok(())
}

fn check_set(pcb: &ProductCodebook, vs: &VectorSet) -> Result<()> {
    if vs.d() != pcb.dim() {
        return Err(Error::DimensionMismatch {
            expected: pcb.dim(),
            actual: vs.d(),
        });
    }
    Ok(())
}

/// ADC tables `T_i[j] = ⟨q^i, c^i_j⟩` and `‖q‖²`.
pub fn adc_tables(query: &[f32], pcb: &ProductCodebook) -> Result<LookupTables> {
    check_dim(pcb, query)?;
    let k = pcb.k();
    let mut values = Vec::with_capacity(pcb.m() * k);
    for i in 0..pcb.m() {
        let qs = pcb.sub(query, i);
        let book = pcb.book(i);
        values.extend((0..k).map(|j| ip(qs, book.atom(j))));
    }
    Ok(LookupTables {
        m: pcb.m(),
        k,
        values,
        q_sq_norm: ip(query, query),
    })
}

/// SPQ-coded gallery in structure-of-arrays layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SpqIndex {
    pcb: ProductCodebook,
    sparsity: usize,
    n: usize,
    ids: Vec<IdPlane>,
    coeffs: Vec<Vec<f32>>,
    sq_norms: Vec<f32>,
}

impl SpqIndex {
    pub fn empty(pcb: ProductCodebook, sparsity: usize) -> Result<Self> {
        if sparsity == 0 || sparsity > pcb.k() {
            return Err(Error::invalid(format!("sparse level {sparsity} outside 1..={}", pcb.k())));
        }
        let planes = pcb.m() * sparsity;
        Ok(Self {
            ids: (0..planes).map(|_| IdPlane::zeros(pcb.k(), 0)).collect(),
            coeffs: vec![Vec::new(); planes],
            sq_norms: Vec::new(),
            n: 0,
            sparsity,
            pcb,
        })
    }

    /// OMP-encode every gallery vector (in parallel over row chunks).
    pub fn build(gallery: &VectorSet, pcb: ProductCodebook, sparsity: usize) -> Result<Self> {
        check_set(&pcb, gallery)?;
        let mut index = Self::empty(pcb, sparsity)?;
        let (n, m, l) = (gallery.n(), index.pcb.m(), sparsity);
        let chunks: Vec<(Vec<u16>, Vec<f32>)> = (0..n.div_ceil(BUILD_CHUNK))
            .into_par_iter()
            .map(|c| {
                let rows = c * BUILD_CHUNK..((c + 1) * BUILD_CHUNK).min(n);
                let mut ids = vec![0u16; rows.len() * m * l];
                let mut coeffs = vec![0.0f32; rows.len() * m * l];
                for i in 0..m {
                    let mut omp = Omp::new(index.pcb.book(i), l).expect("validated sparse level");
                    for (r, j) in rows.clone().enumerate() {
                        let at = (r * m + i) * l;
                        omp.encode_into(
                            index.pcb.sub(gallery.row(j), i),
                            &mut ids[at..at + l],
                            &mut coeffs[at..at + l],
                        );
                    }
                }
                (ids, coeffs)
            })
            .collect();

        let k = index.pcb.k();
        index.ids = (0..m * l).map(|_| IdPlane::with_capacity(k, n)).collect();
        index.coeffs = (0..m * l).map(|_| Vec::with_capacity(n)).collect();
        for (ids, coeffs) in &chunks {
            for (row_ids, row_co) in ids.chunks_exact(m * l).zip(coeffs.chunks_exact(m * l)) {
                for p in 0..m * l {
                    index.ids[p].push(row_ids[p]);
                    index.coeffs[p].push(row_co[p]);
                }
            }
        }
        index.sq_norms = gallery.rows().map(|x| ip(x, x)).collect();
        index.n = n;
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn codebook(&self) -> &ProductCodebook {
        &self.pcb
    }

    pub fn sparsity(&self) -> usize {
        self.sparsity
    }

    pub fn sq_norms(&self) -> &[f32] {
        &self.sq_norms
    }

    /// Stored code of item `j`.
    pub fn code(&self, j: usize) -> SpqCode {
        let l = self.sparsity;
        let codes = (0..self.pcb.m())
            .map(|i| {
                let ids: Vec<u16> = (0..l).map(|s| self.ids[i * l + s].get(j)).collect();
                let coeffs: Vec<f32> = (0..l).map(|s| self.coeffs[i * l + s][j]).collect();
                let used = coeffs.iter().filter(|&&c| c != 0.0).count().max(1);
                SparseCode { ids, coeffs, used }
            })
            .collect();
        SpqCode {
            codes,
            x_sq_norm: self.sq_norms[j],
        }
    }

    pub fn adc_tables(&self, query: &[f32]) -> Result<LookupTables> {
        adc_tables(query, &self.pcb)
    }

    /// Tables for a sparse-coded query: `T_i[j] = Σ_l' β_l' G_i[j][id'_l']`.
    pub fn sdc_tables(&self, query: &[f32]) -> Result<LookupTables> {
        let code = spq_encode(query, &self.pcb, self.sparsity)?;
        Ok(self.sdc_tables_for_code(&code))
    }

    pub fn sdc_tables_for_code(&self, code: &SpqCode) -> LookupTables {
        let k = self.pcb.k();
        let mut values = vec![0.0f32; self.pcb.m() * k];
        for (i, c) in code.codes.iter().enumerate() {
            let gram = self.pcb.book(i).gram();
            let row = &mut values[i * k..(i + 1) * k];
            for (j, v) in row.iter_mut().enumerate() {
                let g = &gram[j * k..(j + 1) * k];
                let mut s = 0.0f32;
                for (&b, &beta) in c.ids.iter().zip(&c.coeffs) {
                    s += beta * g[b as usize];
                }
                *v = s;
            }
        }
        LookupTables {
            m: self.pcb.m(),
            k,
            values,
            q_sq_norm: code.x_sq_norm,
        }
    }

    /// Scores of items in `range` written to `out` (same length as `range`).
    pub fn scan(&self, tables: &LookupTables, range: Range<usize>, out: &mut [f32], stats: &mut SearchStats) {
        scan_sparse(
            &self.ids,
            &self.coeffs,
            self.sparsity,
            &self.sq_norms,
            tables,
            range,
            out,
            stats,
        );
    }

    fn search_tables(&self, tables: &LookupTables, p: usize, stats: &mut SearchStats) -> Vec<ScoredId> {
        let t = Instant::now();
        let mut scores = vec![0.0f32; self.n];
        self.scan(tables, 0..self.n, &mut scores, stats);
        stats.scan += t.elapsed();
        let t = Instant::now();
        let mut sel = TopK::new(p);
        sel.push_slice(0, &scores);
        let out = sel.into_sorted();
        stats.select += t.elapsed();
        stats.queries += 1;
        out
    }

    pub fn adc_search_with_stats(&self, query: &[f32], p: usize, stats: &mut SearchStats) -> Result<Vec<ScoredId>> {
        let t = Instant::now();
        let tables = self.adc_tables(query)?;
        stats.tables += t.elapsed();
        Ok(self.search_tables(&tables, p, stats))
    }

    pub fn sdc_search_with_stats(&self, query: &[f32], p: usize, stats: &mut SearchStats) -> Result<Vec<ScoredId>> {
        let t = Instant::now();
        let tables = self.sdc_tables(query)?;
        stats.tables += t.elapsed();
        Ok(self.search_tables(&tables, p, stats))
    }

    /// Top-`p` by asymmetric distance.
    pub fn adc_search(&self, query: &[f32], p: usize) -> Result<Vec<ScoredId>> {
        self.adc_search_with_stats(query, p, &mut SearchStats::default())
    }

    /// Top-`p` by symmetric distance (query coded at the index's `L`).
    pub fn sdc_search(&self, query: &[f32], p: usize) -> Result<Vec<ScoredId>> {
        self.sdc_search_with_stats(query, p, &mut SearchStats::default())
    }

    pub(crate) fn write_block(&self, w: &mut ByteWriter) {
        w.magic(MAGIC);
        w.u32(VERSION);
        w.u64(self.n as u64);
        w.u32(self.pcb.m() as u32);
        w.u32(self.pcb.k() as u32);
        w.u32(self.sparsity as u32);
        for p in &self.ids {
            p.write(w);
        }
        for c in &self.coeffs {
            w.f32s(c);
        }
        w.f32s(&self.sq_norms);
        self.pcb.write_block(w);
    }

    pub(crate) fn read_block(r: &mut ByteReader<'_>) -> Result<Self> {
        r.magic(MAGIC)?;
        r.version()?;
        let n = r.usize64()?;
        let m = r.usize32()?;
        let k = r.usize32()?;
        let sparsity = r.usize32()?;
        if m == 0 || k == 0 || sparsity == 0 || sparsity > k {
            return Err(r.err(format!("invalid header m={m}, k={k}, L={sparsity}")));
        }
        let planes = m * sparsity;
        let ids = (0..planes).map(|_| IdPlane::read(r, k, n)).collect::<Result<Vec<_>>>()?;
        let coeffs = (0..planes).map(|_| r.f32s(n)).collect::<Result<Vec<_>>>()?;
        let sq_norms = r.f32s(n)?;
        let at = r.pos();
        let pcb = ProductCodebook::read_block(r)?;
        if pcb.m() != m || pcb.k() != k {
            return Err(Error::format(at, "embedded codebook does not match index header"));
        }
        Ok(Self {
            pcb,
            sparsity,
            n,
            ids,
            coeffs,
            sq_norms,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::default();
        self.write_block(&mut w);
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        let idx = Self::read_block(&mut r)?;
        r.finish()?;
        Ok(idx)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
