//! Hard-assignment product quantization baseline.
//!
//! Centroids are the raw k-means means (no normalization). Codes are stored
//! as one id plane per subspace. The `SPQP` code file is
//!
//! ```text
//! "SPQP" | version u32 | m u32 | k u32 | n u64 | m planes of n ids (u8 if k <= 256, else u16)
//! ```
//!
//! and the centroids go into an `SPQB` file with the unit-norm flag cleared.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::codebook::{kmeans_fit, read_centroid_block, write_centroid_block};
use crate::dataset::VectorSet;
use crate::error::{Error, Result};
use crate::format::{ByteReader, ByteWriter, VERSION};
use crate::kernels::{l2sq, ScoredId, TopK};
use crate::scan::{scan_hard, IdPlane, LookupTables, SearchStats};
use crate::util::{mix_seed, offsets};

const MAGIC: &[u8; 4] = b"SPQP";

/// Per-subspace raw centroids plus the symmetric centroid distance tables.
#[derive(Debug, Clone, PartialEq)]
pub struct PqCodebook {
    k: usize,
    dims: Vec<usize>,
    offsets: Vec<usize>,
    centroids: Vec<Vec<f32>>,
    sdc: Vec<Vec<f32>>,
}

/// One centroid id per subspace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PqCode {
    pub ids: Vec<u16>,
}

impl PqCodebook {
    pub fn new(dims: Vec<usize>, centroids: Vec<Vec<f32>>) -> Result<Self> {
        if dims.is_empty() || dims.len() != centroids.len() || dims.contains(&0) {
            return Err(Error::invalid("need one non-empty centroid set per subspace"));
        }
        let k = centroids[0].len() / dims[0];
        if k == 0 || k > u16::MAX as usize + 1 {
            return Err(Error::invalid(format!("k = {k} outside 1..=65536")));
        }
        for (c, &d) in centroids.iter().zip(&dims) {
            if c.len() != k * d {
                return Err(Error::invalid("all subspaces must have k centroids"));
            }
        }
        let sdc = centroids
            .iter()
            .zip(&dims)
            .map(|(c, &d)| {
                let mut t = vec![0.0f32; k * k];
                for a in 0..k {
                    for b in a..k {
                        let v = l2sq(&c[a * d..(a + 1) * d], &c[b * d..(b + 1) * d]);
                        t[a * k + b] = v;
                        t[b * k + a] = v;
                    }
                }
                t
            })
            .collect();
        Ok(Self {
            k,
            offsets: offsets(&dims),
            dims,
            centroids,
            sdc,
        })
    }

    /// k-means per subspace (in parallel, seeds derived from `seed`).
    /// Returns the codebook and the final per-subspace mean distortion.
    pub fn train(data: &VectorSet, dims: &[usize], k: usize, iters: usize, seed: u64) -> Result<(Self, Vec<f64>)> {
        if dims.iter().sum::<usize>() != data.d() || dims.contains(&0) {
            return Err(Error::DimensionMismatch {
                expected: data.d(),
                actual: dims.iter().sum(),
            });
        }
        let offs = offsets(dims);
        let fits: Vec<(Vec<f32>, f64)> = (0..dims.len())
            .into_par_iter()
            .map(|i| {
                let slice = data.columns(offs[i], dims[i])?;
                let fit = kmeans_fit(&slice, k, iters, mix_seed(seed, i as u64))?;
                let e = fit.final_distortion();
                Ok((fit.centroids, e))
            })
            .collect::<Result<_>>()?;
        let (centroids, dist): (Vec<_>, Vec<_>) = fits.into_iter().unzip();
        Ok((Self::new(dims.to_vec(), centroids)?, dist))
    }

    pub fn m(&self) -> usize {
        self.dims.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn subspace_dims(&self) -> &[usize] {
        &self.dims
    }

    #[inline]
    pub fn centroid(&self, i: usize, j: usize) -> &[f32] {
        let d = self.dims[i];
        &self.centroids[i][j * d..(j + 1) * d]
    }

    #[inline]
    fn sub<'a>(&self, x: &'a [f32], i: usize) -> &'a [f32] {
        &x[self.offsets[i]..self.offsets[i + 1]]
    }

    fn check_dim(&self, x: &[f32]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    fn nearest(&self, x: &[f32], i: usize) -> (u16, f32) {
        let xs = self.sub(x, i);
        let d = self.dims[i];
        let mut best = (0u16, f32::INFINITY);
        for (j, c) in self.centroids[i].chunks_exact(d).enumerate() {
            let v = l2sq(xs, c);
            if v < best.1 {
                best = (j as u16, v);
            }
        }
        best
    }

    /// Nearest centroid per subspace, ties to the lower index.
    pub fn encode(&self, x: &[f32]) -> Result<PqCode> {
        self.check_dim(x)?;
        Ok(PqCode {
            ids: (0..self.m()).map(|i| self.nearest(x, i).0).collect(),
        })
    }

    pub fn reconstruct(&self, code: &PqCode) -> Result<Vec<f32>> {
        if code.ids.len() != self.m() || code.ids.iter().any(|&a| a as usize >= self.k) {
            return Err(Error::invalid("code does not match codebook"));
        }
        let mut out = Vec::with_capacity(self.dim());
        for (i, &a) in code.ids.iter().enumerate() {
            out.extend_from_slice(self.centroid(i, a as usize));
        }
        Ok(out)
    }

    /// `Σ_i ‖x^i − q_i(x)‖²`, accumulated in f64.
    pub fn vector_distortion(&self, x: &[f32]) -> Result<f64> {
        self.check_dim(x)?;
        let mut total = 0.0f64;
        for i in 0..self.m() {
            let (a, _) = self.nearest(x, i);
            let c = self.centroid(i, a as usize);
            total += self
                .sub(x, i)
                .iter()
                .zip(c)
                .map(|(&u, &v)| (u as f64 - v as f64).powi(2))
                .sum::<f64>();
        }
        Ok(total)
    }

    /// `T_i[j] = ‖q^i − c^i_j‖²`.
    pub fn adc_tables(&self, query: &[f32]) -> Result<LookupTables> {
        self.check_dim(query)?;
        let mut values = Vec::with_capacity(self.m() * self.k);
        for i in 0..self.m() {
            let qs = self.sub(query, i);
            values.extend(self.centroids[i].chunks_exact(self.dims[i]).map(|c| l2sq(qs, c)));
        }
        Ok(LookupTables {
            m: self.m(),
            k: self.k,
            values,
            q_sq_norm: 0.0,
        })
    }

    /// Rows of the centroid distance tables selected by the query's code.
    pub fn sdc_tables(&self, code: &PqCode) -> LookupTables {
        let mut values = Vec::with_capacity(self.m() * self.k);
        for (i, &a) in code.ids.iter().enumerate() {
            let a = a as usize;
            values.extend_from_slice(&self.sdc[i][a * self.k..(a + 1) * self.k]);
        }
        LookupTables {
            m: self.m(),
            k: self.k,
            values,
            q_sq_norm: 0.0,
        }
    }

    /// `‖c^i_a − c^i_b‖²`.
    pub fn centroid_distance(&self, i: usize, a: usize, b: usize) -> f32 {
        self.sdc[i][a * self.k + b]
    }

    pub(crate) fn write_block(&self, w: &mut ByteWriter) {
        let atoms: Vec<&[f32]> = self.centroids.iter().map(|c| c.as_slice()).collect();
        write_centroid_block(w, &self.dims, self.k, &atoms, None);
    }

    pub(crate) fn read_block(r: &mut ByteReader<'_>) -> Result<Self> {
        let block = read_centroid_block(r)?;
        if block.grams.is_some() {
            return Err(r.err("expected raw PQ centroids, found a unit-norm codebook"));
        }
        Self::new(block.dims, block.atoms)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::default();
        self.write_block(&mut w);
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        let cb = Self::read_block(&mut r)?;
        r.finish()?;
        Ok(cb)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

pub fn pq_encode(x: &[f32], pcb: &PqCodebook) -> Result<PqCode> {
    pcb.encode(x)
}

/// Mean PQ distortion over a gallery.
pub fn pq_distortion(gallery: &VectorSet, pcb: &PqCodebook) -> Result<f64> {
    if gallery.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = gallery
        .rows()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|x| pcb.vector_distortion(x))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    Ok(total / gallery.n() as f64)
}

/// PQ-coded gallery.
#[derive(Debug, Clone, PartialEq)]
pub struct PqIndex {
    codebook: PqCodebook,
    n: usize,
    planes: Vec<IdPlane>,
}

impl PqIndex {
    pub fn build(gallery: &VectorSet, codebook: PqCodebook) -> Result<Self> {
        if gallery.d() != codebook.dim() {
            return Err(Error::DimensionMismatch {
                expected: codebook.dim(),
                actual: gallery.d(),
            });
        }
        let codes: Vec<PqCode> = (0..gallery.n())
            .into_par_iter()
            .map(|j| codebook.encode(gallery.row(j)))
            .collect::<Result<_>>()?;
        let mut planes: Vec<IdPlane> = (0..codebook.m())
            .map(|_| IdPlane::with_capacity(codebook.k(), gallery.n()))
            .collect();
        for c in &codes {
            for (p, &a) in planes.iter_mut().zip(&c.ids) {
                p.push(a);
            }
        }
        Ok(Self {
            n: gallery.n(),
            codebook,
            planes,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn codebook(&self) -> &PqCodebook {
        &self.codebook
    }

    pub fn code(&self, j: usize) -> PqCode {
        PqCode {
            ids: self.planes.iter().map(|p| p.get(j)).collect(),
        }
    }

    /// Score every item in `range` against precomputed tables.
    pub fn scan(&self, tables: &LookupTables, range: std::ops::Range<usize>, out: &mut [f32], stats: &mut SearchStats) {
        scan_hard(&self.planes, tables, range, out, stats);
    }

    fn search_tables(&self, tables: LookupTables, p: usize, stats: &mut SearchStats) -> Vec<ScoredId> {
        let t = Instant::now();
        let mut scores = vec![0.0f32; self.n];
        self.scan(&tables, 0..self.n, &mut scores, stats);
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
        let tables = self.codebook.adc_tables(query)?;
        stats.tables += t.elapsed();
        Ok(self.search_tables(tables, p, stats))
    }

    pub fn sdc_search_with_stats(&self, query: &[f32], p: usize, stats: &mut SearchStats) -> Result<Vec<ScoredId>> {
        let t = Instant::now();
        let code = self.codebook.encode(query)?;
        let tables = self.codebook.sdc_tables(&code);
        stats.tables += t.elapsed();
        Ok(self.search_tables(tables, p, stats))
    }

    pub fn adc_search(&self, query: &[f32], p: usize) -> Result<Vec<ScoredId>> {
        self.adc_search_with_stats(query, p, &mut SearchStats::default())
    }

    pub fn sdc_search(&self, query: &[f32], p: usize) -> Result<Vec<ScoredId>> {
        self.sdc_search_with_stats(query, p, &mut SearchStats::default())
    }

    pub(crate) fn write_codes(&self, w: &mut ByteWriter) {
        w.magic(MAGIC);
        w.u32(VERSION);
        w.u32(self.codebook.m() as u32);
        w.u32(self.codebook.k() as u32);
        w.u64(self.n as u64);
        for p in &self.planes {
            p.write(w);
        }
    }

    pub(crate) fn read_codes(r: &mut ByteReader<'_>, codebook: PqCodebook) -> Result<Self> {
        r.magic(MAGIC)?;
        r.version()?;
        let m = r.usize32()?;
        let k = r.usize32()?;
        let n = r.usize64()?;
        if m != codebook.m() || k != codebook.k() {
            return Err(r.err(format!(
                "codes are m={m}, k={k} but codebook is m={}, k={}",
                codebook.m(),
                codebook.k()
            )));
        }
        let planes = (0..m).map(|_| IdPlane::read(r, k, n)).collect::<Result<_>>()?;
        Ok(Self { codebook, n, planes })
    }

    /// `SPQP` bytes (codes only).
    pub fn codes_to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::default();
        self.write_codes(&mut w);
        w.buf
    }

    pub fn from_bytes(codes: &[u8], codebook: PqCodebook) -> Result<Self> {
        let mut r = ByteReader::new(codes);
        let idx = Self::read_codes(&mut r, codebook)?;
        r.finish()?;
        Ok(idx)
    }

    pub fn save_codes(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.codes_to_bytes())?;
        Ok(())
    }

    pub fn load(codes_path: impl AsRef<Path>, codebook: PqCodebook) -> Result<Self> {
        Self::from_bytes(&std::fs::read(codes_path)?, codebook)
    }
}
