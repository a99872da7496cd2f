//! Codebooks of unit-norm atoms and their training.
//!
//! Two trainers produce a [`Codebook`]:
//!
//! * [`kmeans_train`]: Lloyd iterations, centroids normalized at the end.
//! * [`odl_train`]: online dictionary learning with an L0 (OMP) sparse-coding
//!   step and block-coordinate atom updates driven by the accumulated
//!   statistics `A = Σ ααᵀ` and `B = Σ xαᵀ`.
//!
//! A [`ProductCodebook`] holds one codebook per subspace. Its file format
//! (`SPQB`) is:
//!
//! ```text
//! "SPQB" | version u32 | flags u32 | m u32 | k u32 | dims[m] u32
//! atoms: for each subspace, k * dims[i] f32
//! gram:  for each subspace, k * k f32          (only when flags & 1)
//! ```
//!
//! Flag bit 0 marks unit-norm atoms with Gram matrices. The PQ baseline
//! stores its raw k-means centroids in the same layout with the flag cleared.

use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::VectorSet;
use crate::error::{Error, Result};
use crate::format::{ByteReader, ByteWriter, VERSION};
use crate::kernels::{ip, l2sq};
use crate::sparse::Omp;
use crate::util::{mix_seed, offsets};

pub const DEFAULT_KMEANS_ITERS: usize = 25;
pub const DEFAULT_ODL_EPOCHS: usize = 5;
pub const DEFAULT_BATCH_SIZE: usize = 256;

pub(crate) const MAGIC: &[u8; 4] = b"SPQB";
const FLAG_UNIT: u32 = 1;
const NORM_TOL: f32 = 1e-5;

/// `k` unit-norm atoms of dimension `dim` plus their Gram matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    k: usize,
    dim: usize,
    atoms: Vec<f32>,
    gram: Vec<f32>,
}

impl Codebook {
    /// Atoms must already be unit-norm (within `1e-5`).
    pub fn from_unit_atoms(dim: usize, atoms: Vec<f32>) -> Result<Self> {
        check_shape(dim, &atoms)?;
        for (j, a) in atoms.chunks_exact(dim).enumerate() {
            let norm = ip(a, a).sqrt();
            if (norm - 1.0).abs() > NORM_TOL {
                return Err(Error::invalid(format!("atom {j} has norm {norm}")));
            }
        }
        Ok(Self::new_unchecked(dim, atoms))
    }

    /// Normalizes every row; a zero row is an error.
    pub fn from_raw(dim: usize, mut atoms: Vec<f32>) -> Result<Self> {
        check_shape(dim, &atoms)?;
        for (j, a) in atoms.chunks_exact_mut(dim).enumerate() {
            if !normalize(a) {
                return Err(Error::Degenerate(format!("atom {j} has zero norm")));
            }
        }
        Ok(Self::new_unchecked(dim, atoms))
    }

    pub(crate) fn new_unchecked(dim: usize, atoms: Vec<f32>) -> Self {
        let k = atoms.len() / dim;
        let gram = compute_gram(&atoms, k, dim);
        Self { k, dim, atoms, gram }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn atom(&self, j: usize) -> &[f32] {
        &self.atoms[j * self.dim..(j + 1) * self.dim]
    }

    pub fn atoms(&self) -> &[f32] {
        &self.atoms
    }

    /// Row-major `k x k` matrix of atom dot products.
    pub fn gram(&self) -> &[f32] {
        &self.gram
    }

    #[inline]
    pub fn gram_row(&self, j: usize) -> &[f32] {
        &self.gram[j * self.k..(j + 1) * self.k]
    }
}

fn check_shape(dim: usize, atoms: &[f32]) -> Result<()> {
    if dim == 0 || atoms.is_empty() || !atoms.len().is_multiple_of(dim) {
        return Err(Error::invalid(format!(
            "{} values do not form k >= 1 atoms of dimension {dim}",
            atoms.len()
        )));
    }
    if let Some(i) = atoms.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    Ok(())
}

/// Scale to unit norm in f64; false for a zero vector.
fn normalize(a: &mut [f32]) -> bool {
    let norm = a.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt();
    if !norm.is_finite() || norm <= 0.0 {
        return false;
    }
    for v in a.iter_mut() {
        *v = (*v as f64 / norm) as f32;
    }
    true
}

pub(crate) fn compute_gram(atoms: &[f32], k: usize, dim: usize) -> Vec<f32> {
    let mut g = vec![0.0f32; k * k];
    for a in 0..k {
        let ra = &atoms[a * dim..(a + 1) * dim];
        for b in a..k {
            let v = ip(ra, &atoms[b * dim..(b + 1) * dim]);
            g[a * k + b] = v;
            g[b * k + a] = v;
        }
    }
    g
}

/// Gram matrix of a codebook, recomputed from its atoms.
pub fn gram(cb: &Codebook) -> Vec<f32> {
    compute_gram(cb.atoms(), cb.k(), cb.dim())
}

/// Result of a Lloyd run, before any normalization.
#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub k: usize,
    pub dim: usize,
    pub centroids: Vec<f32>,
    pub assignment: Vec<u32>,
    /// Mean squared distortion after each assignment step (`iters + 1` values).
    pub history: Vec<f64>,
}

impl KMeansFit {
    pub fn centroid(&self, j: usize) -> &[f32] {
        &self.centroids[j * self.dim..(j + 1) * self.dim]
    }

    pub fn final_distortion(&self) -> f64 {
        *self.history.last().unwrap_or(&0.0)
    }
}

fn nearest(x: &[f32], centroids: &[f32], dim: usize) -> (u32, f32) {
    let mut best = (0u32, f32::INFINITY);
    for (j, c) in centroids.chunks_exact(dim).enumerate() {
        let d = l2sq(x, c);
        if d < best.1 {
            best = (j as u32, d);
        }
    }
    best
}

fn assign(data: &VectorSet, centroids: &[f32], assignment: &mut [u32], dists: &mut [f32]) -> f64 {
    let dim = data.d();
    let mut total = 0.0f64;
    for (i, x) in data.rows().enumerate() {
        let (j, d) = nearest(x, centroids, dim);
        assignment[i] = j;
        dists[i] = d;
        total += d as f64;
    }
    total / data.n() as f64
}

/// Lloyd's algorithm from a seeded sample of `k` distinct rows. Empty clusters
/// are moved onto the points currently farthest from their centroids.
pub fn kmeans_fit(data: &VectorSet, k: usize, iters: usize, seed: u64) -> Result<KMeansFit> {
    let (n, dim) = (data.n(), data.d());
    if k == 0 || n < k {
        return Err(Error::invalid(format!("k-means needs 1 <= k <= n (k={k}, n={n})")));
    }
    if iters == 0 {
        return Err(Error::invalid("k-means needs at least one iteration"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = index::sample(&mut rng, n, k).into_vec();
    let mut centroids = Vec::with_capacity(k * dim);
    for &i in &init {
        centroids.extend_from_slice(data.row(i));
    }

    let mut assignment = vec![0u32; n];
    let mut dists = vec![0.0f32; n];
    let mut history = Vec::with_capacity(iters + 1);
    let mut sums = vec![0.0f64; k * dim];
    let mut counts = vec![0usize; k];

    for _ in 0..iters {
        history.push(assign(data, &centroids, &mut assignment, &mut dists));

        sums.iter_mut().for_each(|v| *v = 0.0);
        counts.iter_mut().for_each(|v| *v = 0);
        for (i, x) in data.rows().enumerate() {
            let j = assignment[i] as usize;
            counts[j] += 1;
            for (s, &v) in sums[j * dim..(j + 1) * dim].iter_mut().zip(x) {
                *s += v as f64;
            }
        }
        let mut far: Option<Vec<usize>> = None;
        let mut next_far = 0;
        for j in 0..k {
            let c = &mut centroids[j * dim..(j + 1) * dim];
            if counts[j] > 0 {
                let inv = 1.0 / counts[j] as f64;
                for (cv, &s) in c.iter_mut().zip(&sums[j * dim..(j + 1) * dim]) {
                    *cv = (s * inv) as f32;
                }
            } else {
                let order = far.get_or_insert_with(|| farthest_first(&dists));
                let p = order[next_far % n];
                next_far += 1;
                c.copy_from_slice(data.row(p));
            }
        }
    }
    history.push(assign(data, &centroids, &mut assignment, &mut dists));

    Ok(KMeansFit {
        k,
        dim,
        centroids,
        assignment,
        history,
    })
}

/// Point indices by decreasing distance, ties to the lower index.
fn farthest_first(dists: &[f32]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dists.len()).collect();
    order.sort_by(|&a, &b| dists[b].total_cmp(&dists[a]).then(a.cmp(&b)));
    order
}

/// k-means codebook: Lloyd centroids scaled to unit norm.
///
/// A centroid with (near) zero norm is replaced by the data point farthest
/// from it that has non-zero norm; the call fails only if `k` consecutive
/// candidates are unusable.
pub fn kmeans_train(data: &VectorSet, k: usize, iters: usize, seed: u64) -> Result<Codebook> {
    let fit = kmeans_fit(data, k, iters, seed)?;
    normalize_centroids(data, fit.centroids, k)
}

fn data_scale(data: &VectorSet) -> f64 {
    let total: f64 = data.as_slice().iter().map(|&v| v as f64 * v as f64).sum();
    (total / data.n().max(1) as f64).sqrt()
}

fn normalize_centroids(data: &VectorSet, mut centroids: Vec<f32>, k: usize) -> Result<Codebook> {
    let dim = data.d();
    let tiny = 1e-6 * data_scale(data);
    for j in 0..k {
        let c = &mut centroids[j * dim..(j + 1) * dim];
        let norm = c.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt();
        if norm > tiny && normalize(c) {
            continue;
        }
        let dists: Vec<f32> = data.rows().map(|x| l2sq(x, c)).collect();
        let order = farthest_first(&dists);
        let pick = order.iter().take(k).find(|&&p| {
            let x = data.row(p);
            ip(x, x).sqrt() as f64 > tiny
        });
        match pick {
            Some(&p) => {
                c.copy_from_slice(data.row(p));
                normalize(c);
            }
            None => {
                return Err(Error::Degenerate(format!(
                    "centroid {j} has zero norm and {k} re-seed candidates were zero vectors"
                )))
            }
        }
    }
    Ok(Codebook::new_unchecked(dim, centroids))
}

/// Online dictionary learning settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OdlParams {
    pub k: usize,
    pub sparsity: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl OdlParams {
    pub fn new(k: usize, sparsity: usize, seed: u64) -> Self {
        Self {
            k,
            sparsity,
            epochs: DEFAULT_ODL_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OdlFit {
    pub codebook: Codebook,
    /// Mean of ½‖Cα − x‖² over the held-out rows: at initialization, then
    /// after every epoch.
    pub objective: Vec<f64>,
    /// Atoms re-seeded because no sample selected them during an epoch.
    pub reseeded: usize,
}

/// Split into (train, held-out) row ids. Small sets evaluate on the training rows.
fn holdout_split(n: usize, k: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let hold = (n / 10).min(10_000);
    if hold == 0 || n - hold < k {
        return (perm.clone(), perm);
    }
    let held = perm.split_off(n - hold);
    (perm, held)
}

fn mean_half_objective(rows: &[usize], data: &VectorSet, omp: &mut Omp<'_>) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let mut total = 0.0f64;
    for &i in rows {
        total += 0.5 * omp.encode_distortion(data.row(i));
    }
    total / rows.len() as f64
}

/// Online dictionary learning (L0 variant).
///
/// Each mini-batch is sparse-coded with OMP against the current atoms; the
/// statistics `A += ααᵀ`, `B += xαᵀ` are accumulated and every atom receives
/// one block-coordinate step `u_j = c_j + (b_j − C a_j) / A_jj` followed by
/// normalization to unit length.
pub fn odl_fit(data: &VectorSet, params: &OdlParams) -> Result<OdlFit> {
    let (n, dim, k, sparsity) = (data.n(), data.d(), params.k, params.sparsity);
    if k == 0 || n < k {
        return Err(Error::invalid(format!("dictionary learning needs 1 <= k <= n (k={k}, n={n})")));
    }
    if sparsity == 0 || sparsity > k {
        return Err(Error::invalid(format!("sparse level {sparsity} outside 1..={k}")));
    }
    if params.epochs == 0 || params.batch_size == 0 {
        return Err(Error::invalid("epochs and batch size must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let (mut train, held) = holdout_split(n, k, &mut rng);
    let tiny = 1e-6 * data_scale(data);

    // initial atoms: first k usable rows of a shuffled training order
    let mut atoms = Vec::with_capacity(k * dim);
    let mut order = train.clone();
    order.shuffle(&mut rng);
    for &i in &order {
        if atoms.len() == k * dim {
            break;
        }
        let x = data.row(i);
        if (ip(x, x).sqrt() as f64) > tiny {
            let start = atoms.len();
            atoms.extend_from_slice(x);
            normalize(&mut atoms[start..]);
        }
    }
    if atoms.len() < k * dim {
        return Err(Error::Degenerate(format!(
            "fewer than {k} non-zero training rows"
        )));
    }

    let mut cb = Codebook::new_unchecked(dim, atoms.clone());
    let mut objective = vec![mean_half_objective(&held, data, &mut Omp::new(&cb, sparsity)?)];

    let mut a_stat = vec![0.0f64; k * k];
    let mut b_stat = vec![0.0f64; k * dim];
    let mut work = vec![0.0f64; dim];
    let mut ids = vec![0u16; sparsity];
    let mut coeffs = vec![0.0f32; sparsity];
    let mut reseeded = 0usize;

    for _ in 0..params.epochs {
        train.shuffle(&mut rng);
        let mut usage = vec![0usize; k];
        for batch in train.chunks(params.batch_size) {
            {
                let mut omp = Omp::new(&cb, sparsity)?;
                for &i in batch {
                    let x = data.row(i);
                    let used = omp.encode_into(x, &mut ids, &mut coeffs);
                    for s in 0..used {
                        let (a, ca) = (ids[s] as usize, coeffs[s] as f64);
                        if ca == 0.0 {
                            continue;
                        }
                        usage[a] += 1;
                        for t in 0..used {
                            a_stat[a * k + ids[t] as usize] += ca * coeffs[t] as f64;
                        }
                        for (b, &v) in b_stat[a * dim..(a + 1) * dim].iter_mut().zip(x) {
                            *b += ca * v as f64;
                        }
                    }
                }
            }
            update_atoms(&mut atoms, &a_stat, &b_stat, k, dim, &mut work);
            cb = Codebook::new_unchecked(dim, atoms.clone());
        }

        let dead: Vec<usize> = (0..k).filter(|&j| usage[j] == 0).collect();
        if !dead.is_empty() {
            let mut candidates = train.iter().copied().filter(|&i| {
                let x = data.row(i);
                (ip(x, x).sqrt() as f64) > tiny
            });
            for &j in &dead {
                if let Some(i) = candidates.next() {
                    let c = &mut atoms[j * dim..(j + 1) * dim];
                    c.copy_from_slice(data.row(i));
                    normalize(c);
                    for t in 0..k {
                        a_stat[j * k + t] = 0.0;
                        a_stat[t * k + j] = 0.0;
                    }
                    b_stat[j * dim..(j + 1) * dim].iter_mut().for_each(|v| *v = 0.0);
                    reseeded += 1;
                }
            }
            cb = Codebook::new_unchecked(dim, atoms.clone());
        }
        objective.push(mean_half_objective(&held, data, &mut Omp::new(&cb, sparsity)?));
    }

    Ok(OdlFit {
        codebook: cb,
        objective,
        reseeded,
    })
}

/// One sweep of block-coordinate descent over the atoms.
fn update_atoms(atoms: &mut [f32], a_stat: &[f64], b_stat: &[f64], k: usize, dim: usize, u: &mut [f64]) {
    for j in 0..k {
        let ajj = a_stat[j * k + j];
        if ajj <= 1e-12 {
            continue;
        }
        for (t, v) in u.iter_mut().enumerate() {
            *v = b_stat[j * dim + t];
        }
        for l in 0..k {
            let a = a_stat[j * k + l];
            if a == 0.0 {
                continue;
            }
            for (v, &c) in u.iter_mut().zip(&atoms[l * dim..(l + 1) * dim]) {
                *v -= a * c as f64;
            }
        }
        let cj = &mut atoms[j * dim..(j + 1) * dim];
        for (v, &c) in u.iter_mut().zip(cj.iter()) {
            *v = *v / ajj + c as f64;
        }
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            for (c, &v) in cj.iter_mut().zip(u.iter()) {
                *c = (v / norm) as f32;
            }
        }
    }
}

pub fn odl_train(data: &VectorSet, k: usize, sparsity: usize, epochs: usize, seed: u64) -> Result<Codebook> {
    let params = OdlParams {
        epochs,
        ..OdlParams::new(k, sparsity, seed)
    };
    Ok(odl_fit(data, &params)?.codebook)
}

/// How per-subspace codebooks are learned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trainer {
    KMeans { iters: usize },
    Odl { epochs: usize, batch_size: usize },
}

impl Default for Trainer {
    fn default() -> Self {
        Trainer::Odl {
            epochs: DEFAULT_ODL_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
        }
    }
}

/// One codebook per contiguous subspace, all with the same `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductCodebook {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    books: Vec<Codebook>,
}

impl ProductCodebook {
    pub fn new(books: Vec<Codebook>) -> Result<Self> {
        let k = books.first().ok_or_else(|| Error::invalid("no subspaces"))?.k();
        if books.iter().any(|b| b.k() != k) {
            return Err(Error::invalid("all subspace codebooks must share k"));
        }
        let dims: Vec<usize> = books.iter().map(|b| b.dim()).collect();
        Ok(Self {
            offsets: offsets(&dims),
            dims,
            books,
        })
    }

    /// Train one codebook per subspace on the matching column slice of
    /// `data`. Subspaces are trained in parallel with seeds derived from
    /// `seed`. Also returns the mean OMP distortion at `sparsity` on each
    /// slice.
    pub fn train(
        data: &VectorSet,
        dims: &[usize],
        k: usize,
        sparsity: usize,
        trainer: Trainer,
        seed: u64,
    ) -> Result<(Self, Vec<f64>)> {
        if dims.iter().sum::<usize>() != data.d() || dims.contains(&0) {
            return Err(Error::DimensionMismatch {
                expected: data.d(),
                actual: dims.iter().sum(),
            });
        }
        let offs = offsets(dims);
        let trained: Vec<(Codebook, f64)> = (0..dims.len())
            .into_par_iter()
            .map(|i| {
                let slice = data.columns(offs[i], dims[i])?;
                let s = mix_seed(seed, i as u64);
                let cb = match trainer {
                    Trainer::KMeans { iters } => kmeans_train(&slice, k, iters, s)?,
                    Trainer::Odl { epochs, batch_size } => {
                        odl_fit(
                            &slice,
                            &OdlParams {
                                k,
                                sparsity,
                                epochs,
                                batch_size,
                                seed: s,
                            },
                        )?
                        .codebook
                    }
                };
                let mut omp = Omp::new(&cb, sparsity)?;
                let total: f64 = slice.rows().map(|x| omp.encode_distortion(x)).sum();
                Ok((cb, total / slice.n() as f64))
            })
            .collect::<Result<_>>()?;
        let (books, dist): (Vec<_>, Vec<_>) = trained.into_iter().unzip();
        Ok((Self::new(books)?, dist))
    }

    pub fn m(&self) -> usize {
        self.books.len()
    }

    pub fn k(&self) -> usize {
        self.books[0].k()
    }

    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn subspace_dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn book(&self, i: usize) -> &Codebook {
        &self.books[i]
    }

    pub fn books(&self) -> &[Codebook] {
        &self.books
    }

    #[inline]
    pub fn sub<'a>(&self, x: &'a [f32], i: usize) -> &'a [f32] {
        &x[self.offsets[i]..self.offsets[i + 1]]
    }

    pub(crate) fn write_block(&self, w: &mut ByteWriter) {
        let atoms: Vec<&[f32]> = self.books.iter().map(|b| b.atoms()).collect();
        let grams: Vec<&[f32]> = self.books.iter().map(|b| b.gram()).collect();
        write_centroid_block(w, &self.dims, self.k(), &atoms, Some(&grams));
    }

    pub(crate) fn read_block(r: &mut ByteReader<'_>) -> Result<Self> {
        let block = read_centroid_block(r)?;
        let grams = block
            .grams
            .ok_or_else(|| r.err("codebook block lacks Gram matrices (raw centroid file?)"))?;
        let mut books = Vec::with_capacity(block.dims.len());
        for ((dim, atoms), gram) in block.dims.iter().zip(block.atoms).zip(grams) {
            books.push(Codebook {
                k: block.k,
                dim: *dim,
                atoms,
                gram,
            });
        }
        Self::new(books)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::default();
        self.write_block(&mut w);
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        let pcb = Self::read_block(&mut r)?;
        r.finish()?;
        Ok(pcb)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

pub(crate) struct CentroidBlock {
    pub dims: Vec<usize>,
    pub k: usize,
    pub atoms: Vec<Vec<f32>>,
    pub grams: Option<Vec<Vec<f32>>>,
}

pub(crate) fn write_centroid_block(
    w: &mut ByteWriter,
    dims: &[usize],
    k: usize,
    atoms: &[&[f32]],
    grams: Option<&[&[f32]]>,
) {
    w.magic(MAGIC);
    w.u32(VERSION);
    w.u32(if grams.is_some() { FLAG_UNIT } else { 0 });
    w.u32(dims.len() as u32);
    w.u32(k as u32);
    for &d in dims {
        w.u32(d as u32);
    }
    for a in atoms {
        w.f32s(a);
    }
    if let Some(grams) = grams {
        for g in grams {
            w.f32s(g);
        }
    }
}

pub(crate) fn read_centroid_block(r: &mut ByteReader<'_>) -> Result<CentroidBlock> {
    r.magic(MAGIC)?;
    r.version()?;
    let flags = r.u32()?;
    let m = r.usize32()?;
    let k = r.usize32()?;
    if m == 0 || k == 0 {
        return Err(r.err("codebook with zero subspaces or zero atoms"));
    }
    let mut dims = Vec::with_capacity(m.min(1 << 16));
    for _ in 0..m {
        let d = r.usize32()?;
        if d == 0 {
            return Err(r.err("zero subspace dimension"));
        }
        dims.push(d);
    }
    let mut atoms = Vec::with_capacity(m);
    for &d in &dims {
        let len = k.checked_mul(d).ok_or_else(|| r.err("atom block overflows"))?;
        atoms.push(r.f32s(len)?);
    }
    let grams = if flags & FLAG_UNIT != 0 {
        let len = k.checked_mul(k).ok_or_else(|| r.err("gram block overflows"))?;
        let mut g = Vec::with_capacity(m);
        for _ in 0..m {
            g.push(r.f32s(len)?);
        }
        Some(g)
    } else {
        None
    };
    Ok(CentroidBlock { dims, k, atoms, grams })
}
