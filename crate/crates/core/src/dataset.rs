//! Vector datasets: the `.fvecs` / `.bvecs` / `.ivecs` file family, seeded
//! Gaussian synthesis and brute-force ground truth.
//!
//! Every record on disk is a little-endian `i32` dimension followed by that many
//! payload elements (`f32` for fvecs, `i32` for ivecs, `u8` for bvecs).

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian, WriteBytesExt};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{l2sq, TopK};

/// Element encoding of a vecs file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VecsFormat {
    /// `.fvecs`
    F32,
    /// `.bvecs`
    U8,
    /// `.ivecs`
    I32,
}

impl VecsFormat {
    fn elem_size(self) -> usize {
        match self {
            VecsFormat::F32 | VecsFormat::I32 => 4,
            VecsFormat::U8 => 1,
        }
    }

    /// Guess from a file extension (`fvecs`, `bvecs`, `ivecs`).
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "fvecs" => Some(VecsFormat::F32),
            "bvecs" => Some(VecsFormat::U8),
            "ivecs" => Some(VecsFormat::I32),
            _ => None,
        }
    }
}

/// Dense row-major set of `n` vectors of dimension `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorSet {
    n: usize,
    d: usize,
    data: Vec<f32>,
}

impl VectorSet {
    pub fn new(d: usize, data: Vec<f32>) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        if !data.len().is_multiple_of(d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: data.len() % d,
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            n: data.len() / d,
            d,
            data,
        })
    }

    pub fn empty(d: usize) -> Result<Self> {
        Self::new(d, Vec::new())
    }

    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let d = rows.first().map(|r| r.as_ref().len()).ok_or(Error::EmptySet)?;
        let mut data = Vec::with_capacity(rows.len() * d);
        for r in rows {
            let r = r.as_ref();
            if r.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(d, data)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.d)
    }

    /// Column slice `[start, start + width)` of every row.
    pub fn columns(&self, start: usize, width: usize) -> Result<VectorSet> {
        if width == 0 || start + width > self.d {
            return Err(Error::invalid(format!(
                "column range {start}..{} outside dimension {}",
                start + width,
                self.d
            )));
        }
        let mut data = Vec::with_capacity(self.n * width);
        for row in self.rows() {
            data.extend_from_slice(&row[start..start + width]);
        }
        Ok(VectorSet {
            n: self.n,
            d: width,
            data,
        })
    }

    pub fn select(&self, ids: &[usize]) -> VectorSet {
        let mut data = Vec::with_capacity(ids.len() * self.d);
        for &i in ids {
            data.extend_from_slice(self.row(i));
        }
        VectorSet {
            n: ids.len(),
            d: self.d,
            data,
        }
    }

    /// Uniform sample of `count` distinct rows (all rows when `count >= n`),
    /// kept in original order.
    pub fn sample(&self, count: usize, seed: u64) -> VectorSet {
        if count >= self.n {
            return self.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ids = index::sample(&mut rng, self.n, count).into_vec();
        ids.sort_unstable();
        self.select(&ids)
    }
}

/// Parse a vecs buffer.
pub fn parse_vecs(bytes: &[u8], format: VecsFormat) -> Result<VectorSet> {
    if bytes.is_empty() {
        return Err(Error::EmptyFile);
    }
    let elem = format.elem_size();
    let mut offset = 0usize;
    let mut d = 0usize;
    let mut data = Vec::new();
    while offset < bytes.len() {
        if bytes.len() - offset < 4 {
            return Err(Error::format(offset as u64, "truncated dimension field"));
        }
        let dim = LittleEndian::read_i32(&bytes[offset..]);
        if dim <= 0 {
            return Err(Error::format(
                offset as u64,
                format!("non-positive dimension {dim}"),
            ));
        }
        let dim = dim as usize;
        if d == 0 {
            d = dim;
            data.reserve(bytes.len() / (4 + d * elem) * d);
        } else if dim != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: dim,
            });
        }
        let start = offset + 4;
        let end = start + dim * elem;
        if end > bytes.len() {
            return Err(Error::format(
                offset as u64,
                format!(
                    "record needs {} payload bytes, {} available",
                    dim * elem,
                    bytes.len() - start
                ),
            ));
        }
        let payload = &bytes[start..end];
        match format {
            VecsFormat::F32 => {
                for c in payload.chunks_exact(4) {
                    let v = LittleEndian::read_f32(c);
                    if !v.is_finite() {
                        return Err(Error::NonFinite(data.len()));
                    }
                    data.push(v);
                }
            }
            VecsFormat::I32 => data.extend(payload.chunks_exact(4).map(|c| LittleEndian::read_i32(c) as f32)),
            VecsFormat::U8 => data.extend(payload.iter().map(|&b| b as f32)),
        }
        offset = end;
    }
    VectorSet::new(d, data)
}

pub fn read_vecs(path: impl AsRef<Path>, format: VecsFormat) -> Result<VectorSet> {
    let bytes = fs::read(path)?;
    parse_vecs(&bytes, format)
}

pub fn encode_vecs<W: Write>(mut w: W, format: VecsFormat, vs: &VectorSet) -> Result<()> {
    if vs.is_empty() {
        return Err(Error::EmptySet);
    }
    if format != VecsFormat::F32 {
        let (lo, hi) = match format {
            VecsFormat::U8 => (0.0f64, 255.0f64),
            _ => (i32::MIN as f64, i32::MAX as f64),
        };
        if let Some((i, &v)) = vs
            .as_slice()
            .iter()
            .enumerate()
            .find(|(_, &v)| v.fract() != 0.0 || (v as f64) < lo || (v as f64) > hi)
        {
            return Err(Error::OutOfRange { index: i, value: v });
        }
    }
    for row in vs.rows() {
        w.write_i32::<LittleEndian>(vs.d() as i32)?;
        match format {
            VecsFormat::F32 => {
                for &v in row {
                    w.write_f32::<LittleEndian>(v)?;
                }
            }
            VecsFormat::I32 => {
                for &v in row {
                    w.write_i32::<LittleEndian>(v as i32)?;
                }
            }
            VecsFormat::U8 => {
                for &v in row {
                    w.write_u8(v as u8)?;
                }
            }
        }
    }
    Ok(())
}

pub fn write_vecs(path: impl AsRef<Path>, format: VecsFormat, vs: &VectorSet) -> Result<()> {
    // validate before touching the filesystem
    encode_vecs(std::io::sink(), format, vs)?;
    let mut w = BufWriter::new(fs::File::create(path)?);
    encode_vecs(&mut w, format, vs)?;
    w.flush()?;
    Ok(())
}

/// Read an `.ivecs` file of id lists (e.g. ground truth). Rows may differ in
/// length.
pub fn read_id_lists(path: impl AsRef<Path>) -> Result<Vec<Vec<u32>>> {
    let bytes = fs::read(path)?;
    if bytes.is_empty() {
        return Err(Error::EmptyFile);
    }
    let mut offset = 0usize;
    let mut out = Vec::new();
    while offset < bytes.len() {
        if bytes.len() - offset < 4 {
            return Err(Error::format(offset as u64, "truncated dimension field"));
        }
        let dim = LittleEndian::read_i32(&bytes[offset..]);
        if dim < 0 {
            return Err(Error::format(offset as u64, "negative length"));
        }
        let end = offset + 4 + dim as usize * 4;
        if end > bytes.len() {
            return Err(Error::format(offset as u64, "truncated record"));
        }
        let mut ids = Vec::with_capacity(dim as usize);
        for c in bytes[offset + 4..end].chunks_exact(4) {
            let v = LittleEndian::read_i32(c);
            if v < 0 {
                return Err(Error::format(offset as u64, format!("negative id {v}")));
            }
            ids.push(v as u32);
        }
        out.push(ids);
        offset = end;
    }
    Ok(out)
}

pub fn write_id_lists(path: impl AsRef<Path>, lists: &[Vec<u32>]) -> Result<()> {
    if lists.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    for l in lists {
        w.write_i32::<LittleEndian>(l.len() as i32)?;
        for &id in l {
            let id = i32::try_from(id).map_err(|_| Error::invalid(format!("id {id} exceeds i32")))?;
            w.write_i32::<LittleEndian>(id)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `n` x `d` i.i.d. standard normal values from `ChaCha8Rng::seed_from_u64(seed)`,
/// drawn row by row.
pub fn gen_gaussian(n: usize, d: usize, seed: u64) -> Result<VectorSet> {
    if n == 0 || d == 0 {
        return Err(Error::invalid("gen_gaussian needs n >= 1 and d >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f32> = (0..n * d).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
    VectorSet::new(d, data)
}

/// Exact `t` nearest neighbors of every query.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub t: usize,
    pub ids: Vec<Vec<u32>>,
    pub dists: Vec<Vec<f32>>,
}

impl GroundTruth {
    pub fn num_queries(&self) -> usize {
        self.ids.len()
    }
}

/// Brute-force k-NN under squared L2, ties broken by lower gallery id.
pub fn exact_knn(gallery: &VectorSet, queries: &VectorSet, t: usize) -> Result<GroundTruth> {
    if gallery.d() != queries.d() {
        return Err(Error::DimensionMismatch {
            expected: gallery.d(),
            actual: queries.d(),
        });
    }
    if t == 0 || t > gallery.n() {
        return Err(Error::invalid(format!(
            "t = {t} outside 1..={}",
            gallery.n()
        )));
    }
    let per_query: Vec<(Vec<u32>, Vec<f32>)> = (0..queries.n())
        .into_par_iter()
        .map(|qi| {
            let q = queries.row(qi);
            let mut sel = TopK::new(t);
            for (i, x) in gallery.rows().enumerate() {
                sel.push(crate::kernels::ScoredId::new(i as u32, l2sq(q, x)));
            }
            sel.into_sorted().into_iter().map(|s| (s.id, s.score)).unzip()
        })
        .collect();
    let (ids, dists) = per_query.into_iter().unzip();
    Ok(GroundTruth { t, ids, dists })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(d: i32, vals: &[f32]) -> Vec<u8> {
        let mut b = Vec::new();
        b.write_i32::<LittleEndian>(d).unwrap();
        for &v in vals {
            b.write_f32::<LittleEndian>(v).unwrap();
        }
        b
    }

    #[test]
    fn parse_two_records() {
        let mut bytes = record(2, &[1.0, 2.0]);
        bytes.extend(record(2, &[3.0, 4.0]));
        let vs = parse_vecs(&bytes, VecsFormat::F32).unwrap();
        assert_eq!((vs.n(), vs.d()), (2, 2));
        assert_eq!(vs.as_slice(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn empty_file_is_error() {
        assert!(matches!(parse_vecs(&[], VecsFormat::F32), Err(Error::EmptyFile)));
    }

    #[test]
    fn truncated_record_reports_offset() {
        let mut bytes = record(2, &[1.0, 2.0]);
        bytes.extend(&record(2, &[3.0, 4.0])[..8]);
        match parse_vecs(&bytes, VecsFormat::F32) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn inconsistent_dimension() {
        let mut bytes = record(2, &[1.0, 2.0]);
        bytes.extend(record(3, &[3.0, 4.0, 5.0]));
        assert!(matches!(
            parse_vecs(&bytes, VecsFormat::F32),
            Err(Error::DimensionMismatch { expected: 2, actual: 3 })
        ));
    }

    #[test]
    fn bvecs_and_ivecs_widen() {
        let mut b = Vec::new();
        b.write_i32::<LittleEndian>(3).unwrap();
        b.extend([0u8, 7, 255]);
        let vs = parse_vecs(&b, VecsFormat::U8).unwrap();
        assert_eq!(vs.as_slice(), &[0.0, 7.0, 255.0]);

        let mut b = Vec::new();
        b.write_i32::<LittleEndian>(2).unwrap();
        b.write_i32::<LittleEndian>(-5).unwrap();
        b.write_i32::<LittleEndian>(1000).unwrap();
        let vs = parse_vecs(&b, VecsFormat::I32).unwrap();
        assert_eq!(vs.as_slice(), &[-5.0, 1000.0]);
    }

    #[test]
    fn write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let vs = VectorSet::new(4, (0..12).map(|i| i as f32 * 0.37 - 2.0).collect()).unwrap();
        let p = dir.path().join("x.fvecs");
        write_vecs(&p, VecsFormat::F32, &vs).unwrap();
        assert_eq!(read_vecs(&p, VecsFormat::F32).unwrap(), vs);

        let ints = VectorSet::new(2, vec![0.0, 255.0, 17.0, 3.0]).unwrap();
        let p = dir.path().join("x.bvecs");
        write_vecs(&p, VecsFormat::U8, &ints).unwrap();
        assert_eq!(read_vecs(&p, VecsFormat::U8).unwrap(), ints);
    }

    #[test]
    fn u8_range_and_empty_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.bvecs");
        let vs = VectorSet::new(2, vec![1.0, 256.0]).unwrap();
        assert!(matches!(
            write_vecs(&p, VecsFormat::U8, &vs),
            Err(Error::OutOfRange { index: 1, .. })
        ));
        assert!(!p.exists());
        let empty = VectorSet::empty(3).unwrap();
        assert!(matches!(
            write_vecs(&p, VecsFormat::F32, &empty),
            Err(Error::EmptySet)
        ));
    }

    #[test]
    fn rejects_non_finite() {
        assert!(matches!(
            VectorSet::new(2, vec![1.0, f32::NAN]),
            Err(Error::NonFinite(1))
        ));
    }

    #[test]
    fn gaussian_is_deterministic() {
        let a = gen_gaussian(5, 2, 42).unwrap();
        let b = gen_gaussian(5, 2, 42).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
        let c = gen_gaussian(5, 2, 43).unwrap();
        assert_ne!(a.as_slice(), c.as_slice());
    }

    #[test]
    fn gaussian_moments() {
        let (n, d) = (10_000, 128);
        let vs = gen_gaussian(n, d, 1).unwrap();
        for j in 0..d {
            let col: Vec<f64> = vs.rows().map(|r| r[j] as f64).collect();
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            assert!(mean.abs() <= 0.05, "coord {j}: mean {mean}");
            assert!((0.9..=1.1).contains(&var), "coord {j}: var {var}");
        }
    }

    #[test]
    fn knn_hand_example() {
        let g = VectorSet::new(2, vec![0.0, 0.0, 1.0, 0.0, 5.0, 5.0]).unwrap();
        let q = VectorSet::new(2, vec![0.9, 0.0]).unwrap();
        let gt = exact_knn(&g, &q, 2).unwrap();
        assert_eq!(gt.ids[0], vec![1, 0]);
        assert!((gt.dists[0][0] - 0.01).abs() < 1e-6);
        assert!((gt.dists[0][1] - 0.81).abs() < 1e-6);
    }

    #[test]
    fn knn_exact_match_and_ties() {
        let g = gen_gaussian(20, 3, 5).unwrap();
        let q = g.select(&[7]);
        let gt = exact_knn(&g, &q, 1).unwrap();
        assert_eq!(gt.ids[0], vec![7]);
        assert_eq!(gt.dists[0], vec![0.0]);

        let g = VectorSet::new(1, vec![3.0, -1.0, 1.0]).unwrap();
        let q = VectorSet::new(1, vec![0.0]).unwrap();
        let gt = exact_knn(&g, &q, 3).unwrap();
        assert_eq!(gt.ids[0], vec![1, 2, 0]);
    }

    #[test]
    fn knn_errors() {
        let g = gen_gaussian(4, 3, 5).unwrap();
        let q = gen_gaussian(1, 2, 5).unwrap();
        assert!(exact_knn(&g, &q, 1).is_err());
        let q = gen_gaussian(1, 3, 5).unwrap();
        assert!(exact_knn(&g, &q, 0).is_err());
        assert!(exact_knn(&g, &q, 5).is_err());
    }

    #[test]
    fn columns_and_sample() {
        let vs = VectorSet::new(3, (0..9).map(|v| v as f32).collect()).unwrap();
        let c = vs.columns(1, 2).unwrap();
        assert_eq!(c.as_slice(), &[1.0, 2.0, 4.0, 5.0, 7.0, 8.0]);
        assert!(vs.columns(2, 2).is_err());
        let s = vs.sample(2, 9);
        assert_eq!(s.n(), 2);
        assert_eq!(vs.sample(10, 9), vs);
    }
}
