//! Orthogonal Matching Pursuit against a unit-norm [`Codebook`].
//!
//! Each step picks the atom with the largest absolute correlation with the
//! current residual (ties go to the lower index), then re-solves the least
//! squares problem on the whole support through an incrementally grown
//! Cholesky factor of the support Gram matrix. Internal arithmetic is `f64`;
//! coefficients are stored as `f32`.

use crate::codebook::Codebook;
use crate::error::{Error, Result};

/// Relative residual norm below which encoding stops early.
pub const EARLY_STOP: f64 = 1e-7;
/// Relative pivot below which a new atom is considered linearly dependent.
const SINGULAR: f64 = 1e-10;

/// Up to `L` (atom, coefficient) pairs. Slots past `used` hold id 0 and a zero
/// coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    pub ids: Vec<u16>,
    pub coeffs: Vec<f32>,
    pub used: usize,
}

impl SparseCode {
    /// Canonical code of the zero vector.
    pub fn zero(sparsity: usize) -> Self {
        Self {
            ids: vec![0; sparsity.max(1)],
            coeffs: vec![0.0; sparsity.max(1)],
            used: 1,
        }
    }

    pub fn sparsity(&self) -> usize {
        self.ids.len()
    }
}

/// Reusable OMP workspace bound to one codebook.
pub struct Omp<'a> {
    cb: &'a Codebook,
    sparsity: usize,
    x: Vec<f64>,
    resid: Vec<f64>,
    corr0: Vec<f64>,
    support: Vec<usize>,
    chol: Vec<f64>,
    rhs: Vec<f64>,
    gamma: Vec<f64>,
    tmp: Vec<f64>,
    code_ids: Vec<u16>,
    code_coeffs: Vec<f32>,
}

impl<'a> Omp<'a> {
    pub fn new(cb: &'a Codebook, sparsity: usize) -> Result<Self> {
        if sparsity == 0 || sparsity > cb.k() {
            return Err(Error::invalid(format!(
                "sparse level {sparsity} outside 1..={}",
                cb.k()
            )));
        }
        if cb.k() > u16::MAX as usize + 1 {
            return Err(Error::invalid(format!("k = {} exceeds 65536", cb.k())));
        }
        let d = cb.dim();
        Ok(Self {
            cb,
            sparsity,
            x: vec![0.0; d],
            resid: vec![0.0; d],
            corr0: vec![0.0; cb.k()],
            support: Vec::with_capacity(sparsity),
            chol: vec![0.0; sparsity * sparsity],
            rhs: Vec::with_capacity(sparsity),
            gamma: vec![0.0; sparsity],
            tmp: vec![0.0; sparsity],
            code_ids: vec![0; sparsity],
            code_coeffs: vec![0.0; sparsity],
        })
    }

    pub fn sparsity(&self) -> usize {
        self.sparsity
    }

    pub fn encode(&mut self, x: &[f32]) -> Result<SparseCode> {
        if x.len() != self.cb.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.cb.dim(),
                actual: x.len(),
            });
        }
        let mut code = SparseCode {
            ids: vec![0; self.sparsity],
            coeffs: vec![0.0; self.sparsity],
            used: 0,
        };
        code.used = self.encode_into(x, &mut code.ids, &mut code.coeffs);
        Ok(code)
    }

    /// Encode into caller-provided slots of length `L`; returns the number of
    /// atoms used. Panics if `x` has the wrong length.
    pub(crate) fn encode_into(&mut self, x: &[f32], ids: &mut [u16], coeffs: &mut [f32]) -> usize {
        let cb = self.cb;
        let (d, k) = (cb.dim(), cb.k());
        assert_eq!(x.len(), d);
        ids.iter_mut().for_each(|v| *v = 0);
        coeffs.iter_mut().for_each(|v| *v = 0.0);

        for (a, &b) in self.x.iter_mut().zip(x) {
            *a = b as f64;
        }
        let x_norm2: f64 = self.x.iter().map(|v| v * v).sum();
        if x_norm2 == 0.0 {
            return 1;
        }
        let stop = EARLY_STOP * x_norm2.sqrt();

        for j in 0..k {
            self.corr0[j] = dot64(&self.x, cb.atom(j));
        }
        self.resid.copy_from_slice(&self.x);
        self.support.clear();
        self.rhs.clear();

        for step in 0..self.sparsity {
            if step > 0 {
                let rn = self.resid.iter().map(|v| v * v).sum::<f64>().sqrt();
                if rn < stop {
                    break;
                }
            }
            // correlation with the residual: c0 - G[:, S] gamma
            let mut best = usize::MAX;
            let mut best_abs = -1.0f64;
            for j in 0..k {
                if self.support.contains(&j) {
                    continue;
                }
                let mut c = self.corr0[j];
                if step > 0 {
                    let g = cb.gram_row(j);
                    for (s, &a) in self.support.iter().enumerate() {
                        c -= self.gamma[s] * g[a] as f64;
                    }
                }
                let c = c.abs();
                if c > best_abs {
                    best_abs = c;
                    best = j;
                }
            }
            if best == usize::MAX || (step > 0 && best_abs <= 1e-12 * x_norm2.sqrt()) {
                break;
            }
            if !self.extend_cholesky(best) {
                break;
            }
            self.support.push(best);
            self.rhs.push(self.corr0[best]);
            self.solve();
            self.update_residual();
        }

        let used = self.support.len();
        for (s, &a) in self.support.iter().enumerate() {
            ids[s] = a as u16;
            coeffs[s] = self.gamma[s] as f32;
        }
        used
    }

    /// Grow the Cholesky factor by the atom `j`; false if it is (numerically)
    /// in the span of the current support.
    fn extend_cholesky(&mut self, j: usize) -> bool {
        let l = self.sparsity;
        let s = self.support.len();
        let aj = self.cb.atom(j);
        let diag = dot64f(aj, aj);
        for (t, &a) in self.support.iter().enumerate() {
            self.tmp[t] = dot64f(self.cb.atom(a), aj);
        }
        // forward substitution: chol[..s, ..s] w = g
        for r in 0..s {
            let mut v = self.tmp[r];
            for c in 0..r {
                v -= self.chol[r * l + c] * self.tmp[c];
            }
            self.tmp[r] = v / self.chol[r * l + r];
        }
        let w2: f64 = self.tmp[..s].iter().map(|v| v * v).sum();
        let pivot = diag - w2;
        if pivot <= SINGULAR * diag {
            return false;
        }
        for c in 0..s {
            self.chol[s * l + c] = self.tmp[c];
        }
        self.chol[s * l + s] = pivot.sqrt();
        true
    }

    fn solve(&mut self) {
        let l = self.sparsity;
        let s = self.support.len();
        for r in 0..s {
            let mut v = self.rhs[r];
            for c in 0..r {
                v -= self.chol[r * l + c] * self.tmp[c];
            }
            self.tmp[r] = v / self.chol[r * l + r];
        }
        for r in (0..s).rev() {
            let mut v = self.tmp[r];
            for c in r + 1..s {
                v -= self.chol[c * l + r] * self.gamma[c];
            }
            self.gamma[r] = v / self.chol[r * l + r];
        }
    }

    fn update_residual(&mut self) {
        self.resid.copy_from_slice(&self.x);
        for (s, &a) in self.support.iter().enumerate() {
            let g = self.gamma[s];
            for (r, &v) in self.resid.iter_mut().zip(self.cb.atom(a)) {
                *r -= g * v as f64;
            }
        }
    }

    /// `‖x − x̂‖²` of the stored (f32) code, accumulated in f64. Panics if `x`
    /// has the wrong length.
    pub fn encode_distortion(&mut self, x: &[f32]) -> f64 {
        let mut ids = std::mem::take(&mut self.code_ids);
        let mut coeffs = std::mem::take(&mut self.code_coeffs);
        self.encode_into(x, &mut ids, &mut coeffs);
        let e = distortion64(x, &ids, &coeffs, self.cb);
        self.code_ids = ids;
        self.code_coeffs = coeffs;
        e
    }
}

#[inline]
fn dot64(x: &[f64], a: &[f32]) -> f64 {
    x.iter().zip(a).map(|(&u, &v)| u * v as f64).sum()
}

#[inline]
fn dot64f(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&u, &v)| u as f64 * v as f64).sum()
}

fn distortion64(x: &[f32], ids: &[u16], coeffs: &[f32], cb: &Codebook) -> f64 {
    let mut total = 0.0f64;
    for (t, &xt) in x.iter().enumerate() {
        let mut r = xt as f64;
        for (&a, &c) in ids.iter().zip(coeffs) {
            r -= c as f64 * cb.atom(a as usize)[t] as f64;
        }
        total += r * r;
    }
    total
}

/// Sparse code of `x` with at most `sparsity` atoms.
pub fn omp_encode(x: &[f32], cb: &Codebook, sparsity: usize) -> Result<SparseCode> {
    Omp::new(cb, sparsity)?.encode(x)
}

fn check_ids(code: &SparseCode, cb: &Codebook) -> Result<()> {
    if code.ids.len() != code.coeffs.len() {
        return Err(Error::invalid("sparse code ids and coefficients differ in length"));
    }
    if let Some(&bad) = code.ids.iter().find(|&&a| a as usize >= cb.k()) {
        return Err(Error::invalid(format!("atom id {bad} out of range for k = {}", cb.k())));
    }
    Ok(())
}

/// `Σ coeffs[l] · atom[ids[l]]`.
pub fn reconstruct(code: &SparseCode, cb: &Codebook) -> Result<Vec<f32>> {
    check_ids(code, cb)?;
    let mut out = vec![0.0f64; cb.dim()];
    for (&a, &c) in code.ids.iter().zip(&code.coeffs) {
        for (o, &v) in out.iter_mut().zip(cb.atom(a as usize)) {
            *o += c as f64 * v as f64;
        }
    }
    Ok(out.into_iter().map(|v| v as f32).collect())
}

/// Squared reconstruction error `‖x − reconstruct(code)‖²`.
pub fn distortion(x: &[f32], code: &SparseCode, cb: &Codebook) -> Result<f64> {
    check_ids(code, cb)?;
    if x.len() != cb.dim() {
        return Err(Error::DimensionMismatch {
            expected: cb.dim(),
            actual: x.len(),
        });
    }
    Ok(distortion64(x, &code.ids, &code.coeffs, cb))
}
