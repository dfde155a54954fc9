//! Dense vector/matrix helpers, seeded random streams and structured Gaussian sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                actual: data.len(),
                context: "matrix element count",
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    actual: r.len(),
                    context: "ragged rows",
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        // chunks_exact on an empty matrix with cols=0 would panic
        (0..self.rows).map(move |i| self.row(i))
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn scaled(&self, alpha: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| alpha * v).collect(),
        }
    }

    /// Gather a subset of rows into a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Seeded random stream. Backed by ChaCha20, a counter-mode generator, so a
/// `(seed, stream)` pair fully determines the draw sequence.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    inner: ChaCha20Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    /// Independent stream `stream` under the same seed.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha20Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        RngStream { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        use rand::seq::SliceRandom;
        items.shuffle(&mut self.inner);
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.normal();
        }
    }
}

pub fn sample_standard_normal(rng: &mut RngStream, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d];
    rng.fill_normal(&mut out);
    out
}

/// Covariance `along_var * u u^T + iso_var * I` kept in factored form.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredCovariance {
    direction: Vec<f64>,
    along_var: f64,
    iso_var: f64,
}

impl StructuredCovariance {
    /// `direction` is normalized here; it must be nonzero.
    pub fn new(direction: &[f64], along_var: f64, iso_var: f64) -> Result<Self> {
        let n = norm(direction);
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::ZeroNorm);
        }
        if !(along_var >= 0.0) || !(iso_var >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "covariance variances must be nonnegative (along {along_var}, iso {iso_var})"
            )));
        }
        Ok(StructuredCovariance {
            direction: direction.iter().map(|v| v / n).collect(),
            along_var,
            iso_var,
        })
    }

    pub fn isotropic(d: usize, iso_var: f64) -> Self {
        let mut direction = vec![0.0; d];
        if d > 0 {
            direction[0] = 1.0;
        }
        StructuredCovariance {
            direction,
            along_var: 0.0,
            iso_var: iso_var.max(0.0),
        }
    }

    pub fn direction(&self) -> &[f64] {
        &self.direction
    }

    pub fn along_var(&self) -> f64 {
        self.along_var
    }

    pub fn iso_var(&self) -> f64 {
        self.iso_var
    }

    pub fn dim(&self) -> usize {
        self.direction.len()
    }

    /// Largest eigenvalue, attained along `direction`.
    pub fn principal_eigenvalue(&self) -> f64 {
        self.along_var + self.iso_var
    }

    pub fn trace(&self) -> f64 {
        self.along_var + self.iso_var * self.dim() as f64
    }

    /// Dense `d x d` form; only meant for small `d`.
    pub fn to_dense(&self) -> Matrix {
        let d = self.dim();
        let mut m = Matrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                let mut v = self.along_var * self.direction[i] * self.direction[j];
                if i == j {
                    v += self.iso_var;
                }
                m.set(i, j, v);
            }
        }
        m
    }
}

/// One draw of `N(0, cov)` in O(d).
pub fn sample_structured_gaussian(cov: &StructuredCovariance, rng: &mut RngStream) -> Vec<f64> {
    let d = cov.dim();
    let mut out = vec![0.0; d];
    add_structured_gaussian(cov, rng, &mut out);
    out
}

/// Adds one draw of `N(0, cov)` to `target` in place.
pub fn add_structured_gaussian(cov: &StructuredCovariance, rng: &mut RngStream, target: &mut [f64]) {
    let along_std = cov.along_var.sqrt();
    let iso_std = cov.iso_var.sqrt();
    let z0 = rng.normal();
    if along_std > 0.0 {
        axpy(along_std * z0, &cov.direction, target);
    }
    // draws are consumed even when iso_std is zero so the stream position does
    // not depend on the covariance
    for t in target.iter_mut() {
        let z = rng.normal();
        *t += iso_std * z;
    }
}

/// Central-difference gradient of `f` at `x`.
pub fn finite_difference_gradient<F>(mut f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let hi = f(&probe);
            probe[i] = orig - h;
            let lo = f(&probe);
            probe[i] = orig;
            (hi - lo) / (2.0 * h)
        })
        .collect()
}
