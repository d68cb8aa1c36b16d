//! Row-major matrices and the handful of vector primitives the method needs.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major `rows x dim` matrix. Row `i` is sample `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    /// Builds a matrix from row-major data, rejecting non-finite entries.
    pub fn from_vec(rows: usize, dim: usize, data: Vec<T>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::shape("matrix dimension must be at least 1"));
        }
        if data.len() != rows * dim {
            return Err(Error::shape(format!(
                "data length {} does not match {rows}x{dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerics(format!(
                "entry ({}, {}) is not finite",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Self { rows, dim, data })
    }

    pub fn zeros(rows: usize, dim: usize) -> Self {
        assert!(dim >= 1, "matrix dimension must be at least 1");
        Self {
            rows,
            dim,
            data: vec![T::zero(); rows * dim],
        }
    }

    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let dim = rows
            .first()
            .map(|r| r.as_ref().len())
            .ok_or_else(|| Error::shape("no rows given"))?;
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::shape(format!(
                    "row {i} has length {}, expected {dim}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::from_vec(rows.len(), dim, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// Gathers the given rows into a new matrix, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            dim: self.dim,
            data,
        }
    }

    /// Converts between scalar types.
    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            dim: self.dim,
            data: self.data.iter().map(|&v| U::of_f64(v.as_f64())).collect(),
        }
    }
}

/// Dot product accumulated in `f64`.
///
/// Four independent accumulators keep the loop vectorizable; the combination
/// order is fixed so the result is bit-reproducible.
#[inline]
pub fn dot_f64<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0].as_f64() * y[0].as_f64();
        acc[1] += x[1].as_f64() * y[1].as_f64();
        acc[2] += x[2].as_f64() * y[2].as_f64();
        acc[3] += x[3].as_f64() * y[3].as_f64();
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x.as_f64() * y.as_f64();
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub fn norm_f64<T: Scalar>(v: &[T]) -> f64 {
    dot_f64(v, v).sqrt()
}

/// Scales `v` to unit L2 norm.
pub fn l2_normalize<T: Scalar>(v: &[T]) -> Result<Vec<T>> {
    let n = norm_f64(v);
    if !n.is_finite() {
        return Err(Error::Numerics("vector norm is not finite".into()));
    }
    if n == 0.0 {
        return Err(Error::ZeroNorm { row: None });
    }
    Ok(v.iter().map(|&x| T::of_f64(x.as_f64() / n)).collect())
}

/// In-place variant of [`l2_normalize`].
pub fn l2_normalize_in_place<T: Scalar>(v: &mut [T]) -> Result<()> {
    let n = norm_f64(v);
    if !n.is_finite() {
        return Err(Error::Numerics("vector norm is not finite".into()));
    }
    if n == 0.0 {
        return Err(Error::ZeroNorm { row: None });
    }
    for x in v.iter_mut() {
        *x = T::of_f64(x.as_f64() / n);
    }
    Ok(())
}

/// Cosine similarity `u.v / (|u| |v|)`, clamped to `[-1, 1]`.
pub fn cosine_sim<T: Scalar>(u: &[T], v: &[T]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::shape(format!(
            "cosine_sim of vectors with lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    let nu = norm_f64(u);
    let nv = norm_f64(v);
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroNorm { row: None });
    }
    Ok((dot_f64(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
