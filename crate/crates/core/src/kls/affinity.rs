use crate::error::{Error, Result};
use crate::matrix::{cosine_sim, Matrix};
use crate::membank::NeighborSet;
use crate::scalar::Scalar;

/// Symmetric `K x K` matrix of rectified cosine similarities, unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    size: usize,
    data: Vec<f64>,
}

impl AffinityMatrix {
    /// Builds the affinity of `feats` rows, in row order.
    pub fn from_features<T: Scalar>(feats: &Matrix<T>) -> Result<Self> {
        let k = feats.rows();
        if k < 2 {
            return Err(Error::config(format!("affinity needs at least 2 neighbors, got {k}")));
        }
        let mut data = vec![0.0; k * k];
        for a in 0..k {
            data[a * k + a] = 1.0;
            for b in a + 1..k {
                let s = cosine_sim(feats.row(a), feats.row(b))?.max(0.0);
                data[a * k + b] = s;
                data[b * k + a] = s;
            }
        }
        Ok(Self { size: k, data })
    }

    /// Affinity of a neighbor set in its canonical order.
    pub fn from_neighbors<T: Scalar>(neighbors: &NeighborSet<T>) -> Result<Self> {
        Self::from_features(&neighbors.feats)
    }

    /// Wraps a raw matrix after checking symmetry, range, and unit diagonal.
    pub fn from_dense(size: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != size * size || size < 1 {
            return Err(Error::shape(format!("{} entries for a {size}x{size} affinity", data.len())));
        }
        for a in 0..size {
            if (data[a * size + a] - 1.0).abs() > 1e-12 {
                return Err(Error::config(format!("affinity diagonal entry {a} is not 1")));
            }
            for b in 0..size {
                let v = data[a * size + b];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::config(format!("affinity entry ({a}, {b}) = {v} outside [0, 1]")));
                }
                if (v - data[b * size + a]).abs() > 1e-6 {
                    return Err(Error::config(format!("affinity is not symmetric at ({a}, {b})")));
                }
            }
        }
        Ok(Self { size, data })
    }

    pub fn identity(size: usize) -> Self {
        let mut data = vec![0.0; size * size];
        for a in 0..size {
            data[a * size + a] = 1.0;
        }
        Self { size, data }
    }

    pub fn ones(size: usize) -> Self {
        Self {
            size,
            data: vec![1.0; size * size],
        }
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.data[a * self.size + b]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `out = A v`.
    pub(crate) fn mul_vec(&self, v: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.size)) {
            *o = row.iter().zip(v).map(|(a, x)| a * x).sum();
        }
    }
}
