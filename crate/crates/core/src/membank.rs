//! Momentum-updated feature memories with exact k-nearest-neighbor search.
//!
//! Every slot holds an L2-normalized feature, so cosine similarity against a
//! normalized query is a plain dot product.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::matrix::{dot_f64, l2_normalize, l2_normalize_in_place, Matrix};
use crate::scalar::Scalar;

/// One memory bank. Slot `i` belongs to dataset sample `i` for the bank's lifetime.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBank<T> {
    features: Matrix<T>,
    alpha: f64,
}

/// The K nearest bank rows of a query, ordered by (similarity desc, index asc).
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSet<T> {
    pub indices: Vec<usize>,
    pub sims: Vec<f64>,
    pub feats: Matrix<T>,
}

impl<T> NeighborSet<T> {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Row filter applied during a query.
#[derive(Debug, Clone, Copy)]
pub enum Exclude<'a> {
    None,
    /// Skip one slot, typically the query's own.
    Slot(usize),
    /// Skip rows whose label equals `label`.
    Label { labels: &'a [usize], label: usize },
}

impl Exclude<'_> {
    #[inline]
    fn skips(&self, row: usize) -> bool {
        match *self {
            Exclude::None => false,
            Exclude::Slot(s) => s == row,
            Exclude::Label { labels, label } => labels[row] == label,
        }
    }
}

#[inline]
fn ranking(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::config(format!("momentum alpha must be in [0, 1), got {alpha}")));
    }
    Ok(())
}

impl<T: Scalar> MemoryBank<T> {
    /// Normalizes every row of `features` into a new bank.
    pub fn new(mut features: Matrix<T>, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        for i in 0..features.rows() {
            l2_normalize_in_place(features.row_mut(i)).map_err(|e| match e {
                Error::ZeroNorm { .. } => Error::ZeroNorm { row: Some(i) },
                e => e,
            })?;
        }
        Ok(Self { features, alpha })
    }

    /// Rebuilds a bank from rows that are already normalized (checkpoint restore).
    pub fn from_normalized(features: Matrix<T>, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        for (i, r) in features.iter_rows().enumerate() {
            let n = dot_f64(r, r).sqrt();
            if (n - 1.0).abs() > 1e-5 {
                return Err(Error::Numerics(format!("bank row {i} has norm {n}")));
            }
        }
        Ok(Self { features, alpha })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn features(&self) -> &Matrix<T> {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[T] {
        self.features.row(i)
    }

    /// `z <- normalize(alpha * z + (1 - alpha) * normalize(f))`.
    pub fn momentum_update(&mut self, index: usize, feature: &[T]) -> Result<&[T]> {
        if index >= self.len() {
            return Err(Error::Index {
                index,
                len: self.len(),
            });
        }
        if feature.len() != self.dim() {
            return Err(Error::shape(format!(
                "feature of length {} for bank of dimension {}",
                feature.len(),
                self.dim()
            )));
        }
        let fresh = l2_normalize(feature)?;
        let a = self.alpha;
        let slot = self.features.row_mut(index);
        let mixed: Vec<f64> = slot
            .iter()
            .zip(&fresh)
            .map(|(z, f)| a * z.as_f64() + (1.0 - a) * f.as_f64())
            .collect();
        let n = mixed.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 {
            // Exactly opposite old and new directions cancel; keep the fresh one.
            slot.copy_from_slice(&fresh);
        } else {
            for (z, m) in slot.iter_mut().zip(mixed) {
                *z = T::of_f64(m / n);
            }
        }
        Ok(self.features.row(index))
    }

    /// Exact top-`k` rows by cosine similarity to `query`.
    pub fn knn(&self, query: &[T], k: usize) -> Result<NeighborSet<T>> {
        self.knn_filtered(query, k, Exclude::None)
    }

    /// Like [`knn`](Self::knn) but skipping rows selected by `exclude`.
    ///
    /// Fails if fewer than `k` rows survive the filter.
    pub fn knn_filtered(&self, query: &[T], k: usize, exclude: Exclude<'_>) -> Result<NeighborSet<T>> {
        if query.len() != self.dim() {
            return Err(Error::shape(format!(
                "query of length {} for bank of dimension {}",
                query.len(),
                self.dim()
            )));
        }
        if k == 0 {
            return Err(Error::config("k must be at least 1"));
        }
        let q = l2_normalize(query)?;
        let mut scored: Vec<(f64, usize)> = self
            .features
            .iter_rows()
            .enumerate()
            .filter(|(i, _)| !exclude.skips(*i))
            .map(|(i, r)| (dot_f64(&q, r), i))
            .collect();
        if k > scored.len() {
            return Err(Error::config(format!(
                "k = {k} exceeds the {} eligible bank rows",
                scored.len()
            )));
        }
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, ranking);
            scored.truncate(k);
        }
        scored.sort_unstable_by(ranking);
        let indices: Vec<usize> = scored.iter().map(|s| s.1).collect();
        Ok(NeighborSet {
            sims: scored.iter().map(|s| s.0).collect(),
            feats: self.features.select_rows(&indices),
            indices,
        })
    }

    /// Up to `k` nearest rows among those not excluded; returns fewer when
    /// the filter leaves fewer rows.
    pub fn knn_at_most(&self, query: &[T], k: usize, exclude: Exclude<'_>) -> Result<NeighborSet<T>> {
        let eligible = (0..self.len()).filter(|&i| !exclude.skips(i)).count();
        self.knn_filtered(query, k.min(eligible).max(1), exclude)
    }
}
