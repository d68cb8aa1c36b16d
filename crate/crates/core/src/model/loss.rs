//! The four training losses, their derivatives with respect to the
//! probability table, and the source weight matrix.
//!
//! Derivatives are returned as `(dL/dC_1, dL/dC_2)` and converted to logit
//! gradients by [`ProbMatrix::logit_grad`].

use super::prob::{ProbMatrix, PROB_EPS};
use crate::error::{Error, Result};
use crate::membank::{Exclude, MemoryBank};
use crate::scalar::Scalar;

/// Per-probability derivatives, accept row then reject row.
pub type ProbGrad = (Vec<f64>, Vec<f64>);

#[inline]
fn plogp(p: f64) -> f64 {
    p * p.ln()
}

#[inline]
fn d_plogp(p: f64) -> f64 {
    p.ln() + 1.0
}

/// Mean binary entropy of the reject probabilities:
/// `-(1/Y) sum_j C_2 ln C_2`.
pub fn loss_unk(p: &ProbMatrix) -> f64 {
    let y = p.num_classes() as f64;
    -p.reject().iter().map(|&c| plogp(c)).sum::<f64>() / y
}

pub fn loss_unk_grad(p: &ProbMatrix) -> ProbGrad {
    let y = p.num_classes() as f64;
    (
        vec![0.0; p.num_classes()],
        p.reject().iter().map(|&c| -d_plogp(c) / y).collect(),
    )
}

/// `-C_1^(y) ln C_1^(y)` for the pseudo-label `y`.
pub fn loss_k(p: &ProbMatrix, label: usize) -> f64 {
    -plogp(p.accept()[label])
}

pub fn loss_k_grad(p: &ProbMatrix, label: usize) -> ProbGrad {
    let mut da = vec![0.0; p.num_classes()];
    da[label] = -d_plogp(p.accept()[label]);
    (da, vec![0.0; p.num_classes()])
}

/// Average entropy term over both rows: `-(1/2Y) sum_k sum_j C_k ln C_k`.
pub fn loss_unc(p: &ProbMatrix) -> f64 {
    let y2 = 2.0 * p.num_classes() as f64;
    -(p.accept().iter().map(|&c| plogp(c)).sum::<f64>() + p.reject().iter().map(|&c| plogp(c)).sum::<f64>()) / y2
}

pub fn loss_unc_grad(p: &ProbMatrix) -> ProbGrad {
    let y2 = 2.0 * p.num_classes() as f64;
    (
        p.accept().iter().map(|&c| -d_plogp(c) / y2).collect(),
        p.reject().iter().map(|&c| -d_plogp(c) / y2).collect(),
    )
}

/// `W = [w_1; w_2]` for one source sample.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    pub label: usize,
    /// One-hot of the source label.
    pub w1: Vec<f64>,
    /// L1-normalized confusion weights, zero at the source label. All zero in
    /// the degenerate case.
    pub w2: Vec<f64>,
}

impl WeightMatrix {
    /// `w_2 = 0`: the loss reduces to the accept likelihood of the label.
    pub fn label_only(label: usize, num_classes: usize) -> Self {
        let mut w1 = vec![0.0; num_classes];
        w1[label] = 1.0;
        Self {
            label,
            w1,
            w2: vec![0.0; num_classes],
        }
    }

    /// `w_2^(j) ∝ (|N^(j)| / |N|) * C_1^(j) / sum_{k != y} (C_1^(k))^2`.
    pub fn from_counts(label: usize, counts: &[usize], p: &ProbMatrix) -> Result<Self> {
        let n_classes = p.num_classes();
        if counts.len() != n_classes || label >= n_classes {
            return Err(Error::shape("neighbor counts do not match the class count"));
        }
        let total: usize = counts.iter().enumerate().filter(|(j, _)| *j != label).map(|(_, c)| c).sum();
        if total == 0 {
            return Err(Error::DegenerateSource { label });
        }
        let a = p.accept();
        let denom: f64 = (0..n_classes).filter(|&k| k != label).map(|k| a[k] * a[k]).sum();
        let mut w = Self::label_only(label, n_classes);
        for j in (0..n_classes).filter(|&j| j != label) {
            w.w2[j] = (counts[j] as f64 / total as f64) * a[j] / denom;
        }
        let l1: f64 = w.w2.iter().sum();
        if l1 > 0.0 {
            w.w2.iter_mut().for_each(|v| *v /= l1);
        }
        Ok(w)
    }

    /// Frobenius product `<W, p>`.
    pub fn inner(&self, p: &ProbMatrix) -> f64 {
        let a: f64 = self.w1.iter().zip(p.accept()).map(|(w, c)| w * c).sum();
        let r: f64 = self.w2.iter().zip(p.reject()).map(|(w, c)| w * c).sum();
        a + r
    }
}

/// Builds `W` for source sample embedding `x` with label `label`, retrieving
/// its `k` nearest source-bank rows among those with a different label.
pub fn weight_matrix<T: Scalar>(
    x: &[T],
    label: usize,
    src_bank: &MemoryBank<T>,
    src_labels: &[usize],
    p: &ProbMatrix,
    k: usize,
) -> Result<WeightMatrix> {
    if src_labels.len() != src_bank.len() {
        return Err(Error::shape("source labels do not cover the bank"));
    }
    if src_labels.iter().all(|&l| l == label) {
        return Err(Error::DegenerateSource { label });
    }
    let neighbors = src_bank.knn_at_most(x, k, Exclude::Label { labels: src_labels, label })?;
    let mut counts = vec![0usize; p.num_classes()];
    for &i in &neighbors.indices {
        let l = src_labels[i];
        if l >= counts.len() {
            return Err(Error::shape(format!("bank label {l} outside the class space")));
        }
        counts[l] += 1;
    }
    WeightMatrix::from_counts(label, &counts, p)
}

/// `-ln <W, p>`, with the inner product floored at `PROB_EPS`.
pub fn loss_s(p: &ProbMatrix, w: &WeightMatrix) -> f64 {
    -w.inner(p).max(PROB_EPS).ln()
}

pub fn loss_s_grad(p: &ProbMatrix, w: &WeightMatrix) -> ProbGrad {
    let s = w.inner(p);
    if s <= PROB_EPS {
        return (vec![0.0; p.num_classes()], vec![0.0; p.num_classes()]);
    }
    (
        w.w1.iter().map(|v| -v / s).collect(),
        w.w2.iter().map(|v| -v / s).collect(),
    )
}

/// Per-sample loss values of one step, grouped by role.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchLosses {
    pub source: Vec<f64>,
    pub unknown: Vec<f64>,
    pub known: Vec<f64>,
    pub uncertain: Vec<f64>,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Subset means of a [`BatchLosses`] and the combined objective.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossSummary {
    pub source: f64,
    pub unknown: f64,
    pub known: f64,
    pub uncertain: f64,
    pub total: f64,
}

/// `mean L_s + lambda (mean L_unk + mean L_k + mean L_unc)`; an empty subset
/// contributes zero.
pub fn total_loss(losses: &BatchLosses, lambda: f64) -> LossSummary {
    let s = mean(&losses.source);
    let unk = mean(&losses.unknown);
    let k = mean(&losses.known);
    let unc = mean(&losses.uncertain);
    LossSummary {
        source: s,
        unknown: unk,
        known: k,
        uncertain: unc,
        total: s + lambda * (unk + k + unc),
    }
}
