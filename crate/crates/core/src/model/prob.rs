use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::matrix::argmax;

/// Lower clamp applied to every probability before it reaches a logarithm.
pub const PROB_EPS: f64 = 1e-7;

/// Per-class accept/reject probabilities of the one-vs-all head.
///
/// Row 0 (`accept`) holds `C_1^(j)`, row 1 (`reject`) holds `C_2^(j) = 1 - C_1^(j)`.
/// Entries are clamped to `[PROB_EPS, 1 - PROB_EPS]`; clamped classes carry a
/// zero derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix {
    accept: Vec<f64>,
    reject: Vec<f64>,
    clamped: Vec<bool>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl ProbMatrix {
    /// From interleaved logits `[a_0, r_0, a_1, r_1, ...]`; each pair gets a
    /// 2-way softmax.
    pub fn from_logits(logits: &[f64]) -> Result<Self> {
        if logits.len() < 4 || !logits.len().is_multiple_of(2) {
            return Err(Error::shape(format!("{} logits do not form >= 2 accept/reject pairs", logits.len())));
        }
        if let Some(i) = logits.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerics(format!("logit {i} is not finite")));
        }
        let accept: Vec<f64> = logits.chunks_exact(2).map(|p| sigmoid(p[0] - p[1])).collect();
        Ok(Self::from_raw_accept(accept))
    }

    /// From accept probabilities directly; reject is the complement.
    pub fn from_accept(accept: &[f64]) -> Result<Self> {
        if accept.len() < 2 {
            return Err(Error::shape("need at least 2 classes"));
        }
        if accept.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Numerics("accept probability outside [0, 1]".into()));
        }
        Ok(Self::from_raw_accept(accept.to_vec()))
    }

    fn from_raw_accept(mut accept: Vec<f64>) -> Self {
        let mut clamped = vec![false; accept.len()];
        for (p, c) in accept.iter_mut().zip(clamped.iter_mut()) {
            if *p < PROB_EPS {
                *p = PROB_EPS;
                *c = true;
            } else if *p > 1.0 - PROB_EPS {
                *p = 1.0 - PROB_EPS;
                *c = true;
            }
        }
        let reject = accept.iter().map(|p| 1.0 - p).collect();
        Self {
            accept,
            reject,
            clamped,
        }
    }

    #[inline]
    pub fn num_classes(&self) -> usize {
        self.accept.len()
    }

    pub fn accept(&self) -> &[f64] {
        &self.accept
    }

    pub fn reject(&self) -> &[f64] {
        &self.reject
    }

    pub fn max_accept(&self) -> f64 {
        self.accept.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Smallest reject probability over all classes.
    pub fn reject_score(&self) -> f64 {
        self.reject.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Unknown when every class rejects with probability above one half;
    /// otherwise the class with the largest accept probability.
    pub fn predict(&self) -> Label {
        if self.reject_score() > 0.5 {
            Label::Unknown
        } else {
            Label::Class(argmax(&self.accept))
        }
    }

    /// Chain rule from `dL/dC_1`, `dL/dC_2` to the interleaved logits.
    pub fn logit_grad(&self, d_accept: &[f64], d_reject: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; 2 * self.num_classes()];
        for j in 0..self.num_classes() {
            if self.clamped[j] {
                continue;
            }
            let du = (d_accept[j] - d_reject[j]) * self.accept[j] * self.reject[j];
            g[2 * j] = du;
            g[2 * j + 1] = -du;
        }
        g
    }
}
