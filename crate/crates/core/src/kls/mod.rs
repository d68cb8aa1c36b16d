//! Knowability-based labeling of target samples.
//!
//! A target sample is first screened by *knowability*: the cosine between the
//! leading eigenvectors of the affinity matrices of its source-bank and
//! target-bank neighborhoods. Samples that pass are then split by
//! *credibility*, the best class-averaged accept probability over the
//! source neighbors, against a per-batch threshold `c_tau`:
//!
//! ```text
//! knowability < k_tau                  -> Unknown
//! credibility > c_tau                  -> Known(pseudo-label)
//! credibility < cred_scale * c_tau     -> Unknown
//! otherwise                            -> Uncertain
//! ```

mod affinity;
mod eigen;

pub use affinity::AffinityMatrix;
pub use eigen::{canonical_sign, leading_eigenvector, Eigenpair, PowerConfig};

use crate::error::{Error, Result};
use crate::matrix::argmax;
use crate::membank::{Exclude, MemoryBank, NeighborSet};
use crate::model::{Model, ProbMatrix};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlsConfig {
    /// Neighbors retrieved from each bank.
    pub k: usize,
    pub k_tau: f64,
    pub cred_scale: f64,
    pub power: PowerConfig,
}

impl Default for KlsConfig {
    fn default() -> Self {
        Self {
            k: 10,
            k_tau: 0.5,
            cred_scale: 0.8,
            power: PowerConfig::default(),
        }
    }
}

impl KlsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::config(format!("k must be at least 2, got {}", self.k)));
        }
        if !(self.k_tau > -1.0 && self.k_tau < 1.0) {
            return Err(Error::config(format!("k_tau must be in (-1, 1), got {}", self.k_tau)));
        }
        if !(self.cred_scale > 0.0 && self.cred_scale < 1.0) {
            return Err(Error::config(format!(
                "cred_scale must be in (0, 1), got {}",
                self.cred_scale
            )));
        }
        if self.power.max_iters == 0 || self.power.tol.is_nan() || self.power.tol <= 0.0 {
            return Err(Error::config("power iteration needs max_iters >= 1 and tol > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Known(usize),
    Unknown,
    Uncertain,
}

impl Status {
    /// Single-character tag used in TSV output.
    pub fn tag(self) -> char {
        match self {
            Status::Known(_) => 'K',
            Status::Unknown => 'U',
            Status::Uncertain => '?',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlsVerdict {
    pub status: Status,
    pub knowability: f64,
    /// Absent when the knowability screen already decided the sample.
    pub credibility: Option<f64>,
}

/// Knowability score together with the neighborhoods it was computed from.
#[derive(Debug, Clone)]
pub struct Knowability<T> {
    pub score: f64,
    pub source: NeighborSet<T>,
    pub target: NeighborSet<T>,
}

/// Knowability of `query`. `self_slot` names the query's own target-bank slot,
/// which is left out of its target neighborhood.
pub fn knowability<T: Scalar>(
    query: &[T],
    src_bank: &MemoryBank<T>,
    tgt_bank: &MemoryBank<T>,
    self_slot: Option<usize>,
    cfg: &KlsConfig,
) -> Result<Knowability<T>> {
    let source = src_bank.knn(query, cfg.k)?;
    let exclude = self_slot.map_or(Exclude::None, Exclude::Slot);
    let target = tgt_bank.knn_filtered(query, cfg.k, exclude)?;
    let score = knowability_of(&source, &target, cfg)?;
    Ok(Knowability {
        score,
        source,
        target,
    })
}

/// Cosine between the leading eigenvectors of the two neighborhoods' affinities.
pub fn knowability_of<T: Scalar>(
    source: &NeighborSet<T>,
    target: &NeighborSet<T>,
    cfg: &KlsConfig,
) -> Result<f64> {
    let vs = leading_eigenvector(&AffinityMatrix::from_neighbors(source)?, &cfg.power)?;
    let vt = leading_eigenvector(&AffinityMatrix::from_neighbors(target)?, &cfg.power)?;
    eigvec_cosine(&vs.vector, &vt.vector)
}

fn eigvec_cosine(vs: &[f64], vt: &[f64]) -> Result<f64> {
    crate::matrix::cosine_sim(vs, vt)
}

/// Knowability straight from two affinity matrices.
pub fn knowability_from_affinities(
    source: &AffinityMatrix,
    target: &AffinityMatrix,
    power: &PowerConfig,
) -> Result<f64> {
    let vs = leading_eigenvector(source, power)?;
    let vt = leading_eigenvector(target, power)?;
    eigvec_cosine(&vs.vector, &vt.vector)
}

/// `(c_i, pseudo_label)` from the accept rows of the source neighbors.
///
/// A mean and a sum share their argmax, so one pass yields both.
pub fn credibility_from_probs<'a>(probs: impl IntoIterator<Item = &'a ProbMatrix>) -> Result<(f64, usize)> {
    let mut sum: Vec<f64> = Vec::new();
    let mut n = 0usize;
    for p in probs {
        if sum.is_empty() {
            sum = vec![0.0; p.num_classes()];
        } else if sum.len() != p.num_classes() {
            return Err(Error::shape("neighbor probability tables disagree on class count"));
        }
        for (s, a) in sum.iter_mut().zip(p.accept()) {
            *s += a;
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::config("credibility needs at least one neighbor"));
    }
    let label = argmax(&sum);
    Ok((sum[label] / n as f64, label))
}

/// Credibility over a retrieved source neighborhood, scoring bank rows directly.
pub fn credibility_of<T: Scalar>(
    neighbors: &NeighborSet<T>,
    model: &Model<T>,
) -> Result<(f64, usize)> {
    if neighbors.feats.dim() != model.embed_dim() {
        return Err(Error::shape(format!(
            "classifier expects dimension {}, bank has {}",
            model.embed_dim(),
            neighbors.feats.dim()
        )));
    }
    let probs: Vec<ProbMatrix> = neighbors
        .feats
        .iter_rows()
        .map(|m| model.probs_from_embedding(m))
        .collect::<Result<_>>()?;
    credibility_from_probs(&probs)
}

pub fn credibility<T: Scalar>(
    query: &[T],
    src_bank: &MemoryBank<T>,
    model: &Model<T>,
    cfg: &KlsConfig,
) -> Result<(f64, usize)> {
    credibility_of(&src_bank.knn(query, cfg.k)?, model)
}

/// Mean over the batch of each sample's largest accept probability.
pub fn auto_threshold<'a>(source_probs: impl IntoIterator<Item = &'a ProbMatrix>) -> Result<f64> {
    let (sum, n) = source_probs
        .into_iter()
        .fold((0.0, 0usize), |(s, n), p| (s + p.max_accept(), n + 1));
    if n == 0 {
        return Err(Error::config("auto threshold of an empty batch"));
    }
    Ok(sum / n as f64)
}

/// The three-way decision given the two scores.
pub fn decide(knowability: f64, credibility: impl FnOnce() -> Result<(f64, usize)>, c_tau: f64, cfg: &KlsConfig) -> Result<KlsVerdict> {
    if knowability < cfg.k_tau {
        return Ok(KlsVerdict {
            status: Status::Unknown,
            knowability,
            credibility: None,
        });
    }
    let (c, label) = credibility()?;
    let status = if c > c_tau {
        Status::Known(label)
    } else if c < cfg.cred_scale * c_tau {
        Status::Unknown
    } else {
        Status::Uncertain
    };
    Ok(KlsVerdict {
        status,
        knowability,
        credibility: Some(c),
    })
}

/// Labels one target sample.
pub fn kls_label<T: Scalar>(
    query: &[T],
    src_bank: &MemoryBank<T>,
    tgt_bank: &MemoryBank<T>,
    self_slot: Option<usize>,
    model: &Model<T>,
    c_tau: f64,
    cfg: &KlsConfig,
) -> Result<KlsVerdict> {
    let kn = knowability(query, src_bank, tgt_bank, self_slot, cfg)?;
    decide(kn.score, || credibility_of(&kn.source, model), c_tau, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;

    fn probs(accept: &[f64]) -> ProbMatrix {
        ProbMatrix::from_accept(accept).unwrap()
    }

    #[test]
    fn credibility_unanimous() {
        let p: Vec<ProbMatrix> = (0..4).map(|_| probs(&[0.0, 0.0, 0.0, 1.0])).collect();
        let (c, l) = credibility_from_probs(&p).unwrap();
        assert!((c - 1.0).abs() < 1e-6);
        assert_eq!(l, 3);
    }

    #[test]
    fn credibility_hand_average() {
        let p = [probs(&[0.9, 0.1]), probs(&[0.5, 0.5])];
        let (c, l) = credibility_from_probs(&p).unwrap();
        assert!((c - 0.7).abs() < 1e-12);
        assert_eq!(l, 0);
    }

    #[test]
    fn credibility_uniform_ties_to_zero() {
        let p: Vec<ProbMatrix> = (0..3).map(|_| probs(&[0.25; 4])).collect();
        let (c, l) = credibility_from_probs(&p).unwrap();
        assert!((c - 0.25).abs() < 1e-12);
        assert_eq!(l, 0);
    }

    #[test]
    fn threshold_examples() {
        let ex = |m: &[f64]| {
            let ps: Vec<ProbMatrix> = m.iter().map(|&x| probs(&[x, 1.0 - x])).collect();
            auto_threshold(&ps).unwrap()
        };
        assert!((ex(&[0.9, 0.7, 0.8]) - 0.8).abs() < 1e-12);
        assert!((ex(&[0.6]) - 0.6).abs() < 1e-12);
        assert!((ex(&[1.0, 1.0]) - 1.0).abs() < 1e-6);
        assert!(matches!(auto_threshold(&Vec::<ProbMatrix>::new()), Err(Error::Config(_))));
    }

    #[test]
    fn decision_bands() {
        let cfg = KlsConfig::default();
        let v = decide(0.3, || panic!("credibility must not be consulted"), 0.8, &cfg).unwrap();
        assert_eq!(v.status, Status::Unknown);
        assert_eq!(v.credibility, None);

        let v = decide(0.9, || Ok((0.9, 4)), 0.8, &cfg).unwrap();
        assert_eq!(v.status, Status::Known(4));
        assert_eq!(v.credibility, Some(0.9));

        let v = decide(0.9, || Ok((0.7, 4)), 0.8, &cfg).unwrap();
        assert_eq!(v.status, Status::Uncertain);

        let v = decide(0.9, || Ok((0.5, 4)), 0.8, &cfg).unwrap();
        assert_eq!(v.status, Status::Unknown);
    }

    #[test]
    fn decision_boundaries_are_uncertain() {
        let cfg = KlsConfig { cred_scale: 0.5, ..KlsConfig::default() };
        assert_eq!(decide(0.5, || Ok((0.8, 0)), 0.8, &cfg).unwrap().status, Status::Uncertain);
        assert_eq!(decide(0.5, || Ok((0.4, 0)), 0.8, &cfg).unwrap().status, Status::Uncertain);
    }

    #[test]
    fn knowability_orthogonal_vs_identical_neighborhoods() {
        let k = knowability_from_affinities(&AffinityMatrix::ones(3), &AffinityMatrix::identity(3), &PowerConfig::default())
            .unwrap();
        assert!((k - 0.5774).abs() < 1e-4);
    }

    #[test]
    fn knowability_of_identical_banks_is_one() {
        let rows: Vec<[f32; 3]> = (0..12)
            .map(|i| {
                let t = i as f32 * 0.4;
                [t.cos(), t.sin(), 0.3 + 0.05 * i as f32]
            })
            .collect();
        let m = Matrix::from_rows(&rows).unwrap();
        let bank = MemoryBank::new(m, 0.9).unwrap();
        let cfg = KlsConfig { k: 4, ..KlsConfig::default() };
        for i in 0..12 {
            let k = knowability(bank.row(i), &bank, &bank, None, &cfg).unwrap();
            assert!((k.score - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn config_validation() {
        assert!(KlsConfig { k: 1, ..KlsConfig::default() }.validate().is_err());
        assert!(KlsConfig { k_tau: 1.0, ..KlsConfig::default() }.validate().is_err());
        assert!(KlsConfig { cred_scale: 1.0, ..KlsConfig::default() }.validate().is_err());
        assert!(KlsConfig::default().validate().is_ok());
    }
}
