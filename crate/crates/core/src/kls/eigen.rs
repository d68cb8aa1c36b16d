//! Leading eigenpair of a neighborhood affinity matrix.
//!
//! Power iteration from the normalized all-ones vector. For a nonnegative
//! symmetric matrix this converges to the Perron vector, which is also the
//! first singular vector. The result is sign-canonicalized so that vectors
//! from different neighborhoods can be compared component-wise.

use super::affinity::AffinityMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerConfig {
    pub max_iters: usize,
    /// Convergence threshold on `1 - cos(v_k, v_{k+1})`.
    pub tol: f64,
}

impl Default for PowerConfig {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpair {
    pub value: f64,
    pub vector: Vec<f64>,
    pub iterations: usize,
}

/// Flips `v` so its component sum is non-negative; a zero sum is resolved
/// by making the first nonzero component positive.
pub fn canonical_sign(v: &mut [f64]) {
    let sum: f64 = v.iter().sum();
    let flip = if sum != 0.0 {
        sum < 0.0
    } else {
        v.iter().find(|x| **x != 0.0).is_some_and(|x| *x < 0.0)
    };
    if flip {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Successive-iterate agreement that rounding alone can produce.
const NOISE_FLOOR: f64 = 4.0 * f64::EPSILON;

/// Leading eigenpair by power iteration from the normalized all-ones vector.
///
/// Stops once the estimated remaining `1 - cos` to the limit is within
/// `cfg.tol`.
pub fn leading_eigenvector(a: &AffinityMatrix, cfg: &PowerConfig) -> Result<Eigenpair> {
    let k = a.size();
    let mut v = vec![1.0 / (k as f64).sqrt(); k];
    let mut w = vec![0.0; k];
    let mut residual = f64::INFINITY;
    let mut prev = f64::INFINITY;
    for it in 1..=cfg.max_iters {
        a.mul_vec(&v, &mut w);
        let value = dot(&v, &w);
        if normalize(&mut w) == 0.0 {
            return Err(Error::Numerics("affinity matrix annihilated the iterate".into()));
        }
        residual = (1.0 - dot(&v, &w)).abs();
        std::mem::swap(&mut v, &mut w);
        // Successive iterates approach each other faster than they approach
        // the limit when the gap is small: with angle contraction r, the
        // distance left is about residual / (1 - r)^2.
        let r = if prev.is_finite() && prev > 0.0 { (residual / prev).sqrt().min(0.999) } else { 0.0 };
        let remaining = residual / ((1.0 - r) * (1.0 - r));
        prev = residual;
        if residual <= NOISE_FLOOR || (residual <= cfg.tol && remaining <= cfg.tol) {
            if it == 1 {
                // The start vector is already an eigenvector; if its eigenvalue
                // is repeated, pin the answer to the lowest basis direction.
                if let Some(pinned) = pinned_basis_vector(a, value) {
                    v = pinned;
                }
            }
            a.mul_vec(&v, &mut w);
            let value = dot(&v, &w);
            canonical_sign(&mut v);
            return Ok(Eigenpair {
                value,
                vector: v,
                iterations: it,
            });
        }
    }
    Err(Error::Convergence {
        iterations: cfg.max_iters,
        residual,
    })
}

/// When the top eigenvalue is repeated, returns the normalized projection of
/// the first basis vector (with a non-vanishing projection) onto the top
/// eigenspace. `None` for a simple top eigenvalue.
fn pinned_basis_vector(a: &AffinityMatrix, top: f64) -> Option<Vec<f64>> {
    let k = a.size();
    let (values, vectors) = jacobi_eigen(a.as_slice(), k);
    let tol = 1e-9 * top.abs().max(1.0);
    let lmax = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if (lmax - top).abs() > tol {
        return None;
    }
    let space: Vec<usize> = (0..k).filter(|&i| (values[i] - lmax).abs() <= tol).collect();
    if space.len() < 2 {
        return None;
    }
    for basis in 0..k {
        let mut p = vec![0.0; k];
        for &e in &space {
            let coef = vectors[basis * k + e];
            for r in 0..k {
                p[r] += coef * vectors[r * k + e];
            }
        }
        if normalize(&mut p) > 1e-6 {
            return Some(p);
        }
    }
    None
}

/// Cyclic Jacobi eigen-decomposition of a symmetric row-major `k x k` matrix.
///
/// Returns eigenvalues and the eigenvector matrix (column `e` pairs with
/// eigenvalue `e`). Used only on the rare degenerate path.
pub(crate) fn jacobi_eigen(m: &[f64], k: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = m.to_vec();
    let mut v = vec![0.0; k * k];
    for i in 0..k {
        v[i * k + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..k)
            .flat_map(|p| (0..k).filter(move |&q| q != p).map(move |q| (p, q)))
            .map(|(p, q)| a[p * k + q] * a[p * k + q])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..k {
            for q in p + 1..k {
                let apq = a[p * k + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q * k + q] - a[p * k + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..k {
                    let arp = a[r * k + p];
                    let arq = a[r * k + q];
                    a[r * k + p] = c * arp - s * arq;
                    a[r * k + q] = s * arp + c * arq;
                }
                for r in 0..k {
                    let apr = a[p * k + r];
                    let aqr = a[q * k + r];
                    a[p * k + r] = c * apr - s * aqr;
                    a[q * k + r] = s * apr + c * aqr;
                }
                for r in 0..k {
                    let vrp = v[r * k + p];
                    let vrq = v[r * k + q];
                    v[r * k + p] = c * vrp - s * vrq;
                    v[r * k + q] = s * vrp + c * vrq;
                }
            }
        }
    }
    ((0..k).map(|i| a[i * k + i]).collect(), v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_pins_first_basis_vector() {
        let e = leading_eigenvector(&AffinityMatrix::identity(3), &PowerConfig::default()).unwrap();
        assert_eq!(e.vector.len(), 3);
        assert!((e.vector[0] - 1.0).abs() < 1e-12);
        assert!(e.vector[1].abs() < 1e-12 && e.vector[2].abs() < 1e-12);
        assert!((e.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_ones_gives_flat_vector() {
        let e = leading_eigenvector(&AffinityMatrix::ones(3), &PowerConfig::default()).unwrap();
        let s = 1.0 / 3f64.sqrt();
        assert!(e.vector.iter().all(|x| (x - s).abs() < 1e-12));
        assert!((e.value - 3.0).abs() < 1e-12);
    }

    #[test]
    fn block_diagonal_tie_pins_first_block() {
        // Two identical disconnected blocks: top eigenvalue 2 with multiplicity 2.
        let a = AffinityMatrix::from_dense(
            4,
            vec![
                1.0, 1.0, 0.0, 0.0, //
                1.0, 1.0, 0.0, 0.0, //
                0.0, 0.0, 1.0, 1.0, //
                0.0, 0.0, 1.0, 1.0,
            ],
        )
        .unwrap();
        let e = leading_eigenvector(&a, &PowerConfig::default()).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for (x, want) in e.vector.iter().zip([h, h, 0.0, 0.0]) {
            assert!((x - want).abs() < 1e-9, "{:?}", e.vector);
        }
    }

    #[test]
    fn two_by_two_closed_form() {
        let a = AffinityMatrix::from_dense(2, vec![1.0, 0.3, 0.3, 1.0]).unwrap();
        let e = leading_eigenvector(&a, &PowerConfig::default()).unwrap();
        assert!((e.value - 1.3).abs() < 1e-12);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((e.vector[0] - h).abs() < 1e-9 && (e.vector[1] - h).abs() < 1e-9);
    }

    #[test]
    fn sign_rule() {
        let mut v = vec![-0.5, -0.5, 0.1];
        canonical_sign(&mut v);
        assert_eq!(v, vec![0.5, 0.5, -0.1]);
        let mut z = vec![0.0, -1.0, 1.0];
        canonical_sign(&mut z);
        assert_eq!(z, vec![0.0, 1.0, -1.0]);
    }

    #[test]
    fn iteration_cap_reports_convergence_error() {
        let a = AffinityMatrix::from_dense(
            3,
            vec![1.0, 0.9, 0.1, 0.9, 1.0, 0.2, 0.1, 0.2, 1.0],
        )
        .unwrap();
        let cfg = PowerConfig { max_iters: 2, tol: 1e-14 };
        match leading_eigenvector(&a, &cfg) {
            Err(Error::Convergence { iterations: 2, residual }) => assert!(residual > 0.0),
            other => panic!("expected convergence error, got {other:?}"),
        }
    }

    #[test]
    fn jacobi_diagonalizes() {
        let m = [2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0];
        let (mut vals, _) = jacobi_eigen(&m, 3);
        vals.sort_by(f64::total_cmp);
        let r = 2f64.sqrt();
        for (v, want) in vals.iter().zip([2.0 - r, 2.0, 2.0 + r]) {
            assert!((v - want).abs() < 1e-12);
        }
    }
}
