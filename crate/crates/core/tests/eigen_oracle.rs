//! Power iteration against a dense symmetric eigendecomposition.

use kuda::kls::{canonical_sign, leading_eigenvector, AffinityMatrix, PowerConfig};
use kuda::Matrix;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// A rectified-cosine affinity of `k` random points around a random center.
fn random_affinity(rng: &mut ChaCha8Rng) -> AffinityMatrix {
    let k = rng.random_range(2..=32);
    let d = rng.random_range(2..=16);
    let spread: f64 = rng.random_range(0.2..3.0);
    let center: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let mut data = Vec::with_capacity(k * d);
    for _ in 0..k {
        for c in &center {
            let n: f64 = rng.sample(StandardNormal);
            data.push(c + spread * n);
        }
    }
    AffinityMatrix::from_features(&Matrix::from_vec(k, d, data).unwrap()).unwrap()
}

/// Top eigenpair and spectral gap ratio `lambda_2 / lambda_1` from nalgebra.
fn dense_top(a: &AffinityMatrix) -> (f64, Vec<f64>, f64) {
    let k = a.size();
    let m = DMatrix::from_row_slice(k, k, a.as_slice());
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let top = order[0];
    let mut v: Vec<f64> = eig.eigenvectors.column(top).iter().copied().collect();
    canonical_sign(&mut v);
    let l1 = eig.eigenvalues[top];
    let l2 = if k > 1 { eig.eigenvalues[order[1]].abs() } else { 0.0 };
    let l_min = eig.eigenvalues[order[k - 1]].abs();
    (l1, v, l2.max(l_min) / l1)
}

#[test]
fn matches_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cfg = PowerConfig::default();
    let mut checked = 0;
    while checked < 300 {
        let a = random_affinity(&mut rng);
        let (value, dense, ratio) = dense_top(&a);
        if ratio > 0.95 {
            continue;
        }
        let p = leading_eigenvector(&a, &cfg).unwrap();
        let cos: f64 = p.vector.iter().zip(&dense).map(|(x, y)| x * y).sum();
        assert!(cos.abs() >= 1.0 - 1e-8, "cos {cos} at K = {}", a.size());
        assert!(((p.value - value) / value).abs() < 1e-8, "{} vs {value}", p.value);
        let norm: f64 = p.vector.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        assert!(p.vector.iter().sum::<f64>() >= 0.0);
        checked += 1;
    }
}

#[test]
fn perron_vector_is_nonnegative() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let a = random_affinity(&mut rng);
        if dense_top(&a).2 > 0.95 {
            continue;
        }
        let p = leading_eigenvector(&a, &PowerConfig::default()).unwrap();
        assert!(p.vector.iter().all(|&x| x > -1e-9));
    }
}
