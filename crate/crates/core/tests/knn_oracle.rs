//! Exact k-NN against a brute-force full sort.

use kuda::matrix::{dot_f64, l2_normalize};
use kuda::membank::{Exclude, MemoryBank};
use kuda::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn scan(bank: &MemoryBank<f32>, query: &[f32], k: usize, skip: impl Fn(usize) -> bool) -> Vec<usize> {
    let q = l2_normalize(query).unwrap();
    let mut all: Vec<(f64, usize)> =
        (0..bank.len()).filter(|&i| !skip(i)).map(|i| (dot_f64(&q, bank.row(i)), i)).collect();
    all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|(_, i)| i).collect()
}

fn random_bank(rng: &mut ChaCha8Rng, n: usize, d: usize) -> MemoryBank<f32> {
    let mut data: Vec<f32> = (0..n * d).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
    // Duplicate some rows so ties are exercised.
    for _ in 0..n / 10 {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        let row: Vec<f32> = data[a * d..(a + 1) * d].to_vec();
        data[b * d..(b + 1) * d].copy_from_slice(&row);
    }
    MemoryBank::new(Matrix::from_vec(n, d, data).unwrap(), 0.9).unwrap()
}

#[test]
fn matches_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..40 {
        let n = rng.random_range(100..=2000);
        let d = 64;
        let bank = random_bank(&mut rng, n, d);
        for k in [1, 10, 100] {
            let query: Vec<f32> = if rng.random_bool(0.3) {
                bank.row(rng.random_range(0..n)).to_vec()
            } else {
                (0..d).map(|_| rng.sample(StandardNormal)).collect()
            };
            let got = bank.knn(&query, k).unwrap();
            assert_eq!(got.indices, scan(&bank, &query, k, |_| false));
            let slot = rng.random_range(0..n);
            let got = bank.knn_filtered(&query, k, Exclude::Slot(slot)).unwrap();
            assert_eq!(got.indices, scan(&bank, &query, k, |i| i == slot));
        }
    }
}

#[test]
fn label_filter_matches_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 500;
    let bank = random_bank(&mut rng, n, 16);
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..5)).collect();
    for label in 0..5 {
        let q: Vec<f32> = (0..16).map(|_| rng.sample(StandardNormal)).collect();
        let got = bank.knn_filtered(&q, 10, Exclude::Label { labels: &labels, label }).unwrap();
        assert_eq!(got.indices, scan(&bank, &q, 10, |i| labels[i] == label));
    }
}
