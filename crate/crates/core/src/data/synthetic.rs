//! Two-domain Gaussian-blob benchmark with a controllable class split.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataset::{ClassSpace, Label, SourceDataset, TargetDataset};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;

/// Class means lie on a sphere of this radius, in units of `spread`.
const MEAN_RADIUS: f64 = 10.0;
/// Minimum distance of a target-private mean from every common mean, in units of `spread`.
const PRIVATE_MARGIN: f64 = 4.0;
const MAX_REJECTIONS: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n_common: usize,
    pub n_src_private: usize,
    pub n_tgt_private: usize,
    pub dim: usize,
    pub per_class: usize,
    pub shift: f64,
    pub spread: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    /// The 10/10/11 split.
    fn default() -> Self {
        Self {
            n_common: 10,
            n_src_private: 10,
            n_tgt_private: 11,
            dim: 32,
            per_class: 40,
            shift: 2.0,
            spread: 1.0,
            seed: 7,
        }
    }
}

impl SyntheticConfig {
    pub fn num_source_classes(&self) -> usize {
        self.n_common + self.n_src_private
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_common < 1 {
            return Err(Error::config("n_common must be at least 1"));
        }
        if self.num_source_classes() < 2 {
            return Err(Error::config("need at least 2 source classes"));
        }
        if self.dim < 2 {
            return Err(Error::config("dim must be at least 2"));
        }
        if self.per_class < 2 {
            return Err(Error::config("per_class must be at least 2"));
        }
        if !(self.shift.is_finite() && self.shift >= 0.0) {
            return Err(Error::config("shift must be finite and non-negative"));
        }
        if !(self.spread.is_finite() && self.spread > 0.0) {
            return Err(Error::config("spread must be finite and positive"));
        }
        Ok(())
    }
}

/// Generated datasets plus the means they were drawn around.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub source: SourceDataset<f32>,
    pub target: TargetDataset<f32>,
    /// One mean per source class.
    pub source_means: Vec<Vec<f64>>,
    /// Shifted common means followed by target-private means.
    pub target_means: Vec<Vec<f64>>,
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn on_sphere(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> Vec<f64> {
    loop {
        let v = gaussian(rng, dim);
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x * radius / n).collect();
        }
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn draw_blob(rng: &mut ChaCha8Rng, mean: &[f64], spread: f64, count: usize, out: &mut Vec<f32>) {
    for _ in 0..count {
        for &m in mean {
            let z: f64 = rng.sample(StandardNormal);
            out.push((m + spread * z) as f32);
        }
    }
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<(SourceDataset<f32>, TargetDataset<f32>)> {
    let d = generate_synthetic_with_means(cfg)?;
    Ok((d.source, d.target))
}

pub fn generate_synthetic_with_means(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let mut rng = rng::stream(cfg.seed, rng::DATA);
    let radius = MEAN_RADIUS * cfg.spread;
    let n_src = cfg.num_source_classes();

    let source_means: Vec<Vec<f64>> = (0..n_src).map(|_| on_sphere(&mut rng, cfg.dim, radius)).collect();
    let direction = on_sphere(&mut rng, cfg.dim, 1.0);
    let mut target_means: Vec<Vec<f64>> = source_means[..cfg.n_common]
        .iter()
        .map(|m| m.iter().zip(&direction).map(|(x, u)| x + cfg.shift * u).collect())
        .collect();

    let mut rejections = 0;
    while target_means.len() < cfg.n_common + cfg.n_tgt_private {
        let candidate = on_sphere(&mut rng, cfg.dim, radius);
        let clear = source_means[..cfg.n_common]
            .iter()
            .chain(&target_means[..cfg.n_common])
            .all(|m| distance(m, &candidate) >= PRIVATE_MARGIN * cfg.spread);
        if clear {
            target_means.push(candidate);
        } else {
            rejections += 1;
            if rejections > MAX_REJECTIONS {
                return Err(Error::config(
                    "could not place target-private means away from the common classes",
                ));
            }
        }
    }

    let mut src_data = Vec::with_capacity(n_src * cfg.per_class * cfg.dim);
    let mut src_labels = Vec::with_capacity(n_src * cfg.per_class);
    for (c, mean) in source_means.iter().enumerate() {
        draw_blob(&mut rng, mean, cfg.spread, cfg.per_class, &mut src_data);
        src_labels.extend(std::iter::repeat_n(c, cfg.per_class));
    }

    let n_tgt_classes = target_means.len();
    let mut tgt_data = Vec::with_capacity(n_tgt_classes * cfg.per_class * cfg.dim);
    let mut truth = Vec::with_capacity(n_tgt_classes * cfg.per_class);
    for (c, mean) in target_means.iter().enumerate() {
        draw_blob(&mut rng, mean, cfg.spread, cfg.per_class, &mut tgt_data);
        let label = if c < cfg.n_common {
            Label::Class(c)
        } else {
            Label::Unknown
        };
        truth.extend(std::iter::repeat_n(label, cfg.per_class));
    }

    let source = SourceDataset::new(
        Matrix::from_vec(src_labels.len(), cfg.dim, src_data)?,
        src_labels,
        ClassSpace::new(n_src)?,
    )?;
    let target = TargetDataset::new(
        Matrix::from_vec(truth.len(), cfg.dim, tgt_data)?,
        Some(truth),
    )?;
    Ok(SyntheticData {
        source,
        target,
        source_means,
        target_means,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::encode_features;

    fn small() -> SyntheticConfig {
        SyntheticConfig {
            per_class: 12,
            dim: 8,
            ..SyntheticConfig::default()
        }
    }

    #[test]
    fn office_split_shape() {
        let (s, t) = generate_synthetic(&small()).unwrap();
        assert_eq!(s.classes().len(), 20);
        assert_eq!(s.len(), 20 * 12);
        assert_eq!(t.len(), 21 * 12);
        let truth = t.truth().unwrap();
        assert_eq!(truth.iter().filter(|l| l.is_unknown()).count(), 11 * 12);
        assert!(truth.iter().all(|l| l.class().is_none_or(|c| c < 10)));
    }

    #[test]
    fn closed_set_degenerate_case() {
        let cfg = SyntheticConfig {
            n_src_private: 0,
            n_tgt_private: 0,
            shift: 0.0,
            n_common: 3,
            ..small()
        };
        let d = generate_synthetic_with_means(&cfg).unwrap();
        assert!(d.target.truth().unwrap().iter().all(|l| !l.is_unknown()));
        assert_eq!(d.source_means, d.target_means);
    }

    #[test]
    fn deterministic_bytes() {
        let (s1, t1) = generate_synthetic(&small()).unwrap();
        let (s2, t2) = generate_synthetic(&small()).unwrap();
        assert_eq!(
            encode_features(s1.features(), None).unwrap(),
            encode_features(s2.features(), None).unwrap()
        );
        assert_eq!(
            encode_features(t1.features(), t1.truth()).unwrap(),
            encode_features(t2.features(), t2.truth()).unwrap()
        );
        let (s3, _) = generate_synthetic(&SyntheticConfig { seed: 8, ..small() }).unwrap();
        assert_ne!(s1.features(), s3.features());
    }

    #[test]
    fn private_means_keep_their_distance() {
        let cfg = SyntheticConfig::default();
        let d = generate_synthetic_with_means(&cfg).unwrap();
        for p in &d.target_means[cfg.n_common..] {
            for m in d.source_means[..cfg.n_common].iter().chain(&d.target_means[..cfg.n_common]) {
                assert!(distance(p, m) >= 4.0 * cfg.spread);
            }
        }
        for m in &d.source_means {
            let r = m.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((r - 10.0).abs() < 1e-9);
        }
    }

    #[test]
    fn shift_is_a_common_translation() {
        let cfg = SyntheticConfig::default();
        let d = generate_synthetic_with_means(&cfg).unwrap();
        let delta0: Vec<f64> = d.target_means[0].iter().zip(&d.source_means[0]).map(|(a, b)| a - b).collect();
        let len = delta0.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((len - cfg.shift).abs() < 1e-9);
        for c in 1..cfg.n_common {
            for (k, dk) in delta0.iter().enumerate() {
                assert!((d.target_means[c][k] - d.source_means[c][k] - dk).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn empirical_means_converge() {
        for per_class in [10usize, 100, 1000] {
            let cfg = SyntheticConfig {
                n_common: 2,
                n_src_private: 1,
                n_tgt_private: 1,
                dim: 4,
                per_class,
                ..SyntheticConfig::default()
            };
            let d = generate_synthetic_with_means(&cfg).unwrap();
            let bound = 3.0 * cfg.spread / (per_class as f64).sqrt();
            for (c, mean) in d.source_means.iter().enumerate() {
                for (k, &m) in mean.iter().enumerate() {
                    let emp: f64 = (0..per_class)
                        .map(|i| d.source.features().row(c * per_class + i)[k] as f64)
                        .sum::<f64>()
                        / per_class as f64;
                    assert!((emp - m).abs() < bound, "class {c} coord {k}: {emp} vs {m}");
                }
            }
        }
    }

    #[test]
    fn invalid_configs() {
        for bad in [
            SyntheticConfig { n_common: 0, ..small() },
            SyntheticConfig { dim: 1, ..small() },
            SyntheticConfig { spread: 0.0, ..small() },
            SyntheticConfig { shift: -1.0, ..small() },
            SyntheticConfig { n_common: 1, n_src_private: 0, ..small() },
        ] {
            assert!(matches!(generate_synthetic(&bad), Err(Error::Config(_))));
        }
    }
}
