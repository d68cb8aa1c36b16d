//! The UDAF feature container.
//!
//! Little-endian layout, no padding:
//!
//! | offset | size        | field                                   |
//! |--------|-------------|-----------------------------------------|
//! | 0      | 4           | magic `UDAF`                            |
//! | 4      | 4           | version (`u32`, = 1)                    |
//! | 8      | 4           | rows (`u32`)                            |
//! | 12     | 4           | dim (`u32`)                             |
//! | 16     | 4           | flags (`u32`, bit 0 = labels present)   |
//! | 20     | rows*dim*4  | features, `f32`, row-major              |
//! | ...    | rows*4      | labels (`u32`, `0xFFFFFFFF` = unknown)  |

use std::fs;
use std::path::Path;

use crate::dataset::{ClassSpace, Label, SourceDataset, TargetDataset};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const UDAF_MAGIC: &[u8; 4] = b"UDAF";
pub const UDAF_VERSION: u32 = 1;
const HEADER_LEN: usize = 20;
const FLAG_LABELS: u32 = 1;

/// Decoded contents of a UDAF file.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFile {
    pub features: Matrix<f32>,
    pub labels: Option<Vec<Label>>,
}

pub fn encode_features(features: &Matrix<f32>, labels: Option<&[Label]>) -> Result<Vec<u8>> {
    if let Some(l) = labels {
        if l.len() != features.rows() {
            return Err(Error::shape(format!(
                "{} labels for {} rows",
                l.len(),
                features.rows()
            )));
        }
    }
    let rows = u32::try_from(features.rows()).map_err(|_| Error::shape("too many rows"))?;
    let dim = u32::try_from(features.dim()).map_err(|_| Error::shape("dimension too large"))?;
    let label_bytes = labels.map_or(0, |l| l.len() * 4);
    let mut out = Vec::with_capacity(HEADER_LEN + features.as_slice().len() * 4 + label_bytes);
    out.extend_from_slice(UDAF_MAGIC);
    out.extend_from_slice(&UDAF_VERSION.to_le_bytes());
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&dim.to_le_bytes());
    let flags = if labels.is_some() { FLAG_LABELS } else { 0 };
    out.extend_from_slice(&flags.to_le_bytes());
    for v in features.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(l) = labels {
        for lab in l {
            out.extend_from_slice(&lab.to_code().to_le_bytes());
        }
    }
    Ok(out)
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    let b = bytes
        .get(offset..offset + 4)
        .ok_or_else(|| Error::format(bytes.len() as u64, "truncated header"))?;
    Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureFile> {
    if bytes.len() < 4 || &bytes[..4] != UDAF_MAGIC {
        return Err(Error::format(0, "bad magic, expected \"UDAF\""));
    }
    let version = read_u32(bytes, 4)?;
    if version != UDAF_VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let rows = read_u32(bytes, 8)? as usize;
    let dim = read_u32(bytes, 12)? as usize;
    let flags = read_u32(bytes, 16)?;
    if dim == 0 {
        return Err(Error::format(12, "dim must be at least 1"));
    }
    if flags & !FLAG_LABELS != 0 {
        return Err(Error::format(16, format!("unknown flag bits {flags:#x}")));
    }
    let has_labels = flags & FLAG_LABELS != 0;

    let n = rows
        .checked_mul(dim)
        .ok_or_else(|| Error::format(8, "rows*dim overflows"))?;
    let feat_end = HEADER_LEN + n * 4;
    let end = feat_end + if has_labels { rows * 4 } else { 0 };
    if bytes.len() < end {
        let what = if bytes.len() < feat_end { "feature" } else { "label" };
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated {what} payload, expected {end} bytes"),
        ));
    }
    if bytes.len() > end {
        return Err(Error::format(end as u64, "trailing bytes after payload"));
    }

    let mut data = Vec::with_capacity(n);
    for (i, c) in bytes[HEADER_LEN..feat_end].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
        if !v.is_finite() {
            return Err(Error::format(
                (HEADER_LEN + i * 4) as u64,
                format!("non-finite feature value at row {}, column {}", i / dim, i % dim),
            ));
        }
        data.push(v);
    }
    let labels = has_labels.then(|| {
        bytes[feat_end..end]
            .chunks_exact(4)
            .map(|c| Label::from_code(u32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect()
    });
    Ok(FeatureFile {
        features: Matrix::from_vec(rows, dim, data)?,
        labels,
    })
}

pub fn save_features(
    path: impl AsRef<Path>,
    features: &Matrix<f32>,
    labels: Option<&[Label]>,
) -> Result<()> {
    fs::write(path, encode_features(features, labels)?)?;
    Ok(())
}

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureFile> {
    decode_features(&fs::read(path)?)
}

pub fn save_source(path: impl AsRef<Path>, source: &SourceDataset<f32>) -> Result<()> {
    let labels: Vec<Label> = source.labels().iter().map(|&l| Label::Class(l)).collect();
    save_features(path, source.features(), Some(&labels))
}

/// Writes the target features together with their truth labels.
pub fn save_target_truth(path: impl AsRef<Path>, target: &TargetDataset<f32>) -> Result<()> {
    let truth = target
        .truth()
        .ok_or_else(|| Error::Eval("target has no truth labels".into()))?;
    save_features(path, target.features(), Some(truth))
}

/// Loads a labeled source file. Unknown labels are rejected.
pub fn load_source(path: impl AsRef<Path>) -> Result<SourceDataset<f32>> {
    let file = load_features(path)?;
    let labels = file
        .labels
        .ok_or_else(|| Error::format(16, "source file has no labels"))?;
    let mut classes = Vec::with_capacity(labels.len());
    for (i, l) in labels.iter().enumerate() {
        match l {
            Label::Class(c) => classes.push(*c),
            Label::Unknown => {
                let offset = HEADER_LEN + file.features.as_slice().len() * 4 + i * 4;
                return Err(Error::format(offset as u64, "source label marked unknown"));
            }
        }
    }
    let n = classes.iter().max().map_or(0, |m| m + 1);
    SourceDataset::new(file.features, classes, ClassSpace::new(n)?)
}

/// Loads target features and, optionally, a truth file whose labels must
/// cover exactly the same rows.
pub fn load_target(
    features: impl AsRef<Path>,
    truth: Option<&Path>,
) -> Result<TargetDataset<f32>> {
    let file = load_features(features)?;
    let labels = match truth {
        None => file.labels,
        Some(p) => {
            let t = load_features(p)?;
            let labels = t
                .labels
                .ok_or_else(|| Error::format(16, "truth file has no labels"))?;
            if labels.len() != file.features.rows() {
                return Err(Error::format(
                    8,
                    format!(
                        "truth file has {} rows, target has {}",
                        labels.len(),
                        file.features.rows()
                    ),
                ));
            }
            Some(labels)
        }
    };
    TargetDataset::new(file.features, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Matrix<f32> {
        Matrix::from_vec(3, 2, vec![1.0, -2.5, 3.25, 0.0, -0.0, 1e-30]).unwrap()
    }

    #[test]
    fn round_trip_small() {
        let m = sample();
        let labels = vec![Label::Class(0), Label::Unknown, Label::Class(2)];
        let bytes = encode_features(&m, Some(&labels)).unwrap();
        assert_eq!(bytes.len(), 20 + 24 + 12);
        let back = decode_features(&bytes).unwrap();
        assert_eq!(back.labels.as_deref(), Some(&labels[..]));
        let a: Vec<u32> = m.as_slice().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u32> = back.features.as_slice().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn header_layout() {
        let bytes = encode_features(&sample(), None).unwrap();
        assert_eq!(&bytes[0..4], b"UDAF");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &3u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &2u32.to_le_bytes());
        assert_eq!(&bytes[16..20], &0u32.to_le_bytes());
        assert_eq!(&bytes[20..24], &1.0f32.to_le_bytes());
    }

    #[test]
    fn bad_magic() {
        let mut bytes = encode_features(&sample(), None).unwrap();
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(
            decode_features(&bytes),
            Err(Error::Format { offset: 0, .. })
        ));
    }

    #[test]
    fn truncated_payload_reports_offset() {
        let bytes = encode_features(&sample(), None).unwrap();
        let cut = &bytes[..bytes.len() - 3];
        match decode_features(cut) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, cut.len() as u64),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_labels() {
        let labels = vec![Label::Class(0); 3];
        let bytes = encode_features(&sample(), Some(&labels)).unwrap();
        assert!(decode_features(&bytes[..bytes.len() - 4]).is_err());
    }

    #[test]
    fn nan_entry_reports_offset() {
        let mut bytes = encode_features(&sample(), None).unwrap();
        bytes[28..32].copy_from_slice(&f32::NAN.to_le_bytes());
        match decode_features(&bytes) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 28),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn label_count_must_match_rows() {
        assert!(encode_features(&sample(), Some(&[Label::Class(0)])).is_err());
    }

    #[test]
    fn truth_file_row_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let t = dir.path().join("t.udaf");
        let truth = dir.path().join("truth.udaf");
        save_features(&t, &sample(), None).unwrap();
        let short = Matrix::from_vec(2, 1, vec![0.0f32, 1.0]).unwrap();
        save_features(&truth, &short, Some(&[Label::Unknown, Label::Class(1)])).unwrap();
        assert!(matches!(
            load_target(&t, Some(&truth)),
            Err(Error::Format { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn round_trip_is_bit_exact(
            (rows, dim, data, codes) in (1usize..40, 1usize..24).prop_flat_map(|(r, d)| (
                Just(r),
                Just(d),
                proptest::collection::vec(proptest::num::f32::NORMAL | proptest::num::f32::ZERO | proptest::num::f32::SUBNORMAL, r * d),
                proptest::option::of(proptest::collection::vec(any::<u32>(), r)),
            ))
        ) {
            let m = Matrix::from_vec(rows, dim, data).unwrap();
            let labels: Option<Vec<Label>> = codes.map(|c| c.into_iter().map(Label::from_code).collect());
            let bytes = encode_features(&m, labels.as_deref()).unwrap();
            let back = decode_features(&bytes).unwrap();
            let a: Vec<u32> = m.as_slice().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = back.features.as_slice().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
            prop_assert_eq!(&back.labels, &labels);
            prop_assert_eq!(encode_features(&back.features, back.labels.as_deref()).unwrap(), bytes);
        }
    }
}
