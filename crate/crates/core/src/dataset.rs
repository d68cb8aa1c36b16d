//! Labeled source data, unlabeled target data, and the class space.

use std::fmt;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// A class index or the open-set "unknown" outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Class(usize),
    Unknown,
}

impl Label {
    /// On-disk code for [`Label::Unknown`].
    pub const UNKNOWN_CODE: u32 = u32::MAX;

    pub fn class(self) -> Option<usize> {
        match self {
            Label::Class(c) => Some(c),
            Label::Unknown => None,
        }
    }

    pub fn is_unknown(self) -> bool {
        matches!(self, Label::Unknown)
    }

    pub fn to_code(self) -> u32 {
        match self {
            Label::Class(c) => c as u32,
            Label::Unknown => Self::UNKNOWN_CODE,
        }
    }

    pub fn from_code(code: u32) -> Self {
        if code == Self::UNKNOWN_CODE {
            Label::Unknown
        } else {
            Label::Class(code as usize)
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Class(c) => write!(f, "{c}"),
            Label::Unknown => f.write_str("unknown"),
        }
    }
}

/// The source label set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassSpace {
    num_classes: usize,
    names: Option<Vec<String>>,
}

impl ClassSpace {
    pub fn new(num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::config(format!(
                "need at least 2 source classes, got {num_classes}"
            )));
        }
        Ok(Self {
            num_classes,
            names: None,
        })
    }

    pub fn with_names(names: Vec<String>) -> Result<Self> {
        let mut space = Self::new(names.len())?;
        space.names = Some(names);
        Ok(space)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.num_classes
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn name(&self, class: usize) -> Option<&str> {
        self.names.as_ref()?.get(class).map(String::as_str)
    }
}

/// Labeled source samples. Every class of the class space is represented.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceDataset<T> {
    features: Matrix<T>,
    labels: Vec<usize>,
    classes: ClassSpace,
}

impl<T: Scalar> SourceDataset<T> {
    pub fn new(features: Matrix<T>, labels: Vec<usize>, classes: ClassSpace) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::shape(format!(
                "{} labels for {} rows",
                labels.len(),
                features.rows()
            )));
        }
        let mut seen = vec![false; classes.len()];
        for (i, &l) in labels.iter().enumerate() {
            if l >= classes.len() {
                return Err(Error::config(format!(
                    "row {i} has label {l}, outside [0, {})",
                    classes.len()
                )));
            }
            seen[l] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::config(format!("class {missing} has no source samples")));
        }
        Ok(Self {
            features,
            labels,
            classes,
        })
    }

    /// Infers the class space as `max(label) + 1`.
    pub fn from_labels(features: Matrix<T>, labels: Vec<usize>) -> Result<Self> {
        let n = labels.iter().max().map_or(0, |m| m + 1);
        Self::new(features, labels, ClassSpace::new(n)?)
    }

    pub fn features(&self) -> &Matrix<T> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> &ClassSpace {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Unlabeled target samples, with optional evaluation truth.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetDataset<T> {
    features: Matrix<T>,
    truth: Option<Vec<Label>>,
}

impl<T: Scalar> TargetDataset<T> {
    pub fn new(features: Matrix<T>, truth: Option<Vec<Label>>) -> Result<Self> {
        if let Some(t) = &truth {
            if t.len() != features.rows() {
                return Err(Error::shape(format!(
                    "{} truth labels for {} rows",
                    t.len(),
                    features.rows()
                )));
            }
        }
        Ok(Self { features, truth })
    }

    pub fn features(&self) -> &Matrix<T> {
        &self.features
    }

    pub fn truth(&self) -> Option<&[Label]> {
        self.truth.as_deref()
    }

    pub fn without_truth(&self) -> Self {
        Self {
            features: self.features.clone(),
            truth: None,
        }
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_space_needs_two() {
        assert!(ClassSpace::new(1).is_err());
        assert_eq!(ClassSpace::new(2).unwrap().len(), 2);
    }

    #[test]
    fn source_requires_every_class() {
        let f = Matrix::<f32>::from_vec(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        assert!(SourceDataset::new(f.clone(), vec![0, 0, 2], ClassSpace::new(3).unwrap()).is_err());
        assert!(SourceDataset::new(f.clone(), vec![0, 1, 3], ClassSpace::new(3).unwrap()).is_err());
        assert!(SourceDataset::new(f.clone(), vec![0, 1], ClassSpace::new(2).unwrap()).is_err());
        assert!(SourceDataset::new(f, vec![0, 1, 2], ClassSpace::new(3).unwrap()).is_ok());
    }

    #[test]
    fn label_codes() {
        assert_eq!(Label::from_code(0xFFFF_FFFF), Label::Unknown);
        assert_eq!(Label::from_code(4), Label::Class(4));
        assert_eq!(Label::Class(7).to_code(), 7);
    }

    #[test]
    fn target_truth_length_checked() {
        let f = Matrix::<f32>::from_vec(2, 1, vec![1.0, 2.0]).unwrap();
        assert!(TargetDataset::new(f.clone(), Some(vec![Label::Unknown])).is_err());
        assert!(TargetDataset::new(f, None).is_ok());
    }
}
