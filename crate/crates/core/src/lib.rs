//! Knowability-aware universal domain adaptation on fixed embedding features.
//!
//! A labeled source domain and an unlabeled target domain share some classes;
//! each may also have private ones. Target samples are labeled known, unknown,
//! or uncertain by comparing the spectral structure of their neighborhoods in
//! the two domains, and a one-vs-all classifier is trained on top.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common choices. Training and file formats use `f32`.

pub mod data;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod kls;
pub mod matrix;
pub mod membank;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod train;

pub use dataset::{ClassSpace, Label, SourceDataset, TargetDataset};
pub use error::{Error, Result};
pub use eval::{evaluate, h_score, histogram, kls_accuracy, Averaging, EvalReport, Histogram};
pub use kls::{KlsConfig, KlsVerdict, Status};
pub use matrix::Matrix;
pub use membank::MemoryBank;
pub use model::{Checkpoint, Model, ModelShape, ProbMatrix};
pub use scalar::Scalar;
pub use train::{fit, resume, StepReport, TrainConfig, TrainState, Trainer};

pub type FeatureMatrix = Matrix<f32>;
pub type Model32 = Model<f32>;
pub type Model64 = Model<f64>;
pub type MemoryBank32 = MemoryBank<f32>;
pub type MemoryBank64 = MemoryBank<f64>;
pub type Source32 = SourceDataset<f32>;
pub type Target32 = TargetDataset<f32>;
pub type TrainState32 = TrainState<f32>;
