//! Dataset generation and feature-file I/O.

mod synthetic;
mod udaf;

pub use synthetic::{generate_synthetic, generate_synthetic_with_means, SyntheticConfig, SyntheticData};
pub use udaf::{
    decode_features, encode_features, load_features, load_source, load_target, save_features,
    save_source, save_target_truth, FeatureFile, UDAF_MAGIC, UDAF_VERSION,
};
