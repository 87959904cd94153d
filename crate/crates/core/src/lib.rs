//! Hard-sample rectification for clustering-based unsupervised re-identification.
//!
//! Pseudo labels come from density clustering of the current embeddings. Hard
//! positives (same person, different cameras, split across clusters) are recovered by
//! mutual inter-camera mining ([`icm`]); hard negatives (different people merged
//! into one cluster) are split apart using part-level features ([`pbh`]). A small
//! projector is trained on the rectified labels ([`trainer`]) and scored with the
//! usual Rank-1 / mAP retrieval protocol ([`eval`]).

pub mod cli;
pub mod cluster;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod icm;
pub mod io;
pub mod labels;
pub mod matrix;
pub mod pbh;
pub mod seed;
pub mod similarity;
pub mod synth;
pub mod trainer;

pub use dataset::EmbeddingSet;
pub use error::{HsrError, Result};
pub use labels::{PseudoLabels, NOISE};
pub use matrix::Matrix;
