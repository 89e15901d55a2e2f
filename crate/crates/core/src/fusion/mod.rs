//! Late fusion of per-patch deep features: random-order concatenation into
//! one long vector per segment, 99%-variance PCA compression, pairwise
//! aggregation across spectrogram views, one-vs-rest linear SVMs solved by
//! dual coordinate descent, and per-segment majority voting.

mod concat;
mod pca;
mod svm;
mod voting;

pub use concat::{aggregate, concat_random, PatchFeatureSet, SegmentFeatureSet};
pub use pca::{pca_fit, Pca};
pub use svm::{svm_train, SvmConfig, SvmModel, SvmTrainReport};
pub use voting::{majority_vote, sample_accuracy, softmax_scores, voted_accuracy};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("bad input: {0}")]
    BadInput(String),
    #[error("class {0} has no samples")]
    EmptyClass(usize),
    #[error("features are degenerate: {0}")]
    DegenerateFeatures(String),
    #[error("svm head {class} stalled at duality gap {gap:e}")]
    SvmDidNotConverge { class: usize, gap: f64 },
    #[error(transparent)]
    Numerics(#[from] crate::numerics::NumericsError),
}
