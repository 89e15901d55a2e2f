//! Confusion-driven label expansion.
//!
//! A trained classifier's validation confusion matrix is symmetrized into a
//! class-affinity graph, the graph is partitioned by normalized spectral
//! clustering, and each class receives a coarse label naming its subset. The
//! coarse labels drive a second softmax head and an attraction penalty during
//! fine-tuning (the multitask pieces live in [`crate::nnet`]; this module
//! builds the partition and wires it up).

mod confusion;
mod partition;
mod spectral;
mod multitask;

pub use confusion::{confusion_counts, row_normalize, symmetrize};
pub use multitask::{attach_superclass_head, multitask_spec, HeadInit};
pub use partition::{expanded_labels, Partition};
pub use spectral::{choose_num_superclasses, normalized_cut, spectral_partition};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabelExpError {
    #[error("bad input: {0}")]
    BadInput(String),
    #[error("class {0} has no samples, confusion row would be empty")]
    EmptyClass(usize),
    #[error("cannot split {classes} classes into {subsets} subsets: {why}")]
    BadSubsetCount { subsets: usize, classes: usize, why: String },
    #[error("numerics failed: {0}")]
    Numerics(#[from] crate::numerics::NumericsError),
    #[error("network rejected the coarse head: {0}")]
    Nnet(#[from] crate::nnet::NnetError),
}
