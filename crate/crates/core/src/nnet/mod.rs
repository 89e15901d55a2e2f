//! From-scratch convolutional network: NCHW tensors, conv/pool/full layers
//! with batch norm and inverted dropout, softmax heads, Adam and momentum SGD,
//! a deterministic training loop with early stopping, JSON+tensor checkpoints,
//! and a finite-difference gradient checker.
//!
//! Everything is generic over [`Real`] so the same code trains in f32 and is
//! gradient-checked in f64. Determinism contract: given the same seeds and
//! data, training produces bit-identical weights regardless of thread count.
//! Parallel reductions that would reorder float additions are kept sequential
//! or sliced along independent output coordinates.

mod checkpoint;
mod config;
mod gradcheck;
mod layers;
mod loss;
mod network;
mod optim;
mod real;
mod tensor4;
mod train;

pub use checkpoint::{checkpoint_paths, load_checkpoint, save_checkpoint};
pub use config::{table1, vgg_mini, LayerSpec, NetworkConfig, ShapePlan};
pub use gradcheck::{finite_diff_check, loss_for_check, GradCheckReport};
pub use layers::{BatchNormState, ConvParams, FullParams, Head, LayerParams};
pub use loss::{loss_and_output_grads, regularizer_value, LossOutput, LossSpec};
pub use network::{
    apply_running_update, argmax_rows, backward, build_network, forward, Gradients, HeadGrads,
    LayerGrads, Mode, NetworkState, Pass,
};
pub use optim::{Optimizer, OptimizerKind};
pub use real::Real;
pub use tensor4::Tensor4;
pub use train::{
    extract_features, predict_probs, stratified_split, train, write_history_csv, Dataset,
    EarlyStopper, EpochStats, TrainConfig, TrainOutcome,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnetError {
    #[error("network config invalid: {0}")]
    BadConfig(String),
    #[error("layer {layer} collapses the spatial grid to {h}x{w}")]
    SpatialCollapse { layer: usize, h: usize, w: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("dataset invalid: {0}")]
    BadDataset(String),
    #[error("checkpoint invalid: {0}")]
    BadCheckpoint(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("tensor i/o failed: {0}")]
    Tensor(#[from] crate::numerics::TensorError),
    #[error("i/o failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("json failed: {0}")]
    Json(#[from] serde_json::Error),
}
