//! Acoustic scene classification pipeline.
//!
//! Drives the library crate end to end over an experiment directory: audio
//! synthesis (or an external manifest), spectrogram patch extraction, CNN
//! training, confusion-driven label expansion with joint finetuning, deep
//! feature extraction, pairwise feature fusion with PCA and linear SVMs, and
//! finally evaluation and a static report. Every stage writes its outputs
//! under the experiment `workdir` and records what it did, so stages can be
//! re-run, skipped when already done, and checked against the exact config
//! that produced them.

pub mod config;
pub mod kfold;
pub mod manifest;
pub mod runner;
pub mod stages;
pub mod synth;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config invalid: {0}")]
    BadConfig(String),
    #[error("stage {stage} needs `{needed}` to run first; run `ascfuse {needed} --config <file>`")]
    MissingPrereq { stage: String, needed: String },
    #[error("stage {stage} was run with a different config (recorded hash {recorded}, current {current}); use a fresh workdir or --force")]
    ConfigChanged { stage: String, recorded: String, current: String },
    #[error("dataset manifest invalid: {0}")]
    BadManifest(String),
    #[error("{0}")]
    StageFailed(String),
    #[error(transparent)]
    Dsp(#[from] asc_core::dsp::DspError),
    #[error(transparent)]
    Nnet(#[from] asc_core::nnet::NnetError),
    #[error(transparent)]
    LabelExp(#[from] asc_core::labelexp::LabelExpError),
    #[error(transparent)]
    Fusion(#[from] asc_core::fusion::FusionError),
    #[error(transparent)]
    Numerics(#[from] asc_core::numerics::NumericsError),
    #[error(transparent)]
    Tensor(#[from] asc_core::numerics::TensorError),
    #[error("i/o failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("json failed: {0}")]
    Json(#[from] serde_json::Error),
}
