//! Building blocks for acoustic scene classification: deterministic numerics,
//! multi-representation spectrograms, a small VGG-style convolutional network,
//! confusion-driven label expansion, and deep-feature fusion classifiers.
//!
//! The crate is organized bottom-up:
//!
//! * [`numerics`] — f64 matrices, Jacobi eigensolver, thin SVD, k-means,
//!   splitmix64 PRNG, and the ATNS tensor format.
//! * [`dsp`] — WAV ingestion and STFT / CQT / MFCC spectrogram patches.
//! * [`nnet`] — the convolutional network, its losses, optimizers, training
//!   loop and checkpoints.
//! * [`labelexp`] — confusion-matrix spectral clustering of classes into
//!   super-classes and the multitask fine-tuning that uses them.
//! * [`fusion`] — randomized feature concatenation, PCA reduction, linear
//!   SVM fusion and majority voting.
//!
//! Every randomized step threads an explicit [`numerics::Rng`] seed, so any
//! result in this crate is reproducible from its inputs and seeds alone.

pub mod dsp;
pub mod fusion;
pub mod labelexp;
pub mod nnet;
pub mod numerics;
