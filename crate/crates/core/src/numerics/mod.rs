//! Deterministic numerics: matrices, eigen/SVD solvers, k-means, PRNG and
//! tensor serialization. Everything here computes in f64 and is reproducible
//! bit-for-bit from seeds.

mod eig;
mod kmeans;
mod matrix;
mod rng;
mod svd;
pub mod tensor;

pub use eig::{eig_sym, EigenDecomposition, MAX_JACOBI_SIZE, SYMMETRY_TOL};
pub use kmeans::{kmeans, KmeansResult, DEFAULT_RESTARTS};
pub use matrix::Matrix;
pub use rng::Rng;
pub use svd::{svd_thin, SvdThin};
pub use tensor::{
    read_all_tensors, read_tensor, read_tensor_file, write_tensor, write_tensor_file, Dtype,
    Tensor, TensorData, TensorError,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("matrix is not square: {0} x {1}")]
    NotSquare(usize, usize),
    #[error("matrix is not symmetric: |a[{i}][{j}] - a[{j}][{i}]| = {delta:e}")]
    NotSymmetric { i: usize, j: usize, delta: f64 },
    #[error("non-finite entry at ({0}, {1})")]
    NotFinite(usize, usize),
    #[error("matrix side {0} exceeds the Jacobi solver cap of 512")]
    TooLarge(usize),
    #[error("Jacobi sweeps did not converge within {0} iterations")]
    NoConvergence(usize),
    #[error("k-means needs 1 <= k <= points, got k = {k} with {n} points")]
    BadClusterCount { k: usize, n: usize },
    #[error("k-means could not fill {k} clusters: only {distinct} distinct points")]
    DegenerateClustering { k: usize, distinct: usize },
}
