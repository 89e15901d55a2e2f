//! Audio ingestion and spectrogram extraction.
//!
//! A scene recording becomes up to three image-like representations: a linear
//! frequency STFT, a constant-Q transform with log-spaced bins, and an MFCC
//! stack with delta and delta-delta rows. Each representation is sliced into
//! fixed-width patches that the network consumes. All values leaving this
//! module are normalized to `[0, 1]`.

mod cqt;
mod mfcc;
mod patch;
mod stft;
mod wav;

pub use cqt::{cqt_magnitudes, cqt_spectrogram, CqtConfig};
pub use mfcc::{mel_filterbank, mfcc_spectrogram, mfcc_static_coefficients, MfccConfig};
pub use patch::{bilinear_resize, split_patches, Patch, PATCH_SIZE};
pub use stft::{stft_magnitudes, stft_spectrogram, StftConfig};
pub use wav::{load_wav, resample_linear, write_wav_mono16};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::Matrix;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("unsupported wav file: {0}")]
    UnsupportedWav(String),
    #[error("wav file is missing its {0} chunk")]
    MissingChunk(&'static str),
    #[error("segment has {got} samples but at least {needed} are required{hint}")]
    TooShort { needed: usize, got: usize, hint: String },
    #[error("top CQT bin reaches {fmax:.1} Hz, beyond the Nyquist limit {nyquist:.1} Hz")]
    NyquistViolation { fmax: f64, nyquist: f64 },
    #[error("spectrogram has {cols} frames, fewer than the patch width {width}; use a smaller patch width")]
    NotEnoughFrames { cols: usize, width: usize },
    #[error("invalid parameter: {0}")]
    BadParam(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Mono audio segment with samples in `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct AudioSegment {
    pub segment_id: String,
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    /// Scene class index, when known.
    pub label: Option<usize>,
}

impl AudioSegment {
    pub fn new(segment_id: impl Into<String>, samples: Vec<f64>, sample_rate: u32) -> Self {
        AudioSegment { segment_id: segment_id.into(), samples, sample_rate, label: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectrogramKind {
    Stft,
    Cqt,
    Mfcc,
}

impl SpectrogramKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SpectrogramKind::Stft => "stft",
            SpectrogramKind::Cqt => "cqt",
            SpectrogramKind::Mfcc => "mfcc",
        }
    }

    pub const ALL: [SpectrogramKind; 3] =
        [SpectrogramKind::Stft, SpectrogramKind::Cqt, SpectrogramKind::Mfcc];
}

impl std::fmt::Display for SpectrogramKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A normalized time-frequency image. Rows are frequency-like bins (or MFCC
/// coefficient rows), columns are frames in time order.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    pub segment_id: String,
    pub kind: SpectrogramKind,
    pub values: Matrix,
}

/// File name for a stored spectrogram tensor.
pub fn spectrogram_file_name(segment_id: &str, kind: SpectrogramKind) -> String {
    format!("{segment_id}.{kind}.atns")
}

/// File name for a stored patch-set tensor (rank 3: patches x h x w).
pub fn patches_file_name(segment_id: &str, kind: SpectrogramKind) -> String {
    format!("{segment_id}.{kind}.patches.atns")
}

/// 20 * log10(m + 1e-10), the log compression used by every representation.
pub(crate) fn log_compress(m: f64) -> f64 {
    20.0 * (m + 1e-10).log10()
}

/// Maps a matrix affinely onto `[0, 1]`. A constant matrix (silence) maps to
/// all zeros rather than dividing by zero.
pub(crate) fn minmax_normalize(values: &mut Matrix) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values.data() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = hi - lo;
    if !(span > 0.0) || !span.is_finite() {
        for i in 0..values.rows() {
            values.row_mut(i).fill(0.0);
        }
        return;
    }
    for i in 0..values.rows() {
        for v in values.row_mut(i) {
            *v = (*v - lo) / span;
        }
    }
}

/// Periodic Hann window of length `n`.
pub(crate) fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (1.0 - (std::f64::consts::TAU * i as f64 / n as f64).cos()))
        .collect()
}

pub(crate) fn ensure_audio(seg: &AudioSegment) -> Result<(), DspError> {
    if seg.sample_rate == 0 {
        return Err(DspError::BadParam("sample_rate must be positive".into()));
    }
    if seg.samples.is_empty() {
        return Err(DspError::TooShort { needed: 1, got: 0, hint: String::new() });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_maps_constant_to_zero() {
        let mut m = Matrix::from_fn(3, 4, |_, _| -200.0);
        minmax_normalize(&mut m);
        assert!(m.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn normalization_hits_unit_range() {
        let mut m = Matrix::from_rows(&[vec![-3.0, 1.0], vec![0.0, 5.0]]);
        minmax_normalize(&mut m);
        assert_eq!(m[(0, 0)], 0.0);
        assert_eq!(m[(1, 1)], 1.0);
        assert!(m.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn hann_is_zero_at_origin_and_symmetric_inside() {
        let w = hann_window(8);
        assert_eq!(w[0], 0.0);
        for i in 1..8 {
            assert!((w[i] - w[8 - i]).abs() < 1e-15);
        }
    }
}
