//! MFCC stack: static coefficients plus delta and delta-delta rows.

use rustfft::{num_complex::Complex, FftPlanner};

use super::{ensure_audio, hann_window, minmax_normalize, AudioSegment, DspError, Spectrogram,
            SpectrogramKind};
use crate::numerics::Matrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MfccConfig {
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub n_mels: usize,
    /// Retained cepstral coefficients, c0 included.
    pub n_coeffs: usize,
}

impl Default for MfccConfig {
    fn default() -> Self {
        MfccConfig { frame_ms: 200.0, hop_ms: 100.0, n_mels: 128, n_coeffs: 60 }
    }
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10.0f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filterbank as an `n_mels x (n_fft/2 + 1)` weight matrix.
/// Filters are unit-peak triangles spaced evenly on the mel scale from 0 Hz
/// to Nyquist; column `k` corresponds to DFT bin frequency `k * sr / n_fft`.
pub fn mel_filterbank(n_fft: usize, sample_rate: f64, n_mels: usize) -> Matrix {
    let n_bins = n_fft / 2 + 1;
    let top_mel = hz_to_mel(sample_rate / 2.0);
    let points: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(top_mel * i as f64 / (n_mels + 1) as f64))
        .collect();

    let mut fb = Matrix::zeros(n_mels, n_bins);
    for m in 0..n_mels {
        let (left, center, right) = (points[m], points[m + 1], points[m + 2]);
        for k in 0..n_bins {
            let f = k as f64 * sample_rate / n_fft as f64;
            let w = if f > left && f < center {
                (f - left) / (center - left)
            } else if f == center {
                1.0
            } else if f > center && f < right {
                (right - f) / (right - center)
            } else {
                0.0
            };
            fb[(m, k)] = w;
        }
    }
    fb
}

/// Raw static cepstral coefficients, `n_coeffs x frames`, before any
/// normalization: Hann-windowed power spectrum -> mel energies -> log ->
/// orthonormal DCT-II.
pub fn mfcc_static_coefficients(
    seg: &AudioSegment,
    cfg: &MfccConfig,
) -> Result<Matrix, DspError> {
    ensure_audio(seg)?;
    if cfg.frame_ms <= 0.0 || cfg.hop_ms <= 0.0 || cfg.n_mels == 0 || cfg.n_coeffs == 0 {
        return Err(DspError::BadParam("all MFCC parameters must be positive".into()));
    }
    if cfg.n_coeffs > cfg.n_mels {
        return Err(DspError::BadParam(format!(
            "cannot keep {} coefficients from {} mel bands",
            cfg.n_coeffs, cfg.n_mels
        )));
    }
    let sr = seg.sample_rate as f64;
    let frame_len = (sr * cfg.frame_ms / 1000.0).round() as usize;
    let hop = (sr * cfg.hop_ms / 1000.0).round() as usize;
    if frame_len == 0 || hop == 0 {
        return Err(DspError::BadParam("frame and hop round to zero samples".into()));
    }
    let n = seg.samples.len();
    if n < frame_len {
        return Err(DspError::TooShort {
            needed: frame_len,
            got: n,
            hint: " (one MFCC frame)".into(),
        });
    }
    let frames = (n - frame_len) / hop + 1;
    let n_bins = frame_len / 2 + 1;
    let window = hann_window(frame_len);
    let fb = mel_filterbank(frame_len, sr, cfg.n_mels);
    let dct = dct_ortho_rows(cfg.n_coeffs, cfg.n_mels);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(frame_len);

    let mut out = Matrix::zeros(cfg.n_coeffs, frames);
    let mut buf = vec![Complex::new(0.0, 0.0); frame_len];
    let mut power = vec![0.0f64; n_bins];
    let mut logmel = vec![0.0f64; cfg.n_mels];
    for j in 0..frames {
        let start = j * hop;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(seg.samples[start + i] * window[i], 0.0);
        }
        fft.process(&mut buf);
        for k in 0..n_bins {
            power[k] = buf[k].norm_sqr();
        }
        for m in 0..cfg.n_mels {
            let row = fb.row(m);
            let e: f64 = row.iter().zip(&power).map(|(w, p)| w * p).sum();
            logmel[m] = e.max(1e-10).ln();
        }
        for c in 0..cfg.n_coeffs {
            let row = dct.row(c);
            out[(c, j)] = row.iter().zip(&logmel).map(|(d, l)| d * l).sum();
        }
    }
    Ok(out)
}

/// First `rows` rows of the orthonormal DCT-II matrix of size `n`.
fn dct_ortho_rows(rows: usize, n: usize) -> Matrix {
    let mut m = Matrix::zeros(rows, n);
    for k in 0..rows {
        let scale = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        for i in 0..n {
            m[(k, i)] =
                scale * (std::f64::consts::PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64).cos();
        }
    }
    m
}

/// Two-tap regression deltas over time with replicate padding:
/// `d_t = (1*(c_{t+1} - c_{t-1}) + 2*(c_{t+2} - c_{t-2})) / 10`.
fn deltas(coeffs: &Matrix) -> Matrix {
    let (rows, cols) = (coeffs.rows(), coeffs.cols());
    let clamp = |t: i64| -> usize { t.clamp(0, cols as i64 - 1) as usize };
    let mut out = Matrix::zeros(rows, cols);
    for r in 0..rows {
        for t in 0..cols {
            let t = t as i64;
            let mut num = 0.0;
            for k in 1..=2i64 {
                num += k as f64 * (coeffs[(r, clamp(t + k))] - coeffs[(r, clamp(t - k))]);
            }
            out[(r, t as usize)] = num / 10.0;
        }
    }
    out
}

/// MFCC spectrogram: static, delta and delta-delta blocks stacked to
/// `3 * n_coeffs` rows. Each block is min-max normalized independently, so a
/// constant signal yields exactly zero delta rows.
pub fn mfcc_spectrogram(seg: &AudioSegment, cfg: &MfccConfig) -> Result<Spectrogram, DspError> {
    let statics = mfcc_static_coefficients(seg, cfg)?;
    let d1 = deltas(&statics);
    let d2 = deltas(&d1);

    let (rows, cols) = (statics.rows(), statics.cols());
    let mut values = Matrix::zeros(3 * rows, cols);
    for (block_idx, block) in [&statics, &d1, &d2].into_iter().enumerate() {
        let mut b = block.clone();
        minmax_normalize(&mut b);
        for r in 0..rows {
            values.row_mut(block_idx * rows + r).copy_from_slice(b.row(r));
        }
    }
    Ok(Spectrogram {
        segment_id: seg.segment_id.clone(),
        kind: SpectrogramKind::Mfcc,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stack_has_180_rows() {
        let mut rng = crate::numerics::Rng::new(6);
        let samples: Vec<f64> = (0..22050).map(|_| rng.uniform(-0.5, 0.5)).collect();
        let seg = AudioSegment::new("n", samples, 22050);
        let s = mfcc_spectrogram(&seg, &MfccConfig::default()).unwrap();
        assert_eq!(s.values.rows(), 180);
        // (22050 - 4410) / 2205 + 1 = 9 frames at 200 ms / 100 ms
        assert_eq!(s.values.cols(), 9);
        assert!(s.values.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn constant_signal_has_exactly_zero_delta_rows() {
        let seg = AudioSegment::new("dc", vec![0.25; 22050], 22050);
        let s = mfcc_spectrogram(&seg, &MfccConfig::default()).unwrap();
        for r in 60..180 {
            for &v in s.values.row(r) {
                assert_eq!(v, 0.0, "row {r}");
            }
        }
    }

    #[test]
    fn deltas_of_linear_ramp_are_constant() {
        // c_t = a*t has regression delta exactly a everywhere except edges
        let ramp = Matrix::from_fn(1, 10, |_, t| 3.0 * t as f64);
        let d = deltas(&ramp);
        for t in 2..8 {
            assert!((d[(0, t)] - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn filterbank_is_flat_on_a_flat_spectrum() {
        // Energy of filter m on a flat power spectrum equals its weight sum;
        // after area normalization every band reads the same level (0 dB).
        let fb = mel_filterbank(4410, 22050.0, 128);
        let mut levels = Vec::new();
        for m in 0..fb.rows() {
            let area: f64 = fb.row(m).iter().sum();
            assert!(area > 0.0, "filter {m} covers no bins");
            let energy: f64 = fb.row(m).iter().map(|w| w * 1.0).sum();
            levels.push(10.0 * (energy / area).log10());
        }
        let max = levels.iter().cloned().fold(f64::MIN, f64::max);
        let min = levels.iter().cloned().fold(f64::MAX, f64::min);
        assert!(max - min <= 3.0, "flat spectrum spread {} dB", max - min);
    }

    #[test]
    fn filterbank_matches_htk_break_points() {
        // 1000 Hz sits at 1000 mel within rounding of the 2595 log10 formula
        assert!((hz_to_mel(1000.0) - 999.99).abs() < 0.5);
        assert!((mel_to_hz(hz_to_mel(440.0)) - 440.0).abs() < 1e-9);
    }

    #[test]
    fn dct_rows_are_orthonormal() {
        let d = dct_ortho_rows(60, 128);
        for a in 0..60 {
            for b in a..60 {
                let dot: f64 = d.row(a).iter().zip(d.row(b)).map(|(x, y)| x * y).sum();
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-12, "rows {a},{b}");
            }
        }
    }

    #[test]
    fn too_short_segment_is_rejected() {
        let seg = AudioSegment::new("s", vec![0.1; 4409], 22050);
        assert!(matches!(
            mfcc_spectrogram(&seg, &MfccConfig::default()),
            Err(DspError::TooShort { needed: 4410, .. })
        ));
    }
}
