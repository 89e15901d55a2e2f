//! Short-time Fourier transform spectrogram.

use rustfft::{num_complex::Complex, FftPlanner};

use super::{ensure_audio, hann_window, log_compress, minmax_normalize, AudioSegment, DspError,
            Spectrogram, SpectrogramKind};
use crate::numerics::Matrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StftConfig {
    pub window: usize,
    pub hop: usize,
    /// Number of low-frequency bins retained as spectrogram rows.
    pub bins: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        // 706-sample Hann window, 430-sample hop, lower 354 of 706 bins
        StftConfig { window: 706, hop: 430, bins: 354 }
    }
}

impl StftConfig {
    fn validate(&self) -> Result<(), DspError> {
        if self.window == 0 || self.hop == 0 {
            return Err(DspError::BadParam("window and hop must be positive".into()));
        }
        if self.bins == 0 || self.bins > self.window / 2 + 1 {
            return Err(DspError::BadParam(format!(
                "bins must lie in 1..={}, got {}",
                self.window / 2 + 1,
                self.bins
            )));
        }
        Ok(())
    }
}

/// Raw magnitude frames before log compression and normalization: a
/// `bins x frames` matrix of `|X_k|` from an unnormalized forward DFT of each
/// Hann-windowed frame. Frame `j` covers samples `[j*hop, j*hop + window)`.
pub fn stft_magnitudes(seg: &AudioSegment, cfg: &StftConfig) -> Result<Matrix, DspError> {
    cfg.validate()?;
    ensure_audio(seg)?;
    let n = seg.samples.len();
    if n < cfg.window {
        return Err(DspError::TooShort {
            needed: cfg.window,
            got: n,
            hint: " (one STFT window)".into(),
        });
    }
    let frames = (n - cfg.window) / cfg.hop + 1;
    let window = hann_window(cfg.window);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(cfg.window);

    let mut out = Matrix::zeros(cfg.bins, frames);
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.window];
    for j in 0..frames {
        let start = j * cfg.hop;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(seg.samples[start + i] * window[i], 0.0);
        }
        fft.process(&mut buf);
        for k in 0..cfg.bins {
            out[(k, j)] = buf[k].norm();
        }
    }
    Ok(out)
}

/// Log-compressed, min-max normalized STFT spectrogram.
pub fn stft_spectrogram(seg: &AudioSegment, cfg: &StftConfig) -> Result<Spectrogram, DspError> {
    let mut values = stft_magnitudes(seg, cfg)?;
    for i in 0..values.rows() {
        for v in values.row_mut(i) {
            *v = log_compress(*v);
        }
    }
    minmax_normalize(&mut values);
    Ok(Spectrogram {
        segment_id: seg.segment_id.clone(),
        kind: SpectrogramKind::Stft,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, rate: u32, len: usize) -> AudioSegment {
        let samples = (0..len)
            .map(|i| (std::f64::consts::TAU * freq * i as f64 / rate as f64).sin())
            .collect();
        AudioSegment::new("sine", samples, rate)
    }

    #[test]
    fn frame_count_for_one_second() {
        let seg = sine(440.0, 22050, 44100);
        let m = stft_magnitudes(&seg, &StftConfig::default()).unwrap();
        assert_eq!(m.rows(), 354);
        assert_eq!(m.cols(), 101);
    }

    #[test]
    fn pure_tone_peaks_at_expected_bin() {
        // 440 Hz at 22050 Hz with 706-sample frames: 440 * 706 / 22050 = 14.09
        let seg = sine(440.0, 22050, 22050);
        let m = stft_magnitudes(&seg, &StftConfig::default()).unwrap();
        for j in 0..m.cols() {
            let col = m.column(j);
            let argmax = col
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(argmax, 14, "frame {j}");
        }
    }

    #[test]
    fn matches_direct_dft_evaluation() {
        // rustfft is an implementation detail; the contract is the plain DFT
        let seg = sine(523.25, 22050, 3000);
        let cfg = StftConfig::default();
        let m = stft_magnitudes(&seg, &cfg).unwrap();
        let window = hann_window(cfg.window);
        for &j in &[0usize, 3] {
            for &k in &[0usize, 14, 17, 100, 353] {
                let (mut re, mut im) = (0.0, 0.0);
                for i in 0..cfg.window {
                    let x = seg.samples[j * cfg.hop + i] * window[i];
                    let ang = -std::f64::consts::TAU * (k * i) as f64 / cfg.window as f64;
                    re += x * ang.cos();
                    im += x * ang.sin();
                }
                let direct = (re * re + im * im).sqrt();
                assert!(
                    (m[(k, j)] - direct).abs() <= 1e-6 * direct.max(1.0),
                    "bin {k} frame {j}: {} vs {direct}",
                    m[(k, j)]
                );
            }
        }
    }

    #[test]
    fn parseval_energy_is_conserved() {
        let mut rng = crate::numerics::Rng::new(99);
        let samples: Vec<f64> = (0..2000).map(|_| rng.uniform(-0.9, 0.9)).collect();
        let seg = AudioSegment::new("noise", samples, 22050);
        let cfg = StftConfig::default();
        let m = stft_magnitudes(&seg, &cfg).unwrap();
        let window = hann_window(cfg.window);
        // even window length: bins 1..N/2-1 mirror, 0 and N/2 are unique
        for j in 0..m.cols() {
            let time: f64 = (0..cfg.window)
                .map(|i| {
                    let x = seg.samples[j * cfg.hop + i] * window[i];
                    x * x
                })
                .sum();
            let half = cfg.window / 2;
            let mut spec = m[(0, j)] * m[(0, j)] + m[(half, j)] * m[(half, j)];
            for k in 1..half {
                spec += 2.0 * m[(k, j)] * m[(k, j)];
            }
            let rel = (spec - cfg.window as f64 * time).abs() / (cfg.window as f64 * time);
            assert!(rel < 1e-6, "frame {j}: relative energy error {rel}");
        }
    }

    #[test]
    fn shifting_by_hop_shifts_columns() {
        let seg = sine(700.0, 22050, 706 + 10 * 430);
        let cfg = StftConfig::default();
        let full = stft_magnitudes(&seg, &cfg).unwrap();
        let shifted_seg = AudioSegment::new("s", seg.samples[cfg.hop..].to_vec(), 22050);
        let shifted = stft_magnitudes(&shifted_seg, &cfg).unwrap();
        assert_eq!(shifted.cols(), full.cols() - 1);
        for j in 0..shifted.cols() {
            for k in 0..full.rows() {
                let (a, b) = (shifted[(k, j)], full[(k, j + 1)]);
                assert!((a - b).abs() <= 1e-6 * b.abs().max(1e-12), "col {j} bin {k}");
            }
        }
    }

    #[test]
    fn silence_normalizes_to_zeros() {
        let seg = AudioSegment::new("quiet", vec![0.0; 10_000], 22050);
        let s = stft_spectrogram(&seg, &StftConfig::default()).unwrap();
        assert!(s.values.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn normalized_output_is_unit_range() {
        let seg = sine(300.0, 22050, 8_000);
        let s = stft_spectrogram(&seg, &StftConfig::default()).unwrap();
        assert!(s.values.data().iter().all(|&v| (0.0..=1.0).contains(&v) && v.is_finite()));
    }

    #[test]
    fn too_short_segment_is_rejected() {
        let seg = AudioSegment::new("short", vec![0.1; 705], 22050);
        assert!(matches!(
            stft_spectrogram(&seg, &StftConfig::default()),
            Err(DspError::TooShort { needed: 706, got: 705, .. })
        ));
    }
}
