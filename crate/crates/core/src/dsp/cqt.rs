//! Constant-Q transform spectrogram.
//!
//! Bin center frequencies follow the equal-tempered ladder
//! `f_k = fmin * 2^(k / bins_per_octave)` and every bin keeps the same
//! quality factor `Q = 1 / (2^(1/bins_per_octave) - 1)`, so low bins get long
//! analysis windows and high bins short ones. Each coefficient is evaluated
//! as a direct windowed inner product with a complex exponential at the bin
//! frequency; there is no FFT shortcut here, which keeps the per-bin window
//! lengths exact.

use super::{ensure_audio, hann_window, log_compress, minmax_normalize, AudioSegment, DspError,
            Spectrogram, SpectrogramKind};
use crate::numerics::Matrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CqtConfig {
    /// Lowest bin center in Hz. Default is C1.
    pub fmin: f64,
    pub bins_per_octave: usize,
    pub n_bins: usize,
    pub hop: usize,
}

impl Default for CqtConfig {
    fn default() -> Self {
        CqtConfig { fmin: 32.703, bins_per_octave: 12, n_bins: 84, hop: 512 }
    }
}

impl CqtConfig {
    pub fn quality_factor(&self) -> f64 {
        1.0 / ((2.0f64).powf(1.0 / self.bins_per_octave as f64) - 1.0)
    }

    pub fn bin_frequency(&self, k: usize) -> f64 {
        self.fmin * (2.0f64).powf(k as f64 / self.bins_per_octave as f64)
    }

    fn validate(&self, sample_rate: u32) -> Result<(), DspError> {
        if self.fmin <= 0.0 || self.n_bins == 0 || self.bins_per_octave == 0 || self.hop == 0 {
            return Err(DspError::BadParam(
                "fmin, n_bins, bins_per_octave and hop must be positive".into(),
            ));
        }
        let fmax = self.fmin * (2.0f64).powf(self.n_bins as f64 / self.bins_per_octave as f64);
        let nyquist = sample_rate as f64 / 2.0;
        if fmax >= nyquist {
            return Err(DspError::NyquistViolation { fmax, nyquist });
        }
        Ok(())
    }
}

/// Raw constant-Q magnitudes before log compression and normalization, as an
/// `n_bins x frames` matrix. Frame `j` starts at sample `j*hop`; windows that
/// overrun the segment end are truncated.
pub fn cqt_magnitudes(seg: &AudioSegment, cfg: &CqtConfig) -> Result<Matrix, DspError> {
    ensure_audio(seg)?;
    cfg.validate(seg.sample_rate)?;
    let n = seg.samples.len();
    let sr = seg.sample_rate as f64;
    let q = cfg.quality_factor();
    let frames = (n - 1) / cfg.hop + 1;

    // Per-bin kernels: Hann window times complex exponential at f_k,
    // length ceil(Q * sr / f_k) capped at the segment length.
    let mut kernels: Vec<Vec<(f64, f64)>> = Vec::with_capacity(cfg.n_bins);
    for k in 0..cfg.n_bins {
        let fk = cfg.bin_frequency(k);
        let len = ((q * sr / fk).ceil() as usize).clamp(1, n);
        let window = hann_window(len);
        let mut kernel = Vec::with_capacity(len);
        for i in 0..len {
            let ang = -std::f64::consts::TAU * fk * i as f64 / sr;
            kernel.push((window[i] * ang.cos(), window[i] * ang.sin()));
        }
        kernels.push(kernel);
    }

    let mut out = Matrix::zeros(cfg.n_bins, frames);
    for j in 0..frames {
        let start = j * cfg.hop;
        for k in 0..cfg.n_bins {
            let kernel = &kernels[k];
            let avail = (n - start).min(kernel.len());
            let (mut re, mut im) = (0.0, 0.0);
            for i in 0..avail {
                let x = seg.samples[start + i];
                re += x * kernel[i].0;
                im += x * kernel[i].1;
            }
            out[(k, j)] = (re * re + im * im).sqrt() / kernel.len() as f64;
        }
    }
    Ok(out)
}

/// Log-compressed, min-max normalized constant-Q spectrogram.
pub fn cqt_spectrogram(seg: &AudioSegment, cfg: &CqtConfig) -> Result<Spectrogram, DspError> {
    let mut values = cqt_magnitudes(seg, cfg)?;
    for i in 0..values.rows() {
        for v in values.row_mut(i) {
            *v = log_compress(*v);
        }
    }
    minmax_normalize(&mut values);
    Ok(Spectrogram {
        segment_id: seg.segment_id.clone(),
        kind: SpectrogramKind::Cqt,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quality_factor_for_semitone_bins() {
        let cfg = CqtConfig::default();
        assert!((cfg.quality_factor() - 16.817).abs() < 1e-3);
    }

    #[test]
    fn c2_tone_peaks_at_bin_twelve() {
        // 65.406 Hz is one octave above fmin: k = 12
        let rate = 22050u32;
        let samples: Vec<f64> = (0..2 * rate as usize)
            .map(|i| (std::f64::consts::TAU * 65.406 * i as f64 / rate as f64).sin())
            .collect();
        let seg = AudioSegment::new("c2", samples, rate);
        let m = cqt_magnitudes(&seg, &CqtConfig::default()).unwrap();
        let mid = m.cols() / 2;
        let col = m.column(mid);
        let argmax = col
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmax, 12);
    }

    #[test]
    fn matches_direct_inner_product() {
        let rate = 22050u32;
        let mut rng = crate::numerics::Rng::new(4);
        let samples: Vec<f64> = (0..6000).map(|_| rng.uniform(-0.5, 0.5)).collect();
        let seg = AudioSegment::new("n", samples.clone(), rate);
        let cfg = CqtConfig::default();
        let m = cqt_magnitudes(&seg, &cfg).unwrap();
        let q = cfg.quality_factor();
        // re-derive a few coefficients from the definition
        for &(k, j) in &[(12usize, 0usize), (40, 2), (83, 5)] {
            let fk = cfg.bin_frequency(k);
            let len = ((q * rate as f64 / fk).ceil() as usize).min(samples.len());
            let w = hann_window(len);
            let start = j * cfg.hop;
            let (mut re, mut im) = (0.0, 0.0);
            for i in 0..len.min(samples.len() - start) {
                let ang = -std::f64::consts::TAU * fk * i as f64 / rate as f64;
                re += samples[start + i] * w[i] * ang.cos();
                im += samples[start + i] * w[i] * ang.sin();
            }
            let direct = (re * re + im * im).sqrt() / len as f64;
            assert!((m[(k, j)] - direct).abs() < 1e-12, "bin {k} frame {j}");
        }
    }

    #[test]
    fn rejects_nyquist_violation() {
        let seg = AudioSegment::new("t", vec![0.1; 8000], 8000);
        // 84 bins from C1 reach 4186 Hz, above the 4000 Hz Nyquist
        assert!(matches!(
            cqt_magnitudes(&seg, &CqtConfig::default()),
            Err(DspError::NyquistViolation { .. })
        ));
    }

    #[test]
    fn silence_normalizes_to_zeros() {
        let seg = AudioSegment::new("quiet", vec![0.0; 22050], 22050);
        let s = cqt_spectrogram(&seg, &CqtConfig::default()).unwrap();
        assert!(s.values.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn frame_count_follows_hop() {
        let seg = AudioSegment::new("t", vec![0.01; 66150], 22050);
        let m = cqt_magnitudes(&seg, &CqtConfig::default()).unwrap();
        assert_eq!(m.rows(), 84);
        assert_eq!(m.cols(), (66150 - 1) / 512 + 1); // 130
    }
}
