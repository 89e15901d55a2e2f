//! Minimal RIFF/WAVE reader and writer for 16-bit PCM.
//!
//! Only what the pipeline needs: mono or stereo PCM16 in, mono PCM16 out.
//! Stereo input is averaged to mono. Integer samples map to `[-1, 1)` by a
//! fixed 1/32768 scale so the conversion is exact for powers of two.

use std::io::Write;
use std::path::Path;

use super::{AudioSegment, DspError};

const SCALE: f64 = 1.0 / 32768.0;

pub fn load_wav<P: AsRef<Path>>(path: P) -> Result<AudioSegment, DspError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    let segment_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "segment".to_string());
    parse_wav(&bytes, segment_id)
}

fn parse_wav(bytes: &[u8], segment_id: String) -> Result<AudioSegment, DspError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(DspError::UnsupportedWav("not a RIFF/WAVE file".into()));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None; // format, channels, rate, bits
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_end = pos + 8 + size;
        if body_end > bytes.len() {
            return Err(DspError::UnsupportedWav(format!(
                "chunk {} overruns the file",
                String::from_utf8_lossy(id)
            )));
        }
        let body = &bytes[pos + 8..body_end];
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(DspError::UnsupportedWav("fmt chunk too small".into()));
                }
                fmt = Some((
                    u16::from_le_bytes(body[0..2].try_into().unwrap()),
                    u16::from_le_bytes(body[2..4].try_into().unwrap()),
                    u32::from_le_bytes(body[4..8].try_into().unwrap()),
                    u16::from_le_bytes(body[14..16].try_into().unwrap()),
                ));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // chunks are word aligned
        pos = body_end + (size & 1);
    }

    let (format, channels, rate, bits) = fmt.ok_or(DspError::MissingChunk("fmt "))?;
    let data = data.ok_or(DspError::MissingChunk("data"))?;
    if format != 1 {
        return Err(DspError::UnsupportedWav(format!(
            "only PCM (format 1) is supported, got format {format}"
        )));
    }
    if bits != 16 {
        return Err(DspError::UnsupportedWav(format!(
            "only 16-bit samples are supported, got {bits}-bit"
        )));
    }
    if channels != 1 && channels != 2 {
        return Err(DspError::UnsupportedWav(format!(
            "only mono and stereo are supported, got {channels} channels"
        )));
    }

    let frame = 2 * channels as usize;
    let n = data.len() / frame;
    let mut samples = Vec::with_capacity(n);
    for f in 0..n {
        let at = f * frame;
        let l = i16::from_le_bytes(data[at..at + 2].try_into().unwrap()) as f64 * SCALE;
        if channels == 1 {
            samples.push(l);
        } else {
            let r = i16::from_le_bytes(data[at + 2..at + 4].try_into().unwrap()) as f64 * SCALE;
            samples.push(0.5 * (l + r));
        }
    }
    Ok(AudioSegment { segment_id, samples, sample_rate: rate, label: None })
}

pub fn write_wav_mono16<P: AsRef<Path>>(
    path: P,
    samples: &[f64],
    sample_rate: u32,
) -> Result<(), DspError> {
    let data_len = samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&out)?;
    Ok(())
}

/// Linear-interpolation resampling. Adequate here because synthetic and scene
/// audio are band-limited well below Nyquist before classification.
pub fn resample_linear(seg: &AudioSegment, target_rate: u32) -> AudioSegment {
    assert!(target_rate > 0, "target rate must be positive");
    if seg.sample_rate == target_rate || seg.samples.is_empty() {
        let mut out = seg.clone();
        out.sample_rate = target_rate;
        return out;
    }
    let ratio = target_rate as f64 / seg.sample_rate as f64;
    let out_len = ((seg.samples.len() as f64) * ratio).round().max(1.0) as usize;
    let mut samples = Vec::with_capacity(out_len);
    let last = seg.samples.len() - 1;
    for i in 0..out_len {
        let pos = i as f64 / ratio;
        let i0 = (pos.floor() as usize).min(last);
        let i1 = (i0 + 1).min(last);
        let frac = pos - i0 as f64;
        samples.push(seg.samples[i0] * (1.0 - frac) + seg.samples[i1] * frac);
    }
    AudioSegment {
        segment_id: seg.segment_id.clone(),
        samples,
        sample_rate: target_rate,
        label: seg.label,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wav_bytes(channels: u16, rate: u32, pcm: &[i16]) -> Vec<u8> {
        let mut out = Vec::new();
        let data_len = pcm.len() * 2;
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
        out.extend_from_slice(b"WAVE");
        out.extend_from_slice(b"fmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        out.extend_from_slice(&rate.to_le_bytes());
        out.extend_from_slice(&(rate * 2 * channels as u32).to_le_bytes());
        out.extend_from_slice(&(2 * channels).to_le_bytes());
        out.extend_from_slice(&16u16.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&(data_len as u32).to_le_bytes());
        for &s in pcm {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out
    }

    #[test]
    fn mono_sample_scaling_is_exact_for_powers_of_two() {
        let bytes = wav_bytes(1, 22050, &[16384, -16384, 0]);
        let seg = parse_wav(&bytes, "t".into()).unwrap();
        assert_eq!(seg.samples, vec![0.5, -0.5, 0.0]);
        assert_eq!(seg.sample_rate, 22050);
    }

    #[test]
    fn stereo_averages_channels() {
        // 0.2 and 0.4 (as nearest PCM16 values) average to ~0.3
        let l = (0.2f64 * 32768.0).round() as i16;
        let r = (0.4f64 * 32768.0).round() as i16;
        let bytes = wav_bytes(2, 44100, &[l, r]);
        let seg = parse_wav(&bytes, "t".into()).unwrap();
        assert_eq!(seg.samples.len(), 1);
        assert!((seg.samples[0] - 0.3).abs() < 1e-4);
    }

    #[test]
    fn rejects_non_pcm_and_wrong_depth() {
        let mut bytes = wav_bytes(1, 22050, &[0]);
        bytes[20] = 3; // IEEE float tag
        assert!(matches!(
            parse_wav(&bytes, "t".into()),
            Err(DspError::UnsupportedWav(_))
        ));
        let mut bytes = wav_bytes(1, 22050, &[0]);
        bytes[34] = 8; // bits per sample
        assert!(matches!(
            parse_wav(&bytes, "t".into()),
            Err(DspError::UnsupportedWav(_))
        ));
    }

    #[test]
    fn missing_chunks_are_reported() {
        let bytes = b"RIFF\x04\x00\x00\x00WAVE".to_vec();
        assert!(matches!(
            parse_wav(&bytes, "t".into()),
            Err(DspError::MissingChunk("fmt "))
        ));
    }

    #[test]
    fn writer_reader_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tone.wav");
        let samples: Vec<f64> = (0..100).map(|i| (i as f64 * 0.07).sin() * 0.8).collect();
        write_wav_mono16(&path, &samples, 22050).unwrap();
        let seg = load_wav(&path).unwrap();
        assert_eq!(seg.segment_id, "tone");
        assert_eq!(seg.samples.len(), samples.len());
        for (a, b) in seg.samples.iter().zip(&samples) {
            assert!((a - b).abs() <= SCALE, "{a} vs {b}");
        }
    }

    #[test]
    fn resample_halves_sample_count() {
        let seg = AudioSegment::new("t", (0..1000).map(|i| (i as f64 / 50.0).sin()).collect(), 44100);
        let out = resample_linear(&seg, 22050);
        assert_eq!(out.sample_rate, 22050);
        assert!((out.samples.len() as i64 - 500).abs() <= 1);
    }
}
