//! Deterministic synthetic acoustic scenes.
//!
//! Each class is a generative voice: a three-partial chord, a band of random
//! sinusoids standing in for band-passed noise, and an amplitude-modulation
//! envelope. The distinct recipe spaces all three apart per class; the
//! siblings recipe gives each pair of classes one shared chord and noise
//! band and separates the pair only by modulation rate, so siblings are easy
//! to confuse by design. Everything is keyed off the seed: the same seed
//! yields byte-identical WAV files.

use std::f64::consts::TAU;
use std::path::Path;

use asc_core::dsp::write_wav_mono16;
use asc_core::numerics::Rng;
use rayon::prelude::*;

use crate::config::{SynthRecipe, SynthSpec};
use crate::manifest::{DatasetManifest, SegmentEntry, Split};
use crate::PipelineError;

/// Sinusoids approximating the band-passed noise bed.
const BAND_COMPONENTS: usize = 48;
/// Absolute peak after normalization, leaving headroom below clipping.
const PEAK: f64 = 0.75;

struct ClassVoice {
    chord: [f64; 3],
    noise_center: f64,
    noise_halfwidth: f64,
    am_rate: f64,
    am_depth: f64,
}

fn base_voice(k: usize) -> ClassVoice {
    let root = 180.0 + 90.0 * k as f64;
    ClassVoice {
        chord: [root, 1.5 * root, 2.0 * root],
        noise_center: 800.0 + 600.0 * k as f64,
        noise_halfwidth: 150.0,
        am_rate: 2.0 + 1.3 * k as f64,
        am_depth: 0.9,
    }
}

impl ClassVoice {
    fn new(class: usize, recipe: SynthRecipe) -> ClassVoice {
        match recipe {
            SynthRecipe::Distinct => base_voice(class),
            SynthRecipe::Siblings => {
                // Both members of a pair reuse the pair's base voice; the odd
                // member only modulates faster and sharpens the top partial.
                let mut voice = base_voice(class / 2 * 2);
                if class % 2 == 1 {
                    voice.am_rate *= 1.9;
                    voice.chord[2] *= 1.02;
                }
                voice
            }
        }
    }
}

fn render(voice: &ClassVoice, samples: usize, rate: f64, rng: &mut Rng) -> Vec<f64> {
    let chord_amps = [0.5, 0.35, 0.25];
    let partials: Vec<(f64, f64, f64)> = voice
        .chord
        .iter()
        .zip(chord_amps)
        .map(|(&f, a)| {
            let detune = 1.0 + rng.uniform(-0.005, 0.005);
            (f * detune, a, rng.uniform(0.0, TAU))
        })
        .collect();
    let band_amp = 0.8 / (BAND_COMPONENTS as f64).sqrt();
    let band: Vec<(f64, f64)> = (0..BAND_COMPONENTS)
        .map(|_| {
            let f = rng.uniform(
                voice.noise_center - voice.noise_halfwidth,
                voice.noise_center + voice.noise_halfwidth,
            );
            (f, rng.uniform(0.0, TAU))
        })
        .collect();
    let am_phase = rng.uniform(0.0, TAU);

    let mut out = Vec::with_capacity(samples);
    for i in 0..samples {
        let t = i as f64 / rate;
        let mut chord = 0.0;
        for &(f, a, phase) in &partials {
            chord += a * (TAU * f * t + phase).sin();
        }
        let mut noise = 0.0;
        for &(f, phase) in &band {
            noise += band_amp * (TAU * f * t + phase).sin();
        }
        let env = (1.0 + voice.am_depth * (TAU * voice.am_rate * t + am_phase).sin())
            / (1.0 + voice.am_depth);
        out.push((0.55 * chord + 0.45 * noise) * env + 0.01 * rng.normal());
    }
    let peak = out.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if peak > 0.0 {
        for v in &mut out {
            *v *= PEAK / peak;
        }
    }
    out
}

/// Renders `classes x (train + test)` WAV files under `out_dir/wav/` and
/// returns the matching manifest (not yet written to disk). Label noise, if
/// requested, swaps recorded labels of training segments only and keeps the
/// original in `clean_label`.
pub fn synth_dataset(
    spec: &SynthSpec,
    seed: u64,
    noise_seed: u64,
    out_dir: &Path,
) -> Result<DatasetManifest, PipelineError> {
    let samples = (spec.duration_s * spec.sample_rate as f64).round() as usize;
    if samples == 0 {
        return Err(PipelineError::BadConfig(format!(
            "{} s at {} Hz renders zero samples",
            spec.duration_s, spec.sample_rate
        )));
    }
    let wav_dir = out_dir.join("wav");
    std::fs::create_dir_all(&wav_dir)?;

    let mut entries = Vec::new();
    for (split, count) in [
        (Split::Train, spec.train_segments_per_class),
        (Split::Test, spec.test_segments_per_class),
    ] {
        for class in 0..spec.classes {
            for j in 0..count {
                let id = format!("c{class}-{split}-{j:02}");
                entries.push(SegmentEntry {
                    wav: format!("wav/{id}.wav").into(),
                    id,
                    label: class,
                    split,
                    fold: None,
                    clean_label: None,
                });
            }
        }
    }

    entries
        .par_iter()
        .enumerate()
        .map(|(ordinal, entry)| {
            let mut rng = Rng::derive(seed, ordinal as u64);
            let voice = ClassVoice::new(entry.label, spec.recipe);
            let wave = render(&voice, samples, spec.sample_rate as f64, &mut rng);
            write_wav_mono16(out_dir.join(&entry.wav), &wave, spec.sample_rate)?;
            Ok(())
        })
        .collect::<Vec<Result<(), PipelineError>>>()
        .into_iter()
        .collect::<Result<(), _>>()?;

    if spec.label_noise > 0.0 {
        let mut rng = Rng::new(noise_seed);
        for entry in entries.iter_mut().filter(|e| e.split == Split::Train) {
            if rng.next_f64() < spec.label_noise {
                let old = entry.label;
                entry.label = match spec.recipe {
                    SynthRecipe::Siblings => old ^ 1,
                    SynthRecipe::Distinct => {
                        (old + 1 + rng.index(spec.classes - 1)) % spec.classes
                    }
                };
                entry.clean_label = Some(old);
            }
        }
    }

    let manifest = DatasetManifest {
        class_names: (0..spec.classes).map(|c| format!("scene{c}")).collect(),
        sample_rate: spec.sample_rate,
        segments: entries,
    };
    manifest.validate()?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SynthSpec {
        SynthSpec {
            classes: 4,
            train_segments_per_class: 3,
            test_segments_per_class: 2,
            duration_s: 0.3,
            sample_rate: 8000,
            recipe: SynthRecipe::Distinct,
            label_noise: 0.0,
        }
    }

    #[test]
    fn renders_the_promised_files() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = synth_dataset(&spec(), 7, 8, dir.path()).unwrap();
        assert_eq!(manifest.segments.len(), 20);
        assert_eq!(manifest.indices_of(Split::Train).len(), 12);
        assert_eq!(manifest.indices_of(Split::Test).len(), 8);
        for entry in &manifest.segments {
            let bytes = std::fs::read(dir.path().join(&entry.wav)).unwrap();
            // 44-byte header plus 16-bit samples
            assert_eq!(bytes.len(), 44 + 2 * 2400, "{}", entry.id);
        }
    }

    #[test]
    fn same_seed_means_identical_bytes() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ma = synth_dataset(&spec(), 11, 0, a.path()).unwrap();
        let mb = synth_dataset(&spec(), 11, 0, b.path()).unwrap();
        for (ea, eb) in ma.segments.iter().zip(&mb.segments) {
            assert_eq!(ea.id, eb.id);
            let ba = std::fs::read(a.path().join(&ea.wav)).unwrap();
            let bb = std::fs::read(b.path().join(&eb.wav)).unwrap();
            assert_eq!(ba, bb, "{} differs across runs", ea.id);
        }

        let c = tempfile::tempdir().unwrap();
        let mc = synth_dataset(&spec(), 12, 0, c.path()).unwrap();
        let first = &ma.segments[0];
        assert_ne!(
            std::fs::read(a.path().join(&first.wav)).unwrap(),
            std::fs::read(c.path().join(&mc.segments[0].wav)).unwrap(),
            "different seeds should change the audio"
        );
    }

    #[test]
    fn waveforms_stay_inside_the_headroom() {
        let dir = tempfile::tempdir().unwrap();
        synth_dataset(&spec(), 3, 0, dir.path()).unwrap();
        let seg = asc_core::dsp::load_wav(dir.path().join("wav/c0-train-00.wav")).unwrap();
        assert_eq!(seg.sample_rate, 8000);
        let peak = seg.samples.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        assert!(peak > 0.4 && peak <= 0.7501, "peak {peak}");
    }

    #[test]
    fn label_noise_touches_training_labels_only() {
        let mut noisy = spec();
        noisy.recipe = SynthRecipe::Siblings;
        noisy.label_noise = 0.5;
        let dir = tempfile::tempdir().unwrap();
        let manifest = synth_dataset(&noisy, 5, 21, dir.path()).unwrap();

        let mut flipped = 0;
        for entry in &manifest.segments {
            match entry.split {
                Split::Test => assert_eq!(entry.clean_label, None),
                Split::Train => {
                    if let Some(clean) = entry.clean_label {
                        assert_eq!(entry.label, clean ^ 1, "siblings swap within the pair");
                        flipped += 1;
                    }
                }
            }
        }
        assert!(flipped > 0, "a 0.5 noise rate should flip something");
        assert!(flipped < 12, "and should not flip everything");

        // noise is part of the seeded contract
        let again = synth_dataset(&noisy, 5, 21, tempfile::tempdir().unwrap().path()).unwrap();
        let labels: Vec<usize> = manifest.segments.iter().map(|e| e.label).collect();
        let labels_again: Vec<usize> = again.segments.iter().map(|e| e.label).collect();
        assert_eq!(labels, labels_again);
    }
}
