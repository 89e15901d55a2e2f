//! Stage: compute per-segment spectrograms and cut them into square
//! network-ready patches.

use std::collections::BTreeMap;
use std::fs;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use asc_core::dsp::{
    cqt_spectrogram, load_wav, mfcc_spectrogram, patches_file_name, resample_linear,
    spectrogram_file_name, split_patches, stft_spectrogram, Spectrogram, SpectrogramKind,
};
use asc_core::numerics::{write_tensor_file, Tensor};

use crate::config::Experiment;
use crate::PipelineError;

use super::{load_dataset, patches_dir, rel, spectrogram_dir, write_json_pretty};

/// Catalog of the patch tensors this stage wrote, one entry per segment in
/// manifest order. Later stages read patches only through this index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatchIndex {
    pub class_names: Vec<String>,
    pub input_size: usize,
    pub segments: Vec<PatchIndexEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatchIndexEntry {
    pub id: String,
    pub label: usize,
    pub split: crate::manifest::Split,
    /// Keyed by spectrogram kind name.
    pub kinds: BTreeMap<String, PatchRef>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatchRef {
    /// Workdir-relative path of the stored spectrogram (rank 2).
    pub spectrogram: String,
    /// Workdir-relative path of the stored patch stack (rank 3).
    pub patches: String,
    pub count: usize,
}

fn spectrogram_tensor(spec: &Spectrogram) -> Tensor {
    let m = &spec.values;
    Tensor::f32(
        vec![m.rows(), m.cols()],
        m.data().iter().map(|&v| v as f32).collect(),
    )
}

pub fn run(exp: &Experiment) -> Result<Vec<String>, PipelineError> {
    let (manifest, data_dir) = load_dataset(exp)?;
    let config = &exp.config;
    let size = config.network.preset.input_size();
    let spec_dir = spectrogram_dir(exp);
    let patch_dir = patches_dir(exp);
    fs::create_dir_all(&spec_dir)?;
    fs::create_dir_all(&patch_dir)?;

    let processed: Vec<(PatchIndexEntry, Vec<String>)> = manifest
        .segments
        .par_iter()
        .map(|entry| {
            let mut seg = load_wav(manifest.wav_path(&data_dir, entry))?;
            seg.segment_id = entry.id.clone();
            seg.label = Some(entry.label);
            let seg = resample_linear(&seg, manifest.sample_rate);

            let mut kinds = BTreeMap::new();
            let mut files = Vec::new();
            for &kind in &config.dsp.kinds {
                let spec = match kind {
                    SpectrogramKind::Stft => stft_spectrogram(&seg, &config.dsp.stft)?,
                    SpectrogramKind::Cqt => cqt_spectrogram(&seg, &config.dsp.cqt)?,
                    SpectrogramKind::Mfcc => mfcc_spectrogram(&seg, &config.dsp.mfcc)?,
                };
                let plan = config.dsp.patch.plan(kind);
                let patches = split_patches(&spec, plan.width, plan.shift, size)?;

                let spec_file = spec_dir.join(spectrogram_file_name(&entry.id, kind));
                write_tensor_file(&spec_file, &spectrogram_tensor(&spec))?;

                let mut pixels = Vec::with_capacity(patches.len() * size * size);
                for patch in &patches {
                    pixels.extend(patch.pixels.data().iter().map(|&v| v as f32));
                }
                let patch_file = patch_dir.join(patches_file_name(&entry.id, kind));
                write_tensor_file(
                    &patch_file,
                    &Tensor::f32(vec![patches.len(), size, size], pixels),
                )?;

                files.push(rel(exp, &spec_file));
                files.push(rel(exp, &patch_file));
                kinds.insert(
                    kind.as_str().to_string(),
                    PatchRef {
                        spectrogram: rel(exp, &spec_file),
                        patches: rel(exp, &patch_file),
                        count: patches.len(),
                    },
                );
            }
            Ok((
                PatchIndexEntry {
                    id: entry.id.clone(),
                    label: entry.label,
                    split: entry.split,
                    kinds,
                },
                files,
            ))
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;

    let mut outputs = Vec::new();
    let mut segments = Vec::with_capacity(processed.len());
    for (entry, files) in processed {
        segments.push(entry);
        outputs.extend(files);
    }
    let index = PatchIndex {
        class_names: manifest.class_names.clone(),
        input_size: size,
        segments,
    };
    let index_path = patch_dir.join("index.json");
    write_json_pretty(&index_path, &index)?;
    outputs.insert(0, rel(exp, &index_path));
    Ok(outputs)
}
