//! Stages: fit one convolutional model per spectrogram kind, first with the
//! plain class head, then again with the added super-class head and the
//! multitask loss.

use std::fs;

use asc_core::dsp::SpectrogramKind;
use asc_core::labelexp::{attach_superclass_head, multitask_spec, HeadInit};
use asc_core::nnet::{
    build_network, load_checkpoint, save_checkpoint, train, write_history_csv, LossSpec, Real,
};

use crate::config::{Dtype, Experiment, HeadInitConfig, ModelFlavor};
use crate::manifest::Split;
use crate::PipelineError;

use super::expand::read_partition;
use super::{build_dataset, load_patch_index, models_dir, rel};

/// Checkpoint base name of one trained model, e.g. `stft-basic` or `cqt-le`.
pub fn model_name(kind: SpectrogramKind, flavor: ModelFlavor) -> String {
    format!("{kind}-{}", flavor.as_str())
}

pub fn run_basic(exp: &Experiment) -> Result<Vec<String>, PipelineError> {
    match exp.config.network.dtype {
        Dtype::F32 => basic_typed::<f32>(exp),
        Dtype::F64 => basic_typed::<f64>(exp),
    }
}

fn basic_typed<F: Real>(exp: &Experiment) -> Result<Vec<String>, PipelineError> {
    let index = load_patch_index(exp)?;
    let dir = models_dir(exp);
    fs::create_dir_all(&dir)?;
    let mut outputs = Vec::new();
    for &kind in &exp.config.dsp.kinds {
        let set = build_dataset::<F>(exp, &index, kind, Split::Train)?;
        let network = exp.config.network.preset.network(index.class_names.len());
        let state = build_network::<F>(network, exp.init_seed(kind))?;
        let cfg = exp.config.training.basic.with_seed(exp.train_seed(kind));
        let outcome = train(state, &set.data, &cfg, &LossSpec::basic())?;

        let name = model_name(kind, ModelFlavor::Basic);
        save_checkpoint(&outcome.state, &dir, &name)?;
        let history = dir.join(format!("{name}.history.csv"));
        write_history_csv(&history, &outcome.history)?;
        outputs.push(rel(exp, &dir.join(format!("{name}.ckpt.json"))));
        outputs.push(rel(exp, &dir.join(format!("{name}.weights.atns"))));
        outputs.push(rel(exp, &history));
    }
    Ok(outputs)
}

pub fn run_le(exp: &Experiment) -> Result<Vec<String>, PipelineError> {
    match exp.config.network.dtype {
        Dtype::F32 => le_typed::<f32>(exp),
        Dtype::F64 => le_typed::<f64>(exp),
    }
}

fn le_typed<F: Real>(exp: &Experiment) -> Result<Vec<String>, PipelineError> {
    let index = load_patch_index(exp)?;
    let dir = models_dir(exp);
    let expansion = &exp.config.expansion;
    let mut outputs = Vec::new();
    for &kind in &exp.config.dsp.kinds {
        let set = build_dataset::<F>(exp, &index, kind, Split::Train)?;
        let partition = read_partition(exp, kind)?;
        let mut state =
            load_checkpoint::<F, _>(&dir, &model_name(kind, ModelFlavor::Basic))?;
        let init = match expansion.head_init {
            HeadInitConfig::WarmStart => HeadInit::WarmStart,
            HeadInitConfig::Random => HeadInit::Random { seed: exp.head_seed(kind) },
        };
        attach_superclass_head(&mut state, &partition, init)?;
        let loss = multitask_spec(&partition, expansion.gamma, expansion.alpha, expansion.beta);
        // Same split seed as the basic run, so the expanded model trains on
        // the same patches and never sees the held-out confusion split.
        let cfg = exp.config.training.expanded.with_seed(exp.train_seed(kind));
        let outcome = train(state, &set.data, &cfg, &loss)?;

        let name = model_name(kind, ModelFlavor::Le);
        save_checkpoint(&outcome.state, &dir, &name)?;
        let history = dir.join(format!("{name}.history.csv"));
        write_history_csv(&history, &outcome.history)?;
        outputs.push(rel(exp, &dir.join(format!("{name}.ckpt.json"))));
        outputs.push(rel(exp, &dir.join(format!("{name}.weights.atns"))));
        outputs.push(rel(exp, &history));
    }
    Ok(outputs)
}
