//! Stage: render the synthetic dataset the config asks for.

use crate::config::{DatasetConfig, Experiment};
use crate::synth::synth_dataset;
use crate::PipelineError;

use super::{dataset_dir, rel};

pub fn run(exp: &Experiment) -> Result<Vec<String>, PipelineError> {
    let DatasetConfig::Synth(spec) = &exp.config.dataset else {
        return Err(PipelineError::StageFailed(
            "the config reads an external manifest; there is nothing to synthesize".into(),
        ));
    };
    let dir = dataset_dir(exp);
    let manifest = synth_dataset(spec, exp.synth_seed(), exp.label_noise_seed(), &dir)?;
    let manifest_path = dir.join("manifest.json");
    manifest.save(&manifest_path)?;

    let mut outputs = vec![rel(exp, &manifest_path)];
    for entry in &manifest.segments {
        outputs.push(rel(exp, &dir.join(&entry.wav)));
    }
    Ok(outputs)
}
