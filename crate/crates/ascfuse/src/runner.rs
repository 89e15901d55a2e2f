//! Stage orchestration: completion records, prerequisites, idempotent skips
//! and forced re-runs.
//!
//! Every completed stage writes `stages/<name>.json` into the workdir with
//! the config hash it ran under. A stage whose record matches the current
//! hash is skipped; a record from a different config is an error, because
//! building new artifacts on top of mismatched ones would mix incompatible
//! outputs. `--force` re-runs a stage regardless of its own record, but a
//! mismatched prerequisite still errors: forcing a late stage cannot bless
//! stale early artifacts.

use std::fmt;
use std::fs;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::config::{DatasetConfig, Experiment, ModelFlavor};
use crate::{stages, PipelineError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Synth,
    Spectrogram,
    TrainBasic,
    Expand,
    TrainLe,
    Extract,
    Fuse,
    Evaluate,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Spectrogram => "spectrogram",
            Stage::TrainBasic => "train-basic",
            Stage::Expand => "expand",
            Stage::TrainLe => "train-le",
            Stage::Extract => "extract",
            Stage::Fuse => "fuse",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub config_hash: String,
    /// Workdir-relative paths the stage wrote.
    pub outputs: Vec<String>,
}

pub fn record_path(exp: &Experiment, stage: Stage) -> PathBuf {
    exp.workdir.join("stages").join(format!("{}.json", stage.name()))
}

pub fn read_record(exp: &Experiment, stage: Stage) -> Result<Option<StageRecord>, PipelineError> {
    let path = record_path(exp, stage);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path)?;
    Ok(Some(serde_json::from_str(&text)?))
}

pub fn write_record(
    exp: &Experiment,
    stage: Stage,
    outputs: Vec<String>,
) -> Result<(), PipelineError> {
    let record = StageRecord {
        stage: stage.name().to_string(),
        config_hash: exp.hash.clone(),
        outputs,
    };
    let path = record_path(exp, stage);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut text = serde_json::to_string_pretty(&record)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Whether the stage already completed under the current config. A record
/// from a different config raises [`PipelineError::ConfigChanged`] instead
/// of answering false.
pub fn stage_done(exp: &Experiment, stage: Stage) -> Result<bool, PipelineError> {
    match read_record(exp, stage)? {
        None => Ok(false),
        Some(record) if record.config_hash == exp.hash => Ok(true),
        Some(record) => Err(PipelineError::ConfigChanged {
            stage: stage.name().to_string(),
            recorded: record.config_hash,
            current: exp.hash.clone(),
        }),
    }
}

fn require(exp: &Experiment, needed: Stage, stage: Stage) -> Result<(), PipelineError> {
    if stage_done(exp, needed)? {
        Ok(())
    } else {
        Err(PipelineError::MissingPrereq {
            stage: stage.name().to_string(),
            needed: needed.name().to_string(),
        })
    }
}

fn check_prereqs(exp: &Experiment, stage: Stage) -> Result<(), PipelineError> {
    let config = &exp.config;
    let is_synth = matches!(config.dataset, DatasetConfig::Synth(_));
    let pairs = config.fusion_pairs();
    match stage {
        Stage::Synth => {
            if !is_synth {
                return Err(PipelineError::StageFailed(
                    "the config reads an external manifest; there is nothing to synthesize".into(),
                ));
            }
        }
        Stage::Spectrogram => {
            if is_synth {
                require(exp, Stage::Synth, stage)?;
            }
        }
        Stage::TrainBasic => require(exp, Stage::Spectrogram, stage)?,
        Stage::Expand => {
            if !config.expansion.enabled {
                return Err(PipelineError::StageFailed(
                    "label expansion is disabled in this config".into(),
                ));
            }
            require(exp, Stage::TrainBasic, stage)?;
        }
        Stage::TrainLe => require(exp, Stage::Expand, stage)?,
        Stage::Extract => {
            if pairs.is_empty() {
                return Err(PipelineError::StageFailed(
                    "no fusion pairs are configured; there is nothing to extract features for"
                        .into(),
                ));
            }
            match config.fusion.features_from {
                ModelFlavor::Le => require(exp, Stage::TrainLe, stage)?,
                ModelFlavor::Basic => require(exp, Stage::TrainBasic, stage)?,
            }
        }
        Stage::Fuse => require(exp, Stage::Extract, stage)?,
        Stage::Evaluate => {
            require(exp, Stage::TrainBasic, stage)?;
            if config.expansion.enabled {
                require(exp, Stage::TrainLe, stage)?;
            }
            if !pairs.is_empty() {
                require(exp, Stage::Fuse, stage)?;
            }
        }
        Stage::Report => require(exp, Stage::Evaluate, stage)?,
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageOutcome {
    Ran,
    Skipped,
}

pub fn run_stage(
    exp: &Experiment,
    stage: Stage,
    force: bool,
) -> Result<StageOutcome, PipelineError> {
    if !force && stage_done(exp, stage)? {
        return Ok(StageOutcome::Skipped);
    }
    check_prereqs(exp, stage)?;
    let outputs = match stage {
        Stage::Synth => stages::synth::run(exp)?,
        Stage::Spectrogram => stages::spectrogram::run(exp)?,
        Stage::TrainBasic => stages::train::run_basic(exp)?,
        Stage::Expand => stages::expand::run(exp)?,
        Stage::TrainLe => stages::train::run_le(exp)?,
        Stage::Extract => stages::extract::run(exp)?,
        Stage::Fuse => stages::fuse::run(exp)?,
        Stage::Evaluate => stages::evaluate::run(exp)?,
        Stage::Report => stages::report::run(exp)?,
    };
    write_record(exp, stage, outputs)?;
    Ok(StageOutcome::Ran)
}

/// The stages `run-all` executes for this config, in dependency order.
pub fn plan(exp: &Experiment) -> Vec<Stage> {
    let config = &exp.config;
    let mut stages = Vec::new();
    if matches!(config.dataset, DatasetConfig::Synth(_)) {
        stages.push(Stage::Synth);
    }
    stages.push(Stage::Spectrogram);
    stages.push(Stage::TrainBasic);
    if config.expansion.enabled {
        stages.push(Stage::Expand);
        stages.push(Stage::TrainLe);
    }
    if !config.fusion_pairs().is_empty() {
        stages.push(Stage::Extract);
        stages.push(Stage::Fuse);
    }
    stages.push(Stage::Evaluate);
    stages.push(Stage::Report);
    stages
}

pub fn run_all(
    exp: &Experiment,
    force: bool,
) -> Result<Vec<(Stage, StageOutcome)>, PipelineError> {
    plan(exp)
        .into_iter()
        .map(|stage| run_stage(exp, stage, force).map(|outcome| (stage, outcome)))
        .collect()
}
