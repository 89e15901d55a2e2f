//! Experiment configuration: one JSON file drives every stage.
//!
//! The file names a working directory, a dataset (synthetic or an external
//! manifest), the spectrogram kinds and patch geometry, the network preset,
//! training settings for the basic and expanded phases, label-expansion
//! settings and the fusion setup. A SHA-256 hash of the effective config is
//! stamped on every stage record so artifacts from different configs never
//! mix silently.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use asc_core::dsp::{CqtConfig, MfccConfig, SpectrogramKind, StftConfig};
use asc_core::fusion::SvmConfig;
use asc_core::nnet::{table1, vgg_mini, NetworkConfig, OptimizerKind, TrainConfig};
use asc_core::numerics::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::PipelineError;

// Seed stream tags. Frozen: changing any of these silently changes every
// derived stream, which breaks replay of recorded runs.
const TAG_SYNTH: u64 = 0x01;
const TAG_LABEL_NOISE: u64 = 0x02;
const TAG_INIT: u64 = 0x03;
const TAG_TRAIN: u64 = 0x04;
const TAG_EXPAND: u64 = 0x05;
const TAG_HEAD: u64 = 0x06;
const TAG_CONCAT: u64 = 0x07;
const TAG_SVM: u64 = 0x08;
const TAG_KFOLD: u64 = 0x09;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Where every stage artifact lives. A relative path is resolved against
    /// the directory containing the config file.
    pub workdir: PathBuf,
    /// Master seed; each stage derives its own streams from it, so one value
    /// replays the whole run.
    #[serde(default)]
    pub seed: u64,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub dsp: DspSection,
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub expansion: ExpansionSection,
    #[serde(default)]
    pub fusion: FusionSection,
    /// Cross-validation fold count for the `kfold` command; zero disables it.
    #[serde(default)]
    pub kfold_folds: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetConfig {
    /// Deterministic synthetic scenes rendered into the workdir.
    Synth(SynthSpec),
    /// External dataset described by a manifest file; a relative path is
    /// resolved against the config file's directory.
    Manifest { path: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSpec {
    pub classes: usize,
    pub train_segments_per_class: usize,
    pub test_segments_per_class: usize,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    #[serde(default = "default_sample_rate")]
    pub sample_rate: u32,
    #[serde(default)]
    pub recipe: SynthRecipe,
    /// Fraction of training segments whose recorded label is swapped for a
    /// wrong one. Test labels are never touched.
    #[serde(default)]
    pub label_noise: f64,
}

fn default_duration() -> f64 {
    3.0
}

fn default_sample_rate() -> u32 {
    22050
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthRecipe {
    /// Every class gets a well-separated voice.
    #[default]
    Distinct,
    /// Classes come in pairs that share a chord and noise band and differ
    /// only in modulation rate, so each pair is easy to confuse.
    Siblings,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DspSection {
    /// Which representations to compute, in report order.
    pub kinds: Vec<SpectrogramKind>,
    pub stft: StftConfig,
    pub cqt: CqtConfig,
    pub mfcc: MfccConfig,
    pub patch: PatchSection,
}

impl Default for DspSection {
    fn default() -> Self {
        DspSection {
            kinds: SpectrogramKind::ALL.to_vec(),
            stft: StftConfig::default(),
            cqt: CqtConfig::default(),
            mfcc: MfccConfig::default(),
            patch: PatchSection::default(),
        }
    }
}

/// Patch window geometry per spectrogram kind, in frames.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PatchSection {
    pub stft: PatchPlan,
    pub cqt: PatchPlan,
    pub mfcc: PatchPlan,
}

impl Default for PatchSection {
    fn default() -> Self {
        PatchSection {
            stft: PatchPlan { width: 143, shift: 126 },
            cqt: PatchPlan { width: 143, shift: 80 },
            mfcc: PatchPlan { width: 143, shift: 100 },
        }
    }
}

impl PatchSection {
    pub fn plan(&self, kind: SpectrogramKind) -> PatchPlan {
        match kind {
            SpectrogramKind::Stft => self.stft,
            SpectrogramKind::Cqt => self.cqt,
            SpectrogramKind::Mfcc => self.mfcc,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchPlan {
    pub width: usize,
    pub shift: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    pub preset: Preset,
    pub dtype: Dtype,
}

impl Default for NetworkSection {
    fn default() -> Self {
        NetworkSection { preset: Preset::Table1, dtype: Dtype::F32 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Table1,
    VggMini,
}

impl Preset {
    pub fn network(self, num_classes: usize) -> NetworkConfig {
        match self {
            Preset::Table1 => table1(num_classes),
            Preset::VggMini => vgg_mini(num_classes),
        }
    }

    /// Side length of the square input patch the preset consumes.
    pub fn input_size(self) -> usize {
        match self {
            Preset::Table1 => 143,
            Preset::VggMini => 64,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Table1 => "table1",
            Preset::VggMini => "vgg-mini",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table1" => Ok(Preset::Table1),
            "vgg-mini" => Ok(Preset::VggMini),
            other => Err(format!("unknown preset `{other}`; use table1 or vgg-mini")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    /// Settings for the basic (single-head) models.
    pub basic: TrainSettings,
    /// Settings for fine-tuning with the super-class head attached.
    pub expanded: TrainSettings,
}

/// Like [`TrainConfig`] but without a seed: the pipeline derives split and
/// shuffle seeds from the experiment seed, so one master value replays
/// everything.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    pub optimizer: OptimizerKind,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub val_fraction: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let base = TrainConfig::default();
        TrainSettings {
            optimizer: base.optimizer,
            batch_size: base.batch_size,
            max_epochs: base.max_epochs,
            patience: base.patience,
            val_fraction: base.val_fraction,
        }
    }
}

impl TrainSettings {
    pub fn with_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            optimizer: self.optimizer,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            val_fraction: self.val_fraction,
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpansionSection {
    pub enabled: bool,
    /// Zero picks the super-class count by the eigengap rule.
    pub num_superclasses: usize,
    /// Weight of the super-class loss term.
    pub gamma: f64,
    /// Class-head regularizer weight.
    pub alpha: f64,
    /// Weight pulling each class row toward its super-class row.
    pub beta: f64,
    pub head_init: HeadInitConfig,
    /// Which split of the training data feeds the confusion matrix.
    pub confusion_split: ConfusionSplit,
}

impl Default for ExpansionSection {
    fn default() -> Self {
        ExpansionSection {
            enabled: true,
            num_superclasses: 0,
            gamma: 0.6,
            alpha: 1e-4,
            beta: 1e-4,
            head_init: HeadInitConfig::WarmStart,
            confusion_split: ConfusionSplit::Validation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadInitConfig {
    /// Super-class rows start at the mean of their member class rows.
    WarmStart,
    /// Fresh seeded rows.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfusionSplit {
    /// Held-out validation patches: a fitted model's training confusion is
    /// near-diagonal and carries little grouping signal.
    Validation,
    Training,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionSection {
    /// Spectrogram pairs to fuse, in declared order. Omitted: every
    /// canonical pair whose kinds are both computed.
    pub pairs: Option<Vec<[SpectrogramKind; 2]>>,
    /// Variance share the PCA must keep.
    pub min_variance: f64,
    pub svm: SvmSettings,
    /// Which model flavor supplies the deep features.
    pub features_from: ModelFlavor,
}

impl Default for FusionSection {
    fn default() -> Self {
        FusionSection {
            pairs: None,
            min_variance: 0.99,
            svm: SvmSettings::default(),
            features_from: ModelFlavor::Le,
        }
    }
}

/// Like [`SvmConfig`] but without a seed; sweep orders are derived from the
/// experiment seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvmSettings {
    pub c: f64,
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for SvmSettings {
    fn default() -> Self {
        let base = SvmConfig::default();
        SvmSettings { c: base.c, tol: base.tol, max_sweeps: base.max_sweeps }
    }
}

impl SvmSettings {
    pub fn with_seed(&self, seed: u64) -> SvmConfig {
        SvmConfig { c: self.c, tol: self.tol, max_sweeps: self.max_sweeps, seed }
    }
}

/// The two model flavors a kind can have on disk: the basic single-head
/// model and the label-expanded fine-tune.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFlavor {
    Basic,
    Le,
}

impl ModelFlavor {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelFlavor::Basic => "basic",
            ModelFlavor::Le => "le",
        }
    }
}

impl fmt::Display for ModelFlavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The canonical pair order used when `fusion.pairs` is omitted.
pub const CANONICAL_PAIRS: [[SpectrogramKind; 2]; 3] = [
    [SpectrogramKind::Stft, SpectrogramKind::Cqt],
    [SpectrogramKind::Stft, SpectrogramKind::Mfcc],
    [SpectrogramKind::Mfcc, SpectrogramKind::Cqt],
];

pub fn pair_name(pair: [SpectrogramKind; 2]) -> String {
    format!("{}+{}", pair[0], pair[1])
}

impl ExperimentConfig {
    /// Parses the file and returns the config plus the directory relative
    /// paths inside it resolve against.
    pub fn from_file<P: AsRef<Path>>(path: P) -> Result<(Self, PathBuf), PipelineError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| {
            PipelineError::BadConfig(format!("cannot read {}: {e}", path.display()))
        })?;
        let config: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| PipelineError::BadConfig(format!("{}: {e}", path.display())))?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty());
        let base = match base {
            Some(p) => p.to_path_buf(),
            None => PathBuf::from("."),
        };
        Ok((config, base))
    }

    /// Hex SHA-256 of the config's canonical JSON form. Computed after CLI
    /// overrides, so the hash always matches what actually ran.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        let mut out = String::with_capacity(64);
        for byte in digest {
            out.push_str(&format!("{byte:02x}"));
        }
        out
    }

    /// The fusion pairs this config asks for, with omitted pairs resolved to
    /// the canonical ones available from `dsp.kinds`.
    pub fn fusion_pairs(&self) -> Vec<[SpectrogramKind; 2]> {
        match &self.fusion.pairs {
            Some(pairs) => pairs.clone(),
            None => CANONICAL_PAIRS
                .iter()
                .copied()
                .filter(|p| self.dsp.kinds.contains(&p[0]) && self.dsp.kinds.contains(&p[1]))
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |msg: String| Err(PipelineError::BadConfig(msg));
        if self.workdir.as_os_str().is_empty() {
            return bad("workdir must not be empty".into());
        }

        if let DatasetConfig::Synth(spec) = &self.dataset {
            if spec.classes < 2 {
                return bad(format!("synth needs at least 2 classes, got {}", spec.classes));
            }
            if spec.train_segments_per_class == 0 || spec.test_segments_per_class == 0 {
                return bad("synth needs at least one train and one test segment per class".into());
            }
            if !(spec.duration_s > 0.0) {
                return bad(format!("synth duration {} s is not positive", spec.duration_s));
            }
            if spec.sample_rate == 0 {
                return bad("synth sample_rate must be positive".into());
            }
            if !(0.0..1.0).contains(&spec.label_noise) {
                return bad(format!("label_noise {} outside [0, 1)", spec.label_noise));
            }
            if spec.recipe == SynthRecipe::Siblings && spec.classes % 2 != 0 {
                return bad(format!(
                    "the siblings recipe pairs classes, so the class count must be even, got {}",
                    spec.classes
                ));
            }
        }

        if self.dsp.kinds.is_empty() {
            return bad("dsp.kinds must name at least one spectrogram kind".into());
        }
        for (i, kind) in self.dsp.kinds.iter().enumerate() {
            if self.dsp.kinds[..i].contains(kind) {
                return bad(format!("dsp.kinds lists {kind} twice"));
            }
        }
        for &kind in &self.dsp.kinds {
            let plan = self.dsp.patch.plan(kind);
            if plan.width == 0 || plan.shift == 0 {
                return bad(format!("{kind} patch width and shift must be positive"));
            }
        }

        for (name, settings) in
            [("basic", &self.training.basic), ("expanded", &self.training.expanded)]
        {
            if settings.batch_size < 2 {
                return bad(format!("training.{name}.batch_size must be at least 2"));
            }
            if settings.max_epochs == 0 || settings.patience == 0 {
                return bad(format!("training.{name} epochs and patience must be positive"));
            }
            if !(settings.val_fraction > 0.0 && settings.val_fraction < 1.0) {
                return bad(format!(
                    "training.{name}.val_fraction must lie strictly inside (0, 1); the held-out \
                     split drives early stopping and the confusion matrix"
                ));
            }
        }

        let exp = &self.expansion;
        if !(exp.gamma > 0.0 && exp.gamma <= 1.0) {
            return bad(format!("expansion.gamma {} outside (0, 1]", exp.gamma));
        }
        if exp.alpha < 0.0 || exp.beta < 0.0 {
            return bad("expansion.alpha and beta must be non-negative".into());
        }
        if exp.num_superclasses == 1 {
            return bad("expansion.num_superclasses 1 would merge everything; use 0 for automatic".into());
        }
        if let DatasetConfig::Synth(spec) = &self.dataset {
            if exp.enabled && exp.num_superclasses >= spec.classes && exp.num_superclasses != 0 {
                return bad(format!(
                    "expansion.num_superclasses {} must be below the class count {}",
                    exp.num_superclasses, spec.classes
                ));
            }
        }

        let fusion = &self.fusion;
        if !(fusion.min_variance > 0.0 && fusion.min_variance <= 1.0) {
            return bad(format!("fusion.min_variance {} outside (0, 1]", fusion.min_variance));
        }
        if !(fusion.svm.c > 0.0) || !(fusion.svm.tol > 0.0) || fusion.svm.max_sweeps == 0 {
            return bad("fusion.svm needs positive c, tol and max_sweeps".into());
        }
        if let Some(pairs) = &fusion.pairs {
            for (i, pair) in pairs.iter().enumerate() {
                if pair[0] == pair[1] {
                    return bad(format!("fusion pair {} repeats {}", i, pair[0]));
                }
                for &kind in pair {
                    if !self.dsp.kinds.contains(&kind) {
                        return bad(format!(
                            "fusion pair {} uses {kind}, which dsp.kinds does not compute",
                            pair_name(*pair)
                        ));
                    }
                }
                if pairs[..i].contains(pair) {
                    return bad(format!("fusion pair {} appears twice", pair_name(*pair)));
                }
            }
        }
        if fusion.features_from == ModelFlavor::Le
            && !exp.enabled
            && !self.fusion_pairs().is_empty()
        {
            return bad(
                "fusion.features_from is `le` but expansion is disabled; set features_from to \
                 `basic` or enable expansion"
                    .into(),
            );
        }

        if self.kfold_folds == 1 {
            return bad("kfold_folds 1 is degenerate; cross-validation needs at least 2".into());
        }
        Ok(())
    }
}

/// A validated config bound to its resolved paths and hash; what every stage
/// actually receives.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    /// Absolute workdir.
    pub workdir: PathBuf,
    /// Absolute path of the external dataset manifest, when one is used.
    pub manifest_path: Option<PathBuf>,
    /// Hex SHA-256 of the effective config.
    pub hash: String,
}

fn absolutize(path: &Path, base: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

impl Experiment {
    /// Loads a config file, applies CLI overrides, validates and resolves it.
    pub fn load<P: AsRef<Path>>(
        path: P,
        seed_override: Option<u64>,
        preset_override: Option<Preset>,
    ) -> Result<Experiment, PipelineError> {
        let (mut config, base) = ExperimentConfig::from_file(path)?;
        if let Some(seed) = seed_override {
            config.seed = seed;
        }
        if let Some(preset) = preset_override {
            config.network.preset = preset;
        }
        Experiment::from_config(config, &base)
    }

    /// Builds an experiment from an in-memory config whose relative paths
    /// resolve against `base`.
    pub fn from_config(config: ExperimentConfig, base: &Path) -> Result<Experiment, PipelineError> {
        config.validate()?;
        let hash = config.hash();
        let workdir = absolutize(&config.workdir, base);
        let manifest_path = match &config.dataset {
            DatasetConfig::Manifest { path } => Some(absolutize(path, base)),
            DatasetConfig::Synth(_) => None,
        };
        Ok(Experiment { config, workdir, manifest_path, hash })
    }

    fn kind_ordinal(kind: SpectrogramKind) -> u64 {
        SpectrogramKind::ALL.iter().position(|&k| k == kind).expect("known kind") as u64
    }

    pub fn synth_seed(&self) -> u64 {
        Rng::mix(&[self.config.seed, TAG_SYNTH])
    }

    pub fn label_noise_seed(&self) -> u64 {
        Rng::mix(&[self.config.seed, TAG_LABEL_NOISE])
    }

    pub fn init_seed(&self, kind: SpectrogramKind) -> u64 {
        Rng::mix(&[self.config.seed, TAG_INIT, Self::kind_ordinal(kind)])
    }

    /// Seeds the holdout split and epoch shuffles. Shared between the basic
    /// and expanded phases so both train on the same holdout split and the
    /// expanded model never trains on the patches whose confusion chose its
    /// super-classes.
    pub fn train_seed(&self, kind: SpectrogramKind) -> u64 {
        Rng::mix(&[self.config.seed, TAG_TRAIN, Self::kind_ordinal(kind)])
    }

    pub fn expand_seed(&self, kind: SpectrogramKind) -> u64 {
        Rng::mix(&[self.config.seed, TAG_EXPAND, Self::kind_ordinal(kind)])
    }

    pub fn head_seed(&self, kind: SpectrogramKind) -> u64 {
        Rng::mix(&[self.config.seed, TAG_HEAD, Self::kind_ordinal(kind)])
    }

    /// Per-kind, per-split seed for the random patch concatenation order.
    /// Train and test draw from independent streams.
    pub fn concat_seed(&self, kind: SpectrogramKind, test_split: bool) -> u64 {
        Rng::mix(&[
            self.config.seed,
            TAG_CONCAT,
            Self::kind_ordinal(kind),
            test_split as u64,
        ])
    }

    pub fn svm_seed(&self, pair_index: usize) -> u64 {
        Rng::mix(&[self.config.seed, TAG_SVM, pair_index as u64])
    }

    pub fn kfold_seed(&self) -> u64 {
        Rng::mix(&[self.config.seed, TAG_KFOLD])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synth_config() -> ExperimentConfig {
        serde_json::from_str(
            r#"{
                "workdir": "run",
                "seed": 7,
                "dataset": {
                    "source": "synth",
                    "classes": 4,
                    "train_segments_per_class": 5,
                    "test_segments_per_class": 2
                }
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn defaults_fill_in_and_validate() {
        let config = synth_config();
        config.validate().unwrap();
        assert_eq!(config.dsp.kinds, SpectrogramKind::ALL.to_vec());
        assert_eq!(config.dsp.patch.stft.shift, 126);
        assert_eq!(config.dsp.patch.cqt.shift, 80);
        assert_eq!(config.dsp.patch.mfcc.shift, 100);
        assert_eq!(config.network.preset, Preset::Table1);
        assert_eq!(config.network.dtype, Dtype::F32);
        assert!(config.expansion.enabled);
        assert_eq!(config.expansion.gamma, 0.6);
        assert_eq!(config.fusion.min_variance, 0.99);
        assert_eq!(config.fusion.features_from, ModelFlavor::Le);
        assert_eq!(config.fusion_pairs(), CANONICAL_PAIRS.to_vec());
        assert_eq!(config.kfold_folds, 0);
    }

    #[test]
    fn hash_tracks_content_not_identity() {
        let a = synth_config();
        let b = synth_config();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);

        let mut c = synth_config();
        c.seed = 8;
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn bad_settings_are_rejected() {
        let mut one_class = synth_config();
        if let DatasetConfig::Synth(spec) = &mut one_class.dataset {
            spec.classes = 1;
        }
        assert!(one_class.validate().is_err());

        let mut odd_siblings = synth_config();
        if let DatasetConfig::Synth(spec) = &mut odd_siblings.dataset {
            spec.recipe = SynthRecipe::Siblings;
            spec.classes = 5;
        }
        assert!(odd_siblings.validate().is_err());

        let mut no_val = synth_config();
        no_val.training.basic.val_fraction = 0.0;
        assert!(no_val.validate().is_err());

        let mut dup_kind = synth_config();
        dup_kind.dsp.kinds = vec![SpectrogramKind::Stft, SpectrogramKind::Stft];
        assert!(dup_kind.validate().is_err());

        let mut self_pair = synth_config();
        self_pair.fusion.pairs = Some(vec![[SpectrogramKind::Stft, SpectrogramKind::Stft]]);
        assert!(self_pair.validate().is_err());

        let mut absent_kind = synth_config();
        absent_kind.dsp.kinds = vec![SpectrogramKind::Stft, SpectrogramKind::Cqt];
        absent_kind.fusion.pairs = Some(vec![[SpectrogramKind::Stft, SpectrogramKind::Mfcc]]);
        assert!(absent_kind.validate().is_err());

        let mut le_without_expansion = synth_config();
        le_without_expansion.expansion.enabled = false;
        assert!(le_without_expansion.validate().is_err());

        let mut one_fold = synth_config();
        one_fold.kfold_folds = 1;
        assert!(one_fold.validate().is_err());
    }

    #[test]
    fn pairs_resolve_to_available_kinds() {
        let mut config = synth_config();
        config.dsp.kinds = vec![SpectrogramKind::Stft, SpectrogramKind::Cqt];
        assert_eq!(
            config.fusion_pairs(),
            vec![[SpectrogramKind::Stft, SpectrogramKind::Cqt]]
        );
        assert_eq!(pair_name(config.fusion_pairs()[0]), "stft+cqt");
    }

    #[test]
    fn derived_seeds_separate_streams() {
        let config = synth_config();
        let exp = Experiment::from_config(config, Path::new("/tmp/x")).unwrap();
        assert_eq!(exp.workdir, Path::new("/tmp/x/run"));

        let mut seeds = vec![
            exp.synth_seed(),
            exp.label_noise_seed(),
            exp.kfold_seed(),
            exp.init_seed(SpectrogramKind::Stft),
            exp.init_seed(SpectrogramKind::Cqt),
            exp.train_seed(SpectrogramKind::Stft),
            exp.expand_seed(SpectrogramKind::Stft),
            exp.head_seed(SpectrogramKind::Stft),
            exp.concat_seed(SpectrogramKind::Stft, false),
            exp.concat_seed(SpectrogramKind::Stft, true),
            exp.svm_seed(0),
            exp.svm_seed(1),
        ];
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), 12, "derived streams must not collide");
    }
}
