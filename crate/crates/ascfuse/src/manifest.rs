//! Dataset manifests: which audio segments exist, where their WAV files
//! live, their labels and their split membership.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::PipelineError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub class_names: Vec<String>,
    /// Rate every segment is resampled to before analysis.
    pub sample_rate: u32,
    pub segments: Vec<SegmentEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentEntry {
    pub id: String,
    /// WAV location; a relative path resolves against the manifest's
    /// directory.
    pub wav: PathBuf,
    pub label: usize,
    pub split: Split,
    /// Cross-validation fold, when the dataset predefines folds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fold: Option<usize>,
    /// The original label, present only when label noise replaced it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clean_label: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl DatasetManifest {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |msg: String| Err(PipelineError::BadManifest(msg));
        if self.class_names.len() < 2 {
            return bad(format!("need at least 2 classes, got {}", self.class_names.len()));
        }
        let unique: BTreeSet<&String> = self.class_names.iter().collect();
        if unique.len() != self.class_names.len() {
            return bad("class names are not unique".into());
        }
        if self.sample_rate == 0 {
            return bad("sample_rate must be positive".into());
        }
        if self.segments.is_empty() {
            return bad("manifest lists no segments".into());
        }

        let mut ids = BTreeSet::new();
        let mut class_seen = vec![false; self.num_classes()];
        for entry in &self.segments {
            if entry.id.is_empty() {
                return bad("a segment has an empty id".into());
            }
            if !ids.insert(entry.id.as_str()) {
                return bad(format!(
                    "segment id `{}` appears more than once; one recording cannot sit in two \
                     places at the same time",
                    entry.id
                ));
            }
            if entry.label >= self.num_classes() {
                return bad(format!(
                    "segment `{}` has label {} but there are only {} classes",
                    entry.id,
                    entry.label,
                    self.num_classes()
                ));
            }
            class_seen[entry.label] = true;
        }
        if let Some(missing) = class_seen.iter().position(|&seen| !seen) {
            return bad(format!(
                "class {missing} (`{}`) has no segments",
                self.class_names[missing]
            ));
        }

        let with_fold = self.segments.iter().filter(|s| s.fold.is_some()).count();
        if with_fold != 0 && with_fold != self.segments.len() {
            return bad(format!(
                "{with_fold} of {} segments carry a fold; folds must cover all segments or none",
                self.segments.len()
            ));
        }
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<(Self, PathBuf), PipelineError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| {
            PipelineError::BadManifest(format!("cannot read {}: {e}", path.display()))
        })?;
        let manifest: DatasetManifest = serde_json::from_str(&text)
            .map_err(|e| PipelineError::BadManifest(format!("{}: {e}", path.display())))?;
        manifest.validate()?;
        let dir = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok((manifest, dir))
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<(), PipelineError> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        if let Some(parent) = path.as_ref().parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, text)?;
        Ok(())
    }

    /// Absolute WAV path of one entry, given the manifest's directory.
    pub fn wav_path(&self, dir: &Path, entry: &SegmentEntry) -> PathBuf {
        if entry.wav.is_absolute() {
            entry.wav.clone()
        } else {
            dir.join(&entry.wav)
        }
    }

    pub fn indices_of(&self, split: Split) -> Vec<usize> {
        self.segments
            .iter()
            .enumerate()
            .filter(|(_, s)| s.split == split)
            .map(|(i, _)| i)
            .collect()
    }
}
