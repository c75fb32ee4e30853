//! Dataset manifests, stratified splits, classification and mask metrics,
//! and whole-dataset evaluation reports.

mod corpus;
mod dataset;
mod metrics;

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use corpus::{write_corpus, CorpusEntry, CorpusSpec};
pub use dataset::{evaluate_dataset, AreaComparison, EntryFailure, EvalReport, Misclassified};
pub use metrics::{
    class_metrics, confusion, mask_iou, percent_error, ClassMetrics, ClassScores, ConfusionMatrix, MaskScore,
    MaskSummary,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("invalid input: {0}")]
    Input(String),
    #[error("domain error: {0}")]
    Domain(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Solar,
    NoSolar,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Solar => "solar",
            Label::NoSolar => "no_solar",
        }
    }
}

/// One line of a JSONL manifest. Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub image: PathBuf,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zoom: Option<u8>,
}

impl ManifestEntry {
    pub fn new(image: impl Into<PathBuf>, label: Label) -> Self {
        Self { image: image.into(), label, mask: None, lat: None, zoom: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    /// Parse JSON lines; blank lines are skipped.
    pub fn parse(text: &str, root: impl Into<PathBuf>) -> Result<Self, EvalError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: ManifestEntry = serde_json::from_str(line)
                .map_err(|err| EvalError::Manifest { line: i + 1, message: err.to_string() })?;
            if let Some(z) = e.zoom {
                if z > crate::geo::MAX_ZOOM {
                    return Err(EvalError::Manifest { line: i + 1, message: format!("zoom {z} out of range") });
                }
            }
            entries.push(e);
        }
        Ok(Self { root: root.into(), entries })
    }

    /// Load and check that every referenced file exists.
    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = fs::read_to_string(path).map_err(|source| EvalError::Io { path: path.into(), source })?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let m = Self::parse(&text, root)?;
        for (i, e) in m.entries.iter().enumerate() {
            for p in std::iter::once(&e.image).chain(&e.mask) {
                if !m.resolve(p).is_file() {
                    return Err(EvalError::Manifest { line: i + 1, message: format!("missing file {}", p.display()) });
                }
            }
        }
        Ok(m)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.root.join(p)
    }

    pub fn to_jsonl(&self) -> String {
        self.entries.iter().map(|e| serde_json::to_string(e).expect("entry serializes") + "\n").collect()
    }
}

/// Stratified split: each class keeps `floor(n_class * ratio)` entries for
/// training, chosen by a seeded shuffle. Both halves keep manifest order.
pub fn split_manifest<T: Clone>(
    entries: &[T],
    label_of: impl Fn(&T) -> Label,
    ratio: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>), EvalError> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(EvalError::Input(format!("split ratio {ratio} not in (0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; entries.len()];
    for class in [Label::Solar, Label::NoSolar] {
        let mut idx: Vec<usize> = (0..entries.len()).filter(|&i| label_of(&entries[i]) == class).collect();
        let keep = ((idx.len() as f64) * ratio + 1e-9).floor() as usize;
        idx.shuffle(&mut rng);
        for &i in &idx[..keep.min(idx.len())] {
            in_train[i] = true;
        }
    }
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (e, &t) in entries.iter().zip(&in_train) {
        if t { &mut train } else { &mut val }.push(e.clone());
    }
    Ok((train, val))
}
