//! Dataset schema, validation, and line-delimited JSON persistence.
//!
//! Each line of a dataset file is one record with exactly the fields
//! `id`, `embedding`, `label`, `concepts`, `unknown_rate` and an optional
//! `text`. Concept values are encoded as `1`, `0`, or `-1` (unknown).
//!
//! Dataset-level metadata that the records cannot carry (class count and
//! concept names) lives in an optional sidecar `<file>.meta.json`. Without
//! it, `n_classes` is inferred as `max(label) + 1` (at least 2) and concepts
//! are named `c0..c{K-1}`.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CredalError, Result};

/// Majority annotator value for one concept.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum ConceptValue {
    Absent,
    Present,
    Unknown,
}

impl ConceptValue {
    pub fn from_bool(b: bool) -> Self {
        if b {
            ConceptValue::Present
        } else {
            ConceptValue::Absent
        }
    }

    /// Ground-truth probability for a known concept, `None` for unknown.
    pub fn target(self) -> Option<f64> {
        match self {
            ConceptValue::Absent => Some(0.0),
            ConceptValue::Present => Some(1.0),
            ConceptValue::Unknown => None,
        }
    }

    pub fn is_known(self) -> bool {
        self != ConceptValue::Unknown
    }
}

impl TryFrom<i8> for ConceptValue {
    type Error = String;

    fn try_from(v: i8) -> std::result::Result<Self, Self::Error> {
        match v {
            1 => Ok(ConceptValue::Present),
            0 => Ok(ConceptValue::Absent),
            -1 => Ok(ConceptValue::Unknown),
            other => Err(format!("concept value {other} not in {{1, 0, -1}}")),
        }
    }
}

impl From<ConceptValue> for i8 {
    fn from(v: ConceptValue) -> i8 {
        match v {
            ConceptValue::Present => 1,
            ConceptValue::Absent => 0,
            ConceptValue::Unknown => -1,
        }
    }
}

/// One sample: a frozen encoder embedding with task label and concept annotations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Example {
    pub id: String,
    pub embedding: Vec<f64>,
    pub label: usize,
    pub concepts: Vec<ConceptValue>,
    /// Fraction of annotators that reported "unknown", per concept.
    pub unknown_rate: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    EmbeddingLength { expected: usize, got: usize },
    NonFiniteEmbedding,
    ConceptsLength { expected: usize, got: usize },
    UnknownRateLength { expected: usize, got: usize },
    UnknownRateOutOfRange { concept: usize, value: f64 },
    LabelOutOfRange { label: usize, n_classes: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmbeddingLength { expected, got } => {
                write!(f, "embedding length mismatch (expected {expected}, got {got})")
            }
            Violation::NonFiniteEmbedding => write!(f, "embedding contains non-finite values"),
            Violation::ConceptsLength { expected, got } => {
                write!(f, "concepts length mismatch (expected {expected}, got {got})")
            }
            Violation::UnknownRateLength { expected, got } => {
                write!(f, "unknown_rate length mismatch (expected {expected}, got {got})")
            }
            Violation::UnknownRateOutOfRange { concept, value } => {
                write!(f, "unknown_rate out of [0,1] (concept {concept}: {value})")
            }
            Violation::LabelOutOfRange { label, n_classes } => {
                write!(f, "label {label} out of range for {n_classes} classes")
            }
        }
    }
}

/// Checks every invariant of an example; an empty list means the example is valid.
pub fn validate_example(e: &Example, d: usize, k: usize, n_classes: usize) -> Vec<Violation> {
    let mut out = Vec::new();
    if e.embedding.len() != d {
        out.push(Violation::EmbeddingLength {
            expected: d,
            got: e.embedding.len(),
        });
    }
    if e.embedding.iter().any(|x| !x.is_finite()) {
        out.push(Violation::NonFiniteEmbedding);
    }
    if e.concepts.len() != k {
        out.push(Violation::ConceptsLength {
            expected: k,
            got: e.concepts.len(),
        });
    }
    if e.unknown_rate.len() != k {
        out.push(Violation::UnknownRateLength {
            expected: k,
            got: e.unknown_rate.len(),
        });
    }
    for (concept, &value) in e.unknown_rate.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            out.push(Violation::UnknownRateOutOfRange { concept, value });
        }
    }
    if e.label >= n_classes {
        out.push(Violation::LabelOutOfRange {
            label: e.label,
            n_classes,
        });
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub examples: Vec<Example>,
    pub d: usize,
    pub k: usize,
    pub n_classes: usize,
    pub concept_names: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct DatasetMeta {
    n_classes: usize,
    concept_names: Vec<String>,
}

pub fn default_concept_names(k: usize) -> Vec<String> {
    (0..k).map(|i| format!("c{i}")).collect()
}

fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

impl Dataset {
    pub fn new(
        examples: Vec<Example>,
        d: usize,
        k: usize,
        n_classes: usize,
        concept_names: Vec<String>,
    ) -> Result<Self> {
        if n_classes < 2 {
            return Err(CredalError::InvalidDimensions(format!(
                "n_classes must be at least 2, got {n_classes}"
            )));
        }
        if k == 0 {
            return Err(CredalError::InvalidDimensions("K must be at least 1".into()));
        }
        if concept_names.len() != k {
            return Err(CredalError::DimensionMismatch {
                context: "concept names",
                expected: k,
                got: concept_names.len(),
            });
        }
        for (i, e) in examples.iter().enumerate() {
            let violations = validate_example(e, d, k, n_classes);
            if !violations.is_empty() {
                return Err(CredalError::InvalidRecord {
                    line: i + 1,
                    violations: violations.iter().map(ToString::to_string).collect(),
                });
            }
        }
        Ok(Self {
            examples,
            d,
            k,
            n_classes,
            concept_names,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Same metadata, different example subset.
    pub fn with_examples(&self, examples: Vec<Example>) -> Dataset {
        Dataset {
            examples,
            d: self.d,
            k: self.k,
            n_classes: self.n_classes,
            concept_names: self.concept_names.clone(),
        }
    }

    /// Seeded shuffle, then cut into train/validation/test by fractions.
    /// The test split takes whatever remains after train and validation.
    pub fn split(&self, train_frac: f64, val_frac: f64, seed: u64) -> Result<Splits> {
        if !(train_frac > 0.0 && val_frac >= 0.0 && train_frac + val_frac <= 1.0) {
            return Err(CredalError::InvalidArgument(format!(
                "bad split fractions {train_frac}/{val_frac}"
            )));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = (self.len() as f64 * train_frac).round() as usize;
        let n_val = (self.len() as f64 * val_frac).round() as usize;
        let n_val = n_val.min(self.len() - n_train);
        let take = |range: &[usize]| {
            self.with_examples(range.iter().map(|&i| self.examples[i].clone()).collect())
        };
        Ok(Splits {
            train: take(&idx[..n_train]),
            val: take(&idx[n_train..n_train + n_val]),
            test: take(&idx[n_train + n_val..]),
        })
    }

    pub fn has_disagreement(&self) -> bool {
        self.examples
            .iter()
            .any(|e| e.unknown_rate.iter().any(|&r| r > 0.0))
    }
}

#[derive(Clone, Debug)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Writes one record per line. Floats use shortest round-trip formatting, so
/// `load_dataset(save_dataset(d))` reproduces every value bit for bit.
pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| CredalError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for e in &ds.examples {
        serde_json::to_writer(&mut w, e).map_err(|err| CredalError::io(path, err.into()))?;
        w.write_all(b"\n").map_err(|err| CredalError::io(path, err))?;
    }
    w.flush().map_err(|err| CredalError::io(path, err))?;

    let meta = DatasetMeta {
        n_classes: ds.n_classes,
        concept_names: ds.concept_names.clone(),
    };
    let mp = meta_path(path);
    let text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    std::fs::write(&mp, text).map_err(|e| CredalError::io(mp, e))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| CredalError::io(path, e))?;
    let mut examples = Vec::new();
    let mut lines = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CredalError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let e: Example = serde_json::from_str(&line).map_err(|err| CredalError::Parse {
            line: i + 1,
            message: err.to_string(),
        })?;
        examples.push(e);
        lines.push(i + 1);
    }
    let first = examples.first().ok_or(CredalError::EmptyDataset)?;
    let d = first.embedding.len();
    let k = first.concepts.len();

    let mp = meta_path(path);
    let (n_classes, concept_names) = if mp.exists() {
        let text = std::fs::read_to_string(&mp).map_err(|e| CredalError::io(&mp, e))?;
        let meta: DatasetMeta = serde_json::from_str(&text).map_err(|err| CredalError::Parse {
            line: err.line(),
            message: format!("{}: {err}", mp.display()),
        })?;
        (meta.n_classes, meta.concept_names)
    } else {
        let max_label = examples.iter().map(|e| e.label).max().unwrap_or(0);
        ((max_label + 1).max(2), default_concept_names(k))
    };

    for (e, &line) in examples.iter().zip(&lines) {
        let violations = validate_example(e, d, k, n_classes);
        if !violations.is_empty() {
            return Err(CredalError::InvalidRecord {
                line,
                violations: violations.iter().map(ToString::to_string).collect(),
            });
        }
    }
    Dataset::new(examples, d, k, n_classes, concept_names)
}
