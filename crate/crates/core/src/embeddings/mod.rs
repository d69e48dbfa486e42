//! Slice-embedding baseline: a logistic-regression slice classifier whose
//! probabilities are pooled into one subject-level decision.

mod logistic;
mod pooling;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use logistic::{
    loss, loss_and_gradient, sigmoid, train_logistic, Init, LogisticModel, TrainOptions, TrainingMeta,
    DEFAULT_L2_LAMBDA,
};
pub use pooling::{pool, Pooling};

use crate::corpus::{Corpus, Label, Split};
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("training data contains a single class")]
    SingleClassData,
    #[error("training data is empty")]
    EmptyDataset,
    #[error("cannot pool an empty list")]
    EmptyInput,
    #[error("mellowmax omega must be finite and nonzero")]
    OmegaZero,
    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("subject {0:?} has no slices for the selected tasks")]
    NoSlicesForTasks(String),
    #[error("subject {subject_id:?} repeats slice ({task}, {slice_index})")]
    DuplicateSlice {
        subject_id: String,
        task: TaskTag,
        slice_index: u32,
    },
    #[error("embedding subject {0:?} is not in the corpus")]
    UnknownSubject(String),
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("invalid option: {0}")]
    InvalidOption(String),
    #[error("threshold {0} must lie strictly inside (0, 1)")]
    InvalidThreshold(f64),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskTag {
    Task1,
    Task2,
    Reading,
}

impl TaskTag {
    pub const ALL: [TaskTag; 3] = [TaskTag::Task1, TaskTag::Task2, TaskTag::Reading];
}

impl fmt::Display for TaskTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskTag::Task1 => "task1",
            TaskTag::Task2 => "task2",
            TaskTag::Reading => "reading",
        })
    }
}

impl FromStr for TaskTag {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "task1" => Ok(TaskTag::Task1),
            "task2" => Ok(TaskTag::Task2),
            "reading" => Ok(TaskTag::Reading),
            other => Err(format!("unknown task {other:?} (task1, task2, reading)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slice<T> {
    pub task: TaskTag,
    pub slice_index: u32,
    pub vector: Vec<T>,
}

/// All slice embeddings of one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceEmbeddingSet<T> {
    pub subject_id: String,
    pub slices: Vec<Slice<T>>,
}

impl<T: Real> SliceEmbeddingSet<T> {
    pub fn for_tasks<'a>(&'a self, tasks: &'a [TaskTag]) -> impl Iterator<Item = &'a Slice<T>> + 'a {
        self.slices.iter().filter(move |s| tasks.contains(&s.task))
    }
}

/// Slice vectors with the label of their subject.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSlices<T> {
    dim: usize,
    vectors: Vec<Vec<T>>,
    labels: Vec<Label>,
}

impl<T: Real> LabeledSlices<T> {
    pub fn new(vectors: Vec<Vec<T>>, labels: Vec<Label>) -> Result<Self, EmbeddingError> {
        assert_eq!(vectors.len(), labels.len(), "one label per vector");
        let dim = vectors.first().map_or(0, Vec::len);
        if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
            return Err(EmbeddingError::DimensionMismatch {
                expected: dim,
                found: v.len(),
            });
        }
        Ok(Self { dim, vectors, labels })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[T], Label)> {
        self.vectors.iter().map(Vec::as_slice).zip(self.labels.iter().copied())
    }
}

/// Collects the selected-task slices of every subject in `split`, each
/// labelled with its subject's label.
pub fn training_slices<T: Real>(
    corpus: &Corpus,
    sets: &[SliceEmbeddingSet<T>],
    split: Split,
    tasks: &[TaskTag],
) -> Result<LabeledSlices<T>, EmbeddingError> {
    let mut vectors = Vec::new();
    let mut labels = Vec::new();
    for set in sets {
        let subject = corpus
            .get(&set.subject_id)
            .ok_or_else(|| EmbeddingError::UnknownSubject(set.subject_id.clone()))?;
        if subject.split != split {
            continue;
        }
        for slice in set.for_tasks(tasks) {
            vectors.push(slice.vector.clone());
            labels.push(subject.label);
        }
    }
    LabeledSlices::new(vectors, labels)
}

/// Pools slice probabilities over the union of the selected tasks and
/// thresholds the result; a score equal to the threshold counts as at risk.
pub fn classify_subject<T: Real>(
    model: &LogisticModel<T>,
    set: &SliceEmbeddingSet<T>,
    tasks: &[TaskTag],
    spec: &Pooling<T>,
    threshold: T,
) -> Result<(Label, T), EmbeddingError> {
    if !(threshold > T::zero() && threshold < T::one()) {
        return Err(EmbeddingError::InvalidThreshold(threshold.to_f64_lossy()));
    }
    let probs = set
        .for_tasks(tasks)
        .map(|s| model.predict_proba(&s.vector))
        .collect::<Result<Vec<_>, _>>()?;
    if probs.is_empty() {
        return Err(EmbeddingError::NoSlicesForTasks(set.subject_id.clone()));
    }
    let score = pool(&probs, spec)?;
    let label = if score >= threshold {
        Label::AtRisk
    } else {
        Label::NoRisk
    };
    Ok((label, score))
}

#[derive(Debug, Serialize, Deserialize)]
struct SliceRow {
    subject_id: String,
    task: TaskTag,
    slice_index: u32,
    vector: Vec<f64>,
}

/// Reads one-slice-per-line JSONL, grouping by subject in first-seen order.
pub fn load_embeddings(path: &Path) -> Result<Vec<SliceEmbeddingSet<f64>>, EmbeddingError> {
    let text = fs::read_to_string(path).map_err(|source| EmbeddingError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_embeddings(&text)
}

pub fn parse_embeddings(text: &str) -> Result<Vec<SliceEmbeddingSet<f64>>, EmbeddingError> {
    let mut sets: Vec<SliceEmbeddingSet<f64>> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut seen: HashSet<(String, TaskTag, u32)> = HashSet::new();
    let mut dim = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let row: SliceRow = serde_json::from_str(raw).map_err(|e| EmbeddingError::Malformed {
            line,
            reason: e.to_string(),
        })?;
        if row.vector.is_empty() {
            return Err(EmbeddingError::Malformed {
                line,
                reason: "empty vector".into(),
            });
        }
        if row.vector.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::Malformed {
                line,
                reason: "non-finite vector entry".into(),
            });
        }
        let expected = *dim.get_or_insert(row.vector.len());
        if row.vector.len() != expected {
            return Err(EmbeddingError::DimensionMismatch {
                expected,
                found: row.vector.len(),
            });
        }
        if !seen.insert((row.subject_id.clone(), row.task, row.slice_index)) {
            return Err(EmbeddingError::DuplicateSlice {
                subject_id: row.subject_id,
                task: row.task,
                slice_index: row.slice_index,
            });
        }
        let slot = *index.entry(row.subject_id.clone()).or_insert_with(|| {
            sets.push(SliceEmbeddingSet {
                subject_id: row.subject_id.clone(),
                slices: Vec::new(),
            });
            sets.len() - 1
        });
        sets[slot].slices.push(Slice {
            task: row.task,
            slice_index: row.slice_index,
            vector: row.vector,
        });
    }
    Ok(sets)
}

pub fn save_embeddings(sets: &[SliceEmbeddingSet<f64>], path: &Path) -> Result<(), EmbeddingError> {
    let mut buf = Vec::new();
    for set in sets {
        for s in &set.slices {
            let row = SliceRow {
                subject_id: set.subject_id.clone(),
                task: s.task,
                slice_index: s.slice_index,
                vector: s.vector.clone(),
            };
            serde_json::to_writer(&mut buf, &row).expect("row serializes");
            buf.push(b'\n');
        }
    }
    fs::write(path, buf).map_err(|source| EmbeddingError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Synthetic slice embeddings whose first coordinate carries the label sign
/// (`+separation` for at-risk, `-separation` otherwise) plus uniform noise.
pub fn synthetic_embeddings(
    corpus: &Corpus,
    dim: usize,
    max_slices_per_task: u32,
    separation: f64,
    noise: f64,
    seed: u64,
) -> Vec<SliceEmbeddingSet<f64>> {
    assert!(dim >= 1 && max_slices_per_task >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    corpus
        .subjects()
        .iter()
        .map(|s| {
            let sign = if s.label == Label::AtRisk { 1.0 } else { -1.0 };
            let mut slices = Vec::new();
            for task in TaskTag::ALL {
                let count = rng.gen_range(1..=max_slices_per_task);
                for slice_index in 0..count {
                    let vector = (0..dim)
                        .map(|j| {
                            let centre = if j == 0 { sign * separation } else { 0.0 };
                            centre + noise * rng.gen_range(-1.0..=1.0)
                        })
                        .collect();
                    slices.push(Slice {
                        task,
                        slice_index,
                        vector,
                    });
                }
            }
            SliceEmbeddingSet {
                subject_id: s.subject_id.clone(),
                slices,
            }
        })
        .collect()
}
