//! Accuracy, F1 and confusion matrices over predictions.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Label, Split};
use crate::parser::PredictionRecord;
use crate::prompt::Mode;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("no prediction for subject {0:?}")]
    MissingPrediction(String),
    #[error("prediction for subject {0:?} which is not in the evaluated split")]
    UnknownSubject(String),
    #[error("more than one prediction for subject {0:?}")]
    DuplicatePrediction(String),
}

/// Counts with at-risk as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn add(&mut self, truth: Label, predicted: Label) {
        match (truth, predicted) {
            (Label::AtRisk, Label::AtRisk) => self.tp += 1,
            (Label::NoRisk, Label::AtRisk) => self.fp += 1,
            (Label::NoRisk, Label::NoRisk) => self.tn += 1,
            (Label::AtRisk, Label::NoRisk) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        let n = self.total();
        if n == 0 {
            0.0
        } else {
            (self.tp + self.tn) as f64 / n as f64
        }
    }

    /// `2tp / (2tp + fp + fn)`, zero when undefined.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            (2 * self.tp) as f64 / denom as f64
        }
    }

    /// Same predictions scored with no-risk as the positive class.
    pub fn swapped(&self) -> Self {
        Self {
            tp: self.tn,
            fp: self.fn_,
            tn: self.tp,
            fn_: self.fp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMeta {
    pub mode: Mode,
    pub k: usize,
    pub seed: u64,
    pub model_name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub f1: f64,
    pub matrix: ConfusionMatrix,
    pub n: usize,
    pub split: Split,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub run_meta: Option<RunMeta>,
}

impl EvalReport {
    pub fn from_matrix(matrix: ConfusionMatrix, split: Split) -> Self {
        Self {
            accuracy: matrix.accuracy(),
            f1: matrix.f1(),
            n: matrix.total(),
            matrix,
            split,
            run_meta: None,
        }
    }

    pub fn with_meta(mut self, meta: RunMeta) -> Self {
        self.run_meta = Some(meta);
        self
    }

    pub fn to_text(&self) -> String {
        let m = &self.matrix;
        let mut out = String::new();
        if let Some(meta) = &self.run_meta {
            out.push_str(&format!(
                "model {}  mode {}  k {}  seed {}\n",
                meta.model_name, meta.mode, meta.k, meta.seed
            ));
        }
        out.push_str(&format!(
            "split {}  n {}  accuracy {:.4}  f1 {:.4}\n\n",
            self.split, self.n, self.accuracy, self.f1
        ));
        out.push_str(&format!("{:<16}{:>14}{:>14}\n", "", "pred at_risk", "pred no_risk"));
        out.push_str(&format!("{:<16}{:>14}{:>14}\n", "true at_risk", m.tp, m.fn_));
        out.push_str(&format!("{:<16}{:>14}{:>14}\n", "true no_risk", m.fp, m.tn));
        out
    }
}

/// Scores one prediction per subject of `split` against the corpus labels.
pub fn evaluate(predictions: &[PredictionRecord], truth: &Corpus, split: Split) -> Result<EvalReport, EvalError> {
    let mut by_id: HashMap<&str, Label> = HashMap::with_capacity(predictions.len());
    for p in predictions {
        if by_id.insert(p.subject_id.as_str(), p.predicted).is_some() {
            return Err(EvalError::DuplicatePrediction(p.subject_id.clone()));
        }
    }
    let mut matrix = ConfusionMatrix::default();
    let mut scored = 0;
    for subject in truth.in_split(split) {
        let predicted = by_id
            .get(subject.subject_id.as_str())
            .ok_or_else(|| EvalError::MissingPrediction(subject.subject_id.clone()))?;
        matrix.add(subject.label, *predicted);
        scored += 1;
    }
    if scored != by_id.len() {
        let extra = predictions
            .iter()
            .find(|p| truth.get(&p.subject_id).is_none_or(|s| s.split != split))
            .expect("some prediction is outside the split");
        return Err(EvalError::UnknownSubject(extra.subject_id.clone()));
    }
    Ok(EvalReport::from_matrix(matrix, split))
}
