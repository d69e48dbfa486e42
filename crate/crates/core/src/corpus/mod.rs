//! Subject data model, corpus ingestion and stratified splitting.

mod io;
mod split;
pub mod synthetic;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{load_corpus, save_corpus, CorpusFormat};
pub use split::{age_band, stratified_split, Fractions, Stratum};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("duplicate subject id {0:?}")]
    DuplicateSubject(String),
    #[error("stratum cell {0} has no subjects")]
    EmptyStratum(String),
    #[error("invalid split fractions: {0}")]
    InvalidFractions(String),
    #[error("cannot read corpus {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sex {
    F,
    M,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    AtRisk,
    NoRisk,
}

impl Label {
    pub fn token(self) -> &'static str {
        match self {
            Label::AtRisk => "at_risk",
            Label::NoRisk => "no_risk",
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Label::AtRisk => Label::NoRisk,
            Label::NoRisk => Label::AtRisk,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Dev,
    Test,
    Unassigned,
}

impl Split {
    pub const ASSIGNED: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn token(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Sex {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "F" => Ok(Sex::F),
            "M" => Ok(Sex::M),
            other => Err(format!("invalid sex {other:?} (expected \"F\" or \"M\")")),
        }
    }
}

impl FromStr for Label {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "at_risk" => Ok(Label::AtRisk),
            "no_risk" => Ok(Label::NoRisk),
            other => Err(format!("invalid label {other:?} (expected \"at_risk\" or \"no_risk\")")),
        }
    }
}

impl FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            "" | "unassigned" => Ok(Split::Unassigned),
            other => Err(format!("invalid split {other:?} (expected train/dev/test)")),
        }
    }
}

/// One participant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub age: u32,
    pub sex: Sex,
    /// Answer to the emotional-distress question.
    pub transcript_task1: String,
    /// Description of the negative-emotion face image.
    pub transcript_task2: String,
    pub label: Label,
    pub split: Split,
    /// Hand-written reasoning used when the subject serves as a CoT demo.
    pub rationale: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    subjects: Vec<SubjectRecord>,
    pub provenance: String,
}

impl Corpus {
    /// Builds a corpus, rejecting duplicate subject ids.
    pub fn new(subjects: Vec<SubjectRecord>, provenance: impl Into<String>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::with_capacity(subjects.len());
        for s in &subjects {
            if !seen.insert(s.subject_id.as_str()) {
                return Err(CorpusError::DuplicateSubject(s.subject_id.clone()));
            }
        }
        Ok(Self {
            subjects,
            provenance: provenance.into(),
        })
    }

    pub fn subjects(&self) -> &[SubjectRecord] {
        &self.subjects
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn get(&self, subject_id: &str) -> Option<&SubjectRecord> {
        self.subjects.iter().find(|s| s.subject_id == subject_id)
    }

    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &SubjectRecord> {
        self.subjects.iter().filter(move |s| s.split == split)
    }

    pub fn split_size(&self, split: Split) -> usize {
        self.in_split(split).count()
    }

    pub fn label_count(&self, split: Option<Split>, label: Label) -> usize {
        self.subjects
            .iter()
            .filter(|s| split.is_none_or(|sp| s.split == sp) && s.label == label)
            .count()
    }

    pub fn sex_count(&self, split: Option<Split>, sex: Sex) -> usize {
        self.subjects
            .iter()
            .filter(|s| split.is_none_or(|sp| s.split == sp) && s.sex == sex)
            .count()
    }

    /// Copy of this corpus restricted to `split`.
    pub fn restricted_to(&self, split: Split) -> Corpus {
        Corpus {
            subjects: self.in_split(split).cloned().collect(),
            provenance: format!("{} [{}]", self.provenance, split),
        }
    }

    pub fn with_splits(&self, splits: &[Split]) -> Corpus {
        assert_eq!(splits.len(), self.subjects.len());
        let subjects = self
            .subjects
            .iter()
            .zip(splits)
            .map(|(s, &sp)| SubjectRecord { split: sp, ..s.clone() })
            .collect();
        Corpus {
            subjects,
            provenance: self.provenance.clone(),
        }
    }

    /// Per-split characteristics laid out like a dataset-description table:
    /// N, sex F/M, age mean (sd), at-risk/no-risk.
    pub fn characteristics_table(&self) -> String {
        let mut cols: Vec<(String, Vec<&SubjectRecord>)> = vec![("All data".into(), self.subjects.iter().collect())];
        for split in Split::ASSIGNED {
            let members: Vec<_> = self.in_split(split).collect();
            if !members.is_empty() {
                let mut name = split.token().to_string();
                name[..1].make_ascii_uppercase();
                cols.push((name, members));
            }
        }
        let unassigned: Vec<_> = self.in_split(Split::Unassigned).collect();
        if !unassigned.is_empty() && unassigned.len() != self.len() {
            cols.push(("Unassigned".into(), unassigned));
        }

        let cell = |members: &[&SubjectRecord], row: usize| -> String {
            let n = members.len();
            match row {
                0 => n.to_string(),
                1 => {
                    let f = members.iter().filter(|s| s.sex == Sex::F).count();
                    format!("{}/{}", f, n - f)
                }
                2 => {
                    if n == 0 {
                        return "-".into();
                    }
                    let mean = members.iter().map(|s| s.age as f64).sum::<f64>() / n as f64;
                    let var = if n > 1 {
                        members.iter().map(|s| (s.age as f64 - mean).powi(2)).sum::<f64>() / (n - 1) as f64
                    } else {
                        0.0
                    };
                    format!("{:.1} ({:.1})", mean, var.sqrt())
                }
                _ => {
                    let a = members.iter().filter(|s| s.label == Label::AtRisk).count();
                    format!("{}/{}", a, n - a)
                }
            }
        };
        let row_names = ["N", "Sex (F/M)", "Age", "Risk (at/no)"];
        let mut out = format!("{:<14}", "");
        for (name, _) in &cols {
            out.push_str(&format!("{name:>14}"));
        }
        out.push('\n');
        for (r, row_name) in row_names.iter().enumerate() {
            out.push_str(&format!("{row_name:<14}"));
            for (_, members) in &cols {
                out.push_str(&format!("{:>14}", cell(members, r)));
            }
            out.push('\n');
        }
        out
    }
}
