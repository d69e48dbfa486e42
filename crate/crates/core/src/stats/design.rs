//! Design matrices with treatment-coded categoricals and interaction terms.
//!
//! Column order is fixed: intercept, numeric main effects (in spec order),
//! categorical dummies (per term, levels sorted, reference dropped), then
//! interactions (in spec order). Names follow the usual formula style:
//! `C(model_type)[T.qwen]`, `example_count:model_size`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::matrix::Matrix;
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DesignError {
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("duplicate design column {0:?}")]
    DuplicateColumn(String),
    #[error("interaction operand {0:?} is not a main effect")]
    InteractionOperand(String),
    #[error("reference level {level:?} not present in {term:?}")]
    UnknownReference { term: String, level: String },
    #[error("level {level:?} of {term:?} was not seen when the design was built")]
    UnseenLevel { term: String, level: String },
    #[error("column {name:?} has {len} rows, expected {expected}")]
    RaggedColumn { name: String, len: usize, expected: usize },
    #[error("table has no rows")]
    EmptyTable,
}

/// Column-oriented table of numeric and categorical variables.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DataTable<T> {
    n: usize,
    numeric: Vec<(String, Vec<T>)>,
    categorical: Vec<(String, Vec<String>)>,
}

impl<T: Real> DataTable<T> {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            numeric: Vec::new(),
            categorical: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn with_numeric(mut self, name: &str, values: Vec<T>) -> Result<Self, DesignError> {
        self.check_len(name, values.len())?;
        self.numeric.retain(|(n, _)| n != name);
        self.numeric.push((name.to_string(), values));
        Ok(self)
    }

    pub fn with_categorical(mut self, name: &str, values: Vec<String>) -> Result<Self, DesignError> {
        self.check_len(name, values.len())?;
        self.categorical.retain(|(n, _)| n != name);
        self.categorical.push((name.to_string(), values));
        Ok(self)
    }

    fn check_len(&self, name: &str, len: usize) -> Result<(), DesignError> {
        if len != self.n {
            return Err(DesignError::RaggedColumn {
                name: name.into(),
                len,
                expected: self.n,
            });
        }
        Ok(())
    }

    pub fn numeric(&self, name: &str) -> Option<&[T]> {
        self.numeric.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn categorical(&self, name: &str) -> Option<&[String]> {
        self.categorical
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoricalTerm {
    pub name: String,
    /// Level dropped by treatment coding; defaults to the first sorted level.
    #[serde(default)]
    pub reference: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub response: String,
    #[serde(default)]
    pub numeric_terms: Vec<String>,
    #[serde(default)]
    pub categorical_terms: Vec<CategoricalTerm>,
    #[serde(default)]
    pub interactions: Vec<(String, String)>,
    #[serde(default = "yes")]
    pub intercept: bool,
}

fn yes() -> bool {
    true
}

impl DesignSpec {
    fn categorical_term(&self, name: &str) -> Option<&CategoricalTerm> {
        self.categorical_terms.iter().find(|c| c.name == name)
    }

    fn is_main_effect(&self, name: &str) -> bool {
        self.numeric_terms.iter().any(|n| n == name) || self.categorical_term(name).is_some()
    }
}

/// Treatment coding of one categorical term.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coding {
    pub term: String,
    pub reference: String,
    /// Non-reference levels, sorted; one dummy column each.
    pub levels: Vec<String>,
}

impl Coding {
    fn column_name(&self, level: &str) -> String {
        format!("C({})[T.{}]", self.term, level)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Design<T> {
    pub x: Matrix<T>,
    pub y: Vec<T>,
    pub columns: Vec<String>,
    pub codings: Vec<Coding>,
    pub warnings: Vec<String>,
    spec: DesignSpec,
}

/// One expanded factor of a term: a named column.
type Expanded<T> = Vec<(String, Vec<T>)>;

pub fn build_design<T: Real>(table: &DataTable<T>, spec: &DesignSpec) -> Result<Design<T>, DesignError> {
    if table.is_empty() {
        return Err(DesignError::EmptyTable);
    }
    let n = table.len();
    let y = table
        .numeric(&spec.response)
        .ok_or_else(|| DesignError::UnknownColumn(spec.response.clone()))?
        .to_vec();

    let mut warnings = Vec::new();
    let mut codings = Vec::new();
    for term in &spec.categorical_terms {
        let values = table
            .categorical(&term.name)
            .ok_or_else(|| DesignError::UnknownColumn(term.name.clone()))?;
        let observed: BTreeSet<&str> = values.iter().map(String::as_str).collect();
        let reference = match &term.reference {
            Some(r) if observed.contains(r.as_str()) => r.clone(),
            Some(r) if observed.len() > 1 => {
                return Err(DesignError::UnknownReference {
                    term: term.name.clone(),
                    level: r.clone(),
                })
            }
            _ => observed.iter().next().map(|s| s.to_string()).unwrap_or_default(),
        };
        let levels: Vec<String> = observed
            .iter()
            .filter(|l| **l != reference)
            .map(|s| s.to_string())
            .collect();
        if levels.is_empty() {
            warnings.push(format!(
                "{} has a single level ({reference}); its dummy block and interactions are dropped",
                term.name
            ));
        }
        codings.push(Coding {
            term: term.name.clone(),
            reference,
            levels,
        });
    }

    let expand = |name: &str| -> Result<Expanded<T>, DesignError> {
        if let Some(values) = table.numeric(name) {
            if spec.numeric_terms.iter().any(|t| t == name) {
                return Ok(vec![(name.to_string(), values.to_vec())]);
            }
        }
        if let Some(coding) = codings.iter().find(|c| c.term == name) {
            let values = table.categorical(name).expect("checked above");
            return Ok(coding
                .levels
                .iter()
                .map(|level| {
                    let col = values
                        .iter()
                        .map(|v| if v == level { T::one() } else { T::zero() })
                        .collect();
                    (coding.column_name(level), col)
                })
                .collect());
        }
        Err(DesignError::UnknownColumn(name.to_string()))
    };

    let mut columns: Expanded<T> = Vec::new();
    if spec.intercept {
        columns.push(("Intercept".to_string(), vec![T::one(); n]));
    }
    for name in &spec.numeric_terms {
        columns.extend(expand(name)?);
    }
    for term in &spec.categorical_terms {
        columns.extend(expand(&term.name)?);
    }
    for (a, b) in &spec.interactions {
        for operand in [a, b] {
            if !spec.is_main_effect(operand) {
                return Err(DesignError::InteractionOperand(operand.clone()));
            }
        }
        let (left, right) = (expand(a)?, expand(b)?);
        if left.is_empty() || right.is_empty() {
            warnings.push(format!("interaction {a}:{b} dropped (degenerate operand)"));
            continue;
        }
        for (ln, lv) in &left {
            for (rn, rv) in &right {
                let col = lv.iter().zip(rv).map(|(&p, &q)| p * q).collect();
                columns.push((format!("{ln}:{rn}"), col));
            }
        }
    }

    let mut seen = BTreeSet::new();
    for (name, _) in &columns {
        if !seen.insert(name.as_str()) {
            return Err(DesignError::DuplicateColumn(name.clone()));
        }
    }

    let names: Vec<String> = columns.iter().map(|(n, _)| n.clone()).collect();
    let values: Vec<Vec<T>> = columns.into_iter().map(|(_, v)| v).collect();
    let x = Matrix::from_columns(n, &values).expect("columns share the table length");
    Ok(Design {
        x,
        y,
        columns: names,
        codings,
        warnings,
        spec: spec.clone(),
    })
}

/// One observation used for prediction through an existing design.
#[derive(Debug, Clone, Default)]
pub struct Observation<T> {
    pub numeric: Vec<(String, T)>,
    pub categorical: Vec<(String, String)>,
}

impl<T: Real> Design<T> {
    pub fn spec(&self) -> &DesignSpec {
        &self.spec
    }

    /// Encodes a new observation with this design's coding.
    pub fn encode(&self, obs: &Observation<T>) -> Result<Vec<T>, DesignError> {
        let mut table = DataTable::new(1);
        for (name, v) in &obs.numeric {
            table = table.with_numeric(name, vec![*v])?;
        }
        for coding in &self.codings {
            let value = obs
                .categorical
                .iter()
                .find(|(n, _)| *n == coding.term)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| DesignError::UnknownColumn(coding.term.clone()))?;
            if value != coding.reference && !coding.levels.contains(&value) {
                return Err(DesignError::UnseenLevel {
                    term: coding.term.clone(),
                    level: value,
                });
            }
            table = table.with_categorical(&coding.term, vec![value])?;
        }
        if table.numeric(&self.spec.response).is_none() {
            table = table.with_numeric(&self.spec.response, vec![T::zero()])?;
        }
        // Rebuild the single row against the stored coding so that column
        // layout matches even when the row shows only one level.
        let mut row = Vec::with_capacity(self.columns.len());
        for name in &self.columns {
            row.push(self.encode_column(name, &table)?);
        }
        Ok(row)
    }

    fn encode_column(&self, name: &str, table: &DataTable<T>) -> Result<T, DesignError> {
        if name == "Intercept" {
            return Ok(T::one());
        }
        name.split(':')
            .try_fold(T::one(), |acc, factor| Ok(acc * self.encode_factor(factor, table)?))
    }

    fn encode_factor(&self, factor: &str, table: &DataTable<T>) -> Result<T, DesignError> {
        if let Some(v) = table.numeric(factor) {
            return Ok(v[0]);
        }
        for coding in &self.codings {
            for level in &coding.levels {
                if coding.column_name(level) == factor {
                    let v = &table.categorical(&coding.term).expect("encoded above")[0];
                    return Ok(if v == level { T::one() } else { T::zero() });
                }
            }
        }
        Err(DesignError::UnknownColumn(factor.to_string()))
    }
}
