//! Linear-model statistics for the shot-count ablation: design matrices
//! with interactions, QR-based OLS and t-distribution p-values.

pub mod design;
pub mod matrix;
pub mod ols;
pub mod tdist;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use design::{build_design, CategoricalTerm, Coding, DataTable, Design, DesignError, DesignSpec, Observation};
pub use matrix::Matrix;
pub use ols::{fit_ols, fit_ols_named, OlsError, OlsFit};
pub use tdist::{t_cdf, t_sf, two_sided_p};

use crate::scalar::Real;

pub const RESPONSE: &str = "accuracy";
pub const EXAMPLE_COUNT: &str = "example_count";
pub const MODEL_TYPE: &str = "model_type";
pub const MODEL_SIZE: &str = "model_size";
pub const REFERENCE_MODEL_TYPE: &str = "gemma";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Ols(#[from] OlsError),
}

/// `accuracy ~ example_count + C(model_type) + model_size
///   + example_count:C(model_type) + example_count:model_size`
pub fn ablation_design_spec() -> DesignSpec {
    DesignSpec {
        response: RESPONSE.into(),
        numeric_terms: vec![EXAMPLE_COUNT.into(), MODEL_SIZE.into()],
        categorical_terms: vec![CategoricalTerm {
            name: MODEL_TYPE.into(),
            reference: Some(REFERENCE_MODEL_TYPE.into()),
        }],
        interactions: vec![
            (EXAMPLE_COUNT.into(), MODEL_TYPE.into()),
            (EXAMPLE_COUNT.into(), MODEL_SIZE.into()),
        ],
        intercept: true,
    }
}

/// A fit together with the design notes that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFit<T> {
    pub fit: OlsFit<T>,
    pub design: Design<T>,
}

impl<T: Real> ModelFit<T> {
    pub fn warnings(&self) -> &[String] {
        &self.design.warnings
    }

    pub fn report(&self) -> FitReport {
        FitReport::new(&self.fit, &self.design.warnings)
    }
}

pub fn fit_design<T: Real>(table: &DataTable<T>, spec: &DesignSpec) -> Result<ModelFit<T>, StatsError> {
    let design = build_design(table, spec)?;
    let fit = fit_ols_named(&design.x, &design.y, &design.columns)?;
    Ok(ModelFit { fit, design })
}

/// Fits the shot-count ablation model. When `model_size` does not vary it
/// is collinear with the intercept, so it and its interaction are dropped
/// with a warning (this covers the single-model reduction).
pub fn fit_ablation_model<T: Real>(table: &DataTable<T>) -> Result<ModelFit<T>, StatsError> {
    let mut spec = ablation_design_spec();
    let mut notes = Vec::new();
    if let Some(sizes) = table.numeric(MODEL_SIZE) {
        if sizes.windows(2).all(|w| w[0] == w[1]) {
            spec.numeric_terms.retain(|t| t != MODEL_SIZE);
            spec.interactions.retain(|(a, b)| a != MODEL_SIZE && b != MODEL_SIZE);
            notes.push(format!("{MODEL_SIZE} is constant; dropped with its interaction"));
        }
    }
    let mut fitted = fit_design(table, &spec)?;
    notes.append(&mut fitted.design.warnings);
    fitted.design.warnings = notes;
    Ok(fitted)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub name: String,
    pub beta: f64,
    pub se: f64,
    pub t: f64,
    pub p: f64,
}

/// Serializable fit summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub coefficients: Vec<CoefficientRow>,
    pub r_squared: f64,
    pub n: usize,
    pub df_resid: u64,
    pub condition_number: f64,
    pub condition_warning: bool,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl FitReport {
    pub fn new<T: Real>(fit: &OlsFit<T>, warnings: &[String]) -> Self {
        let coefficients = fit
            .names
            .iter()
            .enumerate()
            .map(|(j, name)| CoefficientRow {
                name: name.clone(),
                beta: fit.coef[j].to_f64_lossy(),
                se: fit.se[j].to_f64_lossy(),
                t: fit.t_stats[j].to_f64_lossy(),
                p: fit.p_values[j].to_f64_lossy(),
            })
            .collect();
        Self {
            coefficients,
            r_squared: fit.r_squared.to_f64_lossy(),
            n: fit.n,
            df_resid: fit.df_resid,
            condition_number: fit.condition_number.to_f64_lossy(),
            condition_warning: fit.condition_warning,
            warnings: warnings.to_vec(),
        }
    }

    /// Aligned text table in the usual regression-summary layout.
    pub fn to_text(&self) -> String {
        let width = self.coefficients.iter().map(|c| c.name.len()).max().unwrap_or(0).max(9);
        let mut out = String::new();
        out.push_str(&format!(
            "OLS  n = {}  df_resid = {}  R-squared = {:.3}\n",
            self.n, self.df_resid, self.r_squared
        ));
        let rule = "=".repeat(width + 48);
        out.push_str(&rule);
        out.push('\n');
        out.push_str(&format!(
            "{:<width$} {:>11} {:>11} {:>11} {:>11}\n",
            "", "coef", "std err", "t", "P>|t|"
        ));
        out.push_str(&"-".repeat(width + 48));
        out.push('\n');
        for c in &self.coefficients {
            out.push_str(&format!(
                "{:<width$} {:>11} {:>11} {:>11} {:>11}\n",
                c.name,
                fmt_num(c.beta),
                fmt_num(c.se),
                format!("{:.3}", c.t),
                format!("{:.3}", c.p)
            ));
        }
        out.push_str(&rule);
        out.push('\n');
        if self.condition_warning {
            out.push_str(&format!(
                "warning: condition number {:.3e} indicates strong multicollinearity\n",
                self.condition_number
            ));
        }
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }
}

fn fmt_num(x: f64) -> String {
    if x != 0.0 && x.abs() < 1e-3 {
        format!("{x:.3e}")
    } else {
        format!("{x:.4}")
    }
}
