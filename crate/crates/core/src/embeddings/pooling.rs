use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EmbeddingError;
use crate::scalar::Real;

/// How slice probabilities are aggregated into one subject score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "omega")]
pub enum Pooling<T> {
    Mean,
    Max,
    /// `mm_ω(x) = (1/ω)·ln((1/n)·Σ exp(ω·xᵢ))`; negative ω acts as a soft minimum.
    Mellowmax(T),
}

impl<T: Real> Pooling<T> {
    pub fn validate(&self) -> Result<(), EmbeddingError> {
        match self {
            Pooling::Mellowmax(w) if *w == T::zero() || !w.is_finite() => Err(EmbeddingError::OmegaZero),
            _ => Ok(()),
        }
    }
}

impl<T: Real> fmt::Display for Pooling<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pooling::Mean => f.write_str("mean"),
            Pooling::Max => f.write_str("max"),
            Pooling::Mellowmax(w) => write!(f, "mellowmax({w})"),
        }
    }
}

/// Accepts `mean`, `max`, `mellowmax(1.0)` and `mellowmax:1.0`.
impl<T: Real> FromStr for Pooling<T> {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        match s {
            "mean" => return Ok(Pooling::Mean),
            "max" => return Ok(Pooling::Max),
            _ => {}
        }
        let omega = s
            .strip_prefix("mellowmax")
            .map(|rest| rest.trim_start_matches([':', '(']).trim_end_matches(')'))
            .ok_or_else(|| format!("unknown pooling {s:?} (mean, max, mellowmax(<omega>))"))?;
        let w: f64 = omega
            .parse()
            .map_err(|_| format!("invalid mellowmax omega {omega:?}"))?;
        if w == 0.0 || !w.is_finite() {
            return Err("mellowmax omega must be finite and nonzero".into());
        }
        Ok(Pooling::Mellowmax(T::lit(w)))
    }
}

/// Mellowmax with a max shift so the exponentials never overflow; the
/// `expm1`/`ln_1p` pair keeps precision for tiny |ω|.
fn mellowmax<T: Real>(values: &[T], omega: T) -> T {
    let shift = values.iter().map(|&v| omega * v).fold(T::neg_infinity(), T::max);
    let n = T::from_count(values.len());
    let mean_m1 = values
        .iter()
        .fold(T::zero(), |acc, &v| acc + (omega * v - shift).exp_m1())
        / n;
    (shift + mean_m1.ln_1p()) / omega
}

/// Pools probabilities into a score that always lies in `[min, max]`.
pub fn pool<T: Real>(probs: &[T], spec: &Pooling<T>) -> Result<T, EmbeddingError> {
    if probs.is_empty() {
        return Err(EmbeddingError::EmptyInput);
    }
    spec.validate()?;
    if let Some(&bad) = probs.iter().find(|p| !(**p >= T::zero() && **p <= T::one())) {
        return Err(EmbeddingError::ProbabilityOutOfRange(bad.to_f64_lossy()));
    }
    let lo = probs.iter().copied().fold(T::infinity(), T::min);
    let hi = probs.iter().copied().fold(T::neg_infinity(), T::max);
    let value = match spec {
        Pooling::Mean => probs.iter().fold(T::zero(), |a, &b| a + b) / T::from_count(probs.len()),
        Pooling::Max => hi,
        Pooling::Mellowmax(w) => mellowmax(probs, *w),
    };
    Ok(value.max(lo).min(hi))
}
