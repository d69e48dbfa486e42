//! Turns raw completions into predictions.

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Label;
use crate::prompt::{Mode, ANSWER_MARKER, REASONING_MARKER};

/// Lowercase answer spellings, grouped by label.
const AT_RISK_TOKENS: &[&str] = &["yes", "y", "是", "有", "at risk", "at_risk"];
const NO_RISK_TOKENS: &[&str] = &["no", "n", "否", "没有", "not at risk", "no_risk"];

const MARKER_PREFIX: &str = "[[ ##";
const EXCERPT_CHARS: usize = 80;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("cannot parse completion for {subject_id:?}: {excerpt:?}")]
    Unparseable { subject_id: String, excerpt: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseStatus {
    Clean,
    Salvaged,
    FallbackApplied,
}

/// What to do with completions that yield no usable label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    #[default]
    AtRisk,
    NoRisk,
    Error,
}

impl FromStr for Fallback {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "at_risk" => Ok(Self::AtRisk),
            "no_risk" => Ok(Self::NoRisk),
            "error" => Ok(Self::Error),
            other => Err(format!("unknown fallback {other:?} (at_risk, no_risk, error)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ExchangeMeta {
    pub latency_ms: u64,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub subject_id: String,
    pub predicted: Label,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rationale: Option<String>,
    pub raw_completion: String,
    pub parse_status: ParseStatus,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub exchange: Option<ExchangeMeta>,
}

impl PredictionRecord {
    /// Prediction that did not come from a model completion.
    pub fn direct(subject_id: impl Into<String>, predicted: Label) -> Self {
        Self {
            subject_id: subject_id.into(),
            predicted,
            rationale: None,
            raw_completion: String::new(),
            parse_status: ParseStatus::Clean,
            exchange: None,
        }
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn all_tokens() -> impl Iterator<Item = (&'static str, Label)> {
    AT_RISK_TOKENS
        .iter()
        .map(|t| (*t, Label::AtRisk))
        .chain(NO_RISK_TOKENS.iter().map(|t| (*t, Label::NoRisk)))
}

/// Longest table entry that `s` starts with, honouring a word boundary
/// after it. With `strict`, every entry needs the boundary; otherwise
/// entries without ASCII letters (the CJK ones) may run into following text.
fn match_prefix(s: &str, strict: bool) -> Option<(usize, Label)> {
    let mut best: Option<(usize, Label)> = None;
    for (token, label) in all_tokens() {
        if !s.starts_with(token) {
            continue;
        }
        let needs_boundary = strict || token.chars().any(|c| c.is_ascii_alphabetic());
        let bounded = s[token.len()..].chars().next().is_none_or(|c| !is_word_char(c));
        if needs_boundary && !bounded {
            continue;
        }
        if best.is_none_or(|(len, _)| token.len() > len) {
            best = Some((token.len(), label));
        }
    }
    best
}

/// Normalizes a short answer such as `"Yes."`, `"**no**"` or `"没有风险"`.
pub fn normalize_answer(answer: &str) -> Option<Label> {
    let lowered = answer.trim().to_lowercase();
    let stripped = lowered.trim_matches(|c: char| !c.is_alphanumeric());
    match_prefix(stripped, false).map(|(_, label)| label)
}

/// Every table token appearing as a standalone word, scanning left to right
/// without overlaps.
fn scan_tokens(text: &str) -> Vec<Label> {
    let lowered = text.to_lowercase();
    let mut found = Vec::new();
    let mut prev: Option<char> = None;
    let mut idx = 0;
    while idx < lowered.len() {
        let rest = &lowered[idx..];
        let at_boundary = prev.is_none_or(|c| !is_word_char(c));
        if at_boundary {
            if let Some((len, label)) = match_prefix(rest, true) {
                found.push(label);
                prev = lowered[..idx + len].chars().next_back();
                idx += len;
                continue;
            }
        }
        let c = rest.chars().next().expect("non-empty");
        prev = Some(c);
        idx += c.len_utf8();
    }
    found
}

/// Text following `marker` up to the next field marker or the end.
fn field_after<'a>(text: &'a str, marker: &str) -> Option<&'a str> {
    let start = text.find(marker)? + marker.len();
    let body = &text[start..];
    let end = body.find(MARKER_PREFIX).unwrap_or(body.len());
    Some(body[..end].trim())
}

fn excerpt(text: &str) -> String {
    text.chars().take(EXCERPT_CHARS).collect()
}

/// Parses a completion: answer field first, then a whole-text scan that
/// must find exactly one distinct label, then the fallback.
pub fn parse_completion(
    subject_id: &str,
    text: &str,
    mode: Mode,
    fallback: Fallback,
) -> Result<PredictionRecord, ParseError> {
    let rationale = if mode.is_cot() {
        field_after(text, REASONING_MARKER)
            .map(str::to_string)
            .filter(|r| !r.is_empty())
    } else {
        None
    };
    let record = |predicted, parse_status| PredictionRecord {
        subject_id: subject_id.to_string(),
        predicted,
        rationale: rationale.clone(),
        raw_completion: text.to_string(),
        parse_status,
        exchange: None,
    };

    if let Some(label) = field_after(text, ANSWER_MARKER).and_then(normalize_answer) {
        return Ok(record(label, ParseStatus::Clean));
    }

    let mut labels = scan_tokens(text);
    labels.sort();
    labels.dedup();
    if let [label] = labels[..] {
        return Ok(record(label, ParseStatus::Salvaged));
    }

    match fallback {
        Fallback::AtRisk => Ok(record(Label::AtRisk, ParseStatus::FallbackApplied)),
        Fallback::NoRisk => Ok(record(Label::NoRisk, ParseStatus::FallbackApplied)),
        Fallback::Error => Err(ParseError::Unparseable {
            subject_id: subject_id.to_string(),
            excerpt: excerpt(text),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> PredictionRecord {
        parse_completion("s", text, Mode::FewShotCot, Fallback::Error).unwrap()
    }

    #[test]
    fn canonical_answer() {
        let r = parse_completion("s", "[[ ## answer ## ]]\nyes", Mode::FewShot, Fallback::Error).unwrap();
        assert_eq!((r.predicted, r.parse_status), (Label::AtRisk, ParseStatus::Clean));
    }

    #[test]
    fn cot_rationale_captured() {
        let r =
            parse("[[ ## reasoning ## ]]\nThe teenager describes persistent hopelessness.\n[[ ## answer ## ]]\nyes");
        assert_eq!(r.predicted, Label::AtRisk);
        assert_eq!(
            r.rationale.as_deref(),
            Some("The teenager describes persistent hopelessness.")
        );
    }

    #[test]
    fn rationale_only_in_cot_mode() {
        let text = "[[ ## reasoning ## ]]\nx\n[[ ## answer ## ]]\nno";
        let r = parse_completion("s", text, Mode::FewShot, Fallback::Error).unwrap();
        assert_eq!(r.rationale, None);
        assert_eq!(r.predicted, Label::NoRisk);
    }

    #[test]
    fn fallback_applied() {
        let r = parse_completion("s", "The answer is unclear.", Mode::FewShot, Fallback::AtRisk).unwrap();
        assert_eq!(
            (r.predicted, r.parse_status),
            (Label::AtRisk, ParseStatus::FallbackApplied)
        );
    }

    #[test]
    fn ambiguous_without_marker() {
        let err = parse_completion("s", "yes … no", Mode::FewShot, Fallback::Error).unwrap_err();
        assert!(matches!(err, ParseError::Unparseable { .. }));
    }

    #[test]
    fn normalization_variants() {
        for (text, label) in [
            ("Yes.", Label::AtRisk),
            ("  **NO**  ", Label::NoRisk),
            ("Not at risk", Label::NoRisk),
            ("at_risk", Label::AtRisk),
            ("no_risk", Label::NoRisk),
            ("是的", Label::AtRisk),
            ("有风险", Label::AtRisk),
            ("没有", Label::NoRisk),
            ("否。", Label::NoRisk),
            ("Y", Label::AtRisk),
            ("Yes, the patient shows risk", Label::AtRisk),
        ] {
            assert_eq!(normalize_answer(text), Some(label), "{text:?}");
        }
        for text in ["nope", "maybe", "", "yesterday"] {
            assert_eq!(normalize_answer(text), None, "{text:?}");
        }
    }

    #[test]
    fn salvage_single_label() {
        let r = parse_completion("s", "I would say: Yes.", Mode::FewShot, Fallback::Error).unwrap();
        assert_eq!((r.predicted, r.parse_status), (Label::AtRisk, ParseStatus::Salvaged));
        let r = parse_completion("s", "The teenager is not at risk.", Mode::FewShot, Fallback::Error).unwrap();
        assert_eq!((r.predicted, r.parse_status), (Label::NoRisk, ParseStatus::Salvaged));
    }

    #[test]
    fn unusable_answer_block_falls_through_to_salvage() {
        let r = parse_completion(
            "s",
            "[[ ## answer ## ]]\nuncertain\nfinal: no",
            Mode::FewShot,
            Fallback::Error,
        )
        .unwrap();
        assert_eq!((r.predicted, r.parse_status), (Label::NoRisk, ParseStatus::Salvaged));
    }

    #[test]
    fn answer_block_stops_at_next_marker() {
        let r = parse("[[ ## answer ## ]]\nno\n\n[[ ## completed ## ]]");
        assert_eq!((r.predicted, r.parse_status), (Label::NoRisk, ParseStatus::Clean));
    }
}
