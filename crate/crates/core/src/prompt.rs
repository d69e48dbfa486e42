//! Prompt program: a fixed `context`/`question` signature, seeded demo
//! selection from the training split and deterministic rendering into a
//! chat message sequence.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Label, Split, SubjectRecord};

pub const CONTEXT_MARKER: &str = "[[ ## context ## ]]";
pub const QUESTION_MARKER: &str = "[[ ## question ## ]]";
pub const REASONING_MARKER: &str = "[[ ## reasoning ## ]]";
pub const ANSWER_MARKER: &str = "[[ ## answer ## ]]";
pub const COMPLETED_MARKER: &str = "[[ ## completed ## ]]";

pub const QUESTION: &str = "Is this patient at risk of suicide?";

/// Bumped whenever the system text below changes.
pub const SYSTEM_PROMPT_VERSION: &str = "v1";

const CONTEXT_HEAD: &str = "A Chinese teenager was given 2 tasks.\n\
1. They had to answer to the\n\
following question\n\
'Have you ever experienced moments of\n\
extreme emotional distress?\n\
How do you manage such feelings?'\n\
Their answer: ";

const CONTEXT_MIDDLE: &str = "\n\
2. They were shown an image of a face\n\
displaying negative emotions, and asked\n\
to describe it.\n\
Their answer: ";

const OBJECTIVE: &str =
    "Decide from the transcripts of a teenager's spoken answers whether they are currently at risk of suicide.";

const COT_INSTRUCTION: &str = "Think step by step. First write your reasoning about the transcripts in the \
`reasoning` field, then give the final answer in the `answer` field.";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("need {needed} training examples{}, only {available} available", .label.map(|l| format!(" labelled {l}")).unwrap_or_default())]
    InsufficientTrainExamples {
        needed: usize,
        available: usize,
        label: Option<Label>,
    },
    #[error("target subject {0:?} is also a demo")]
    TargetInDemos(String),
    #[error("demo subject {0:?} is not in the training split")]
    DemoNotTrain(String),
    #[error("chain-of-thought demo {0:?} has no rationale")]
    MissingRationale(String),
    #[error("zero-shot prompt given {0} demos")]
    ModeMismatch(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    ZeroShot,
    FewShot,
    FewShotCot,
}

impl Mode {
    pub fn is_cot(self) -> bool {
        self == Mode::FewShotCot
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::ZeroShot => "zero_shot",
            Mode::FewShot => "few_shot",
            Mode::FewShotCot => "few_shot_cot",
        })
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "zero_shot" => Ok(Mode::ZeroShot),
            "few_shot" => Ok(Mode::FewShot),
            "few_shot_cot" | "cot" => Ok(Mode::FewShotCot),
            other => Err(format!("unknown mode {other:?} (zero_shot, few_shot, few_shot_cot)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    fn new(role: Role, content: String) -> Self {
        Self { role, content }
    }
}

/// One labelled training example shown to the model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Demo {
    pub subject: SubjectRecord,
    pub answer_text: &'static str,
    pub rationale_text: Option<String>,
}

impl Demo {
    pub fn from_subject(subject: &SubjectRecord) -> Result<Self, PromptError> {
        if subject.split != Split::Train {
            return Err(PromptError::DemoNotTrain(subject.subject_id.clone()));
        }
        Ok(Self {
            answer_text: answer_token(subject.label),
            rationale_text: subject.rationale.clone(),
            subject: subject.clone(),
        })
    }
}

/// Canonical answer token for a label.
pub fn answer_token(label: Label) -> &'static str {
    match label {
        Label::AtRisk => "yes",
        Label::NoRisk => "no",
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub messages: Vec<Message>,
    pub demo_ids: Vec<String>,
    pub mode: Mode,
    pub k: usize,
    pub seed: u64,
}

impl PromptBundle {
    /// The target subject's user message.
    pub fn final_user_message(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map_or("", |m| m.content.as_str())
    }

    /// Total characters across all messages.
    pub fn char_len(&self) -> usize {
        self.messages.iter().map(|m| m.content.chars().count()).sum()
    }

    /// Plain-text dump used for golden files and inspection.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for m in &self.messages {
            out.push_str(&format!("--- {} ---\n", m.role));
            out.push_str(&m.content);
            out.push('\n');
        }
        out
    }
}

/// Draws `k` distinct training subjects. Balanced sampling takes ⌈k/2⌉
/// at-risk and ⌊k/2⌋ no-risk subjects and interleaves them, at-risk first.
pub fn sample_demos(corpus: &Corpus, k: usize, seed: u64, balanced: bool) -> Result<Vec<Demo>, PromptError> {
    if k == 0 {
        return Ok(Vec::new());
    }
    let train: Vec<&SubjectRecord> = corpus.in_split(Split::Train).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked: Vec<&SubjectRecord> = if balanced {
        let mut at: Vec<_> = train.iter().copied().filter(|s| s.label == Label::AtRisk).collect();
        let mut no: Vec<_> = train.iter().copied().filter(|s| s.label == Label::NoRisk).collect();
        let (n_at, n_no) = (k.div_ceil(2), k / 2);
        if at.len() < n_at {
            return Err(PromptError::InsufficientTrainExamples {
                needed: n_at,
                available: at.len(),
                label: Some(Label::AtRisk),
            });
        }
        if no.len() < n_no {
            return Err(PromptError::InsufficientTrainExamples {
                needed: n_no,
                available: no.len(),
                label: Some(Label::NoRisk),
            });
        }
        let (at, _) = at.partial_shuffle(&mut rng, n_at);
        let (no, _) = no.partial_shuffle(&mut rng, n_no);
        let mut out = Vec::with_capacity(k);
        for i in 0..n_at {
            out.push(at[i]);
            if i < n_no {
                out.push(no[i]);
            }
        }
        out
    } else {
        if train.len() < k {
            return Err(PromptError::InsufficientTrainExamples {
                needed: k,
                available: train.len(),
                label: None,
            });
        }
        let mut pool = train;
        let (chosen, _) = pool.partial_shuffle(&mut rng, k);
        chosen.to_vec()
    };
    picked.into_iter().map(Demo::from_subject).collect()
}

/// User-message body for one subject.
pub fn render_user(subject: &SubjectRecord) -> String {
    let mut s = String::with_capacity(
        CONTEXT_HEAD.len()
            + CONTEXT_MIDDLE.len()
            + subject.transcript_task1.len()
            + subject.transcript_task2.len()
            + 96,
    );
    s.push_str(CONTEXT_MARKER);
    s.push('\n');
    s.push_str(CONTEXT_HEAD);
    s.push_str(&subject.transcript_task1);
    s.push_str(CONTEXT_MIDDLE);
    s.push_str(&subject.transcript_task2);
    s.push_str("\n\n");
    s.push_str(QUESTION_MARKER);
    s.push('\n');
    s.push_str(QUESTION);
    s
}

/// Assistant turn for a demo: optional reasoning block, then the answer.
pub fn render_assistant(label: Label, rationale: Option<&str>) -> String {
    let mut s = String::new();
    if let Some(r) = rationale {
        s.push_str(REASONING_MARKER);
        s.push('\n');
        s.push_str(r);
        s.push_str("\n\n");
    }
    s.push_str(ANSWER_MARKER);
    s.push('\n');
    s.push_str(answer_token(label));
    s.push_str("\n\n");
    s.push_str(COMPLETED_MARKER);
    s
}

pub fn render_system(mode: Mode) -> String {
    let cot = mode.is_cot();
    let mut s = String::from(
        "Your input fields are:\n\
1. `context` (str): transcripts of a teenager's answers to two spoken tasks\n\
2. `question` (str)\n\
Your output fields are:\n",
    );
    if cot {
        s.push_str("1. `reasoning` (str)\n2. `answer` (str): \"yes\" or \"no\"\n");
    } else {
        s.push_str("1. `answer` (str): \"yes\" or \"no\"\n");
    }
    s.push_str("All interactions will be structured in the following way, with the appropriate values filled in.\n\n");
    s.push_str(&format!(
        "{CONTEXT_MARKER}\n{{context}}\n\n{QUESTION_MARKER}\n{{question}}\n\n"
    ));
    if cot {
        s.push_str(&format!("{REASONING_MARKER}\n{{reasoning}}\n\n"));
    }
    s.push_str(&format!("{ANSWER_MARKER}\n{{answer}}\n\n{COMPLETED_MARKER}\n"));
    s.push_str("In adhering to this structure, your objective is: ");
    s.push_str(OBJECTIVE);
    s.push_str("\nAnswer with exactly \"yes\" or \"no\".");
    if cot {
        s.push('\n');
        s.push_str(COT_INSTRUCTION);
    }
    s
}

/// Renders the full message sequence. With no demos the bundle is zero-shot
/// whatever `mode` was requested.
pub fn render_prompt(
    subject: &SubjectRecord,
    demos: &[Demo],
    mode: Mode,
    seed: u64,
) -> Result<PromptBundle, PromptError> {
    if mode == Mode::ZeroShot && !demos.is_empty() {
        return Err(PromptError::ModeMismatch(demos.len()));
    }
    if demos.iter().any(|d| d.subject.subject_id == subject.subject_id) {
        return Err(PromptError::TargetInDemos(subject.subject_id.clone()));
    }
    let mode = if demos.is_empty() { Mode::ZeroShot } else { mode };
    let mut messages = Vec::with_capacity(2 + 2 * demos.len());
    messages.push(Message::new(Role::System, render_system(mode)));
    for demo in demos {
        messages.push(Message::new(Role::User, render_user(&demo.subject)));
        let rationale = if mode.is_cot() {
            Some(
                demo.rationale_text
                    .as_deref()
                    .ok_or_else(|| PromptError::MissingRationale(demo.subject.subject_id.clone()))?,
            )
        } else {
            None
        };
        messages.push(Message::new(
            Role::Assistant,
            render_assistant(demo.subject.label, rationale),
        ));
    }
    messages.push(Message::new(Role::User, render_user(subject)));
    Ok(PromptBundle {
        messages,
        demo_ids: demos.iter().map(|d| d.subject.subject_id.clone()).collect(),
        mode,
        k: demos.len(),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::synthetic::{generate, SyntheticConfig};
    use crate::corpus::Sex;

    fn blank(id: &str) -> SubjectRecord {
        SubjectRecord {
            subject_id: id.into(),
            age: 14,
            sex: Sex::F,
            transcript_task1: String::new(),
            transcript_task2: String::new(),
            label: Label::NoRisk,
            split: Split::Dev,
            rationale: None,
        }
    }

    fn train_corpus(n: usize) -> Corpus {
        let c = generate(SyntheticConfig::small(n, 1));
        let splits = vec![Split::Train; c.len()];
        c.with_splits(&splits)
    }

    #[test]
    fn zero_shot_structure() {
        let b = render_prompt(&blank("x"), &[], Mode::ZeroShot, 0).unwrap();
        assert_eq!(b.messages.len(), 2);
        assert_eq!(b.messages[0].role, Role::System);
        assert!(b.messages[1]
            .content
            .ends_with("[[ ## question ## ]]\nIs this patient at risk of suicide?"));
        assert!(b.messages[1].content.contains("Their answer: \n2. They were shown"));
        assert!(b.demo_ids.is_empty());
        assert_eq!(b.k, 0);
    }

    #[test]
    fn one_shot_order() {
        let c = train_corpus(4);
        let demos = sample_demos(&c, 1, 3, false).unwrap();
        let b = render_prompt(&blank("x"), &demos, Mode::FewShot, 3).unwrap();
        let roles: Vec<Role> = b.messages.iter().map(|m| m.role).collect();
        assert_eq!(roles, [Role::System, Role::User, Role::Assistant, Role::User]);
        assert!(b.messages[2].content.starts_with(ANSWER_MARKER));
    }

    #[test]
    fn four_shot_cot() {
        let c = train_corpus(10);
        let demos = sample_demos(&c, 4, 3, false).unwrap();
        let b = render_prompt(&blank("x"), &demos, Mode::FewShotCot, 3).unwrap();
        assert_eq!(b.messages.len(), 10);
        for m in b.messages.iter().filter(|m| m.role == Role::Assistant) {
            let r = m.content.find(REASONING_MARKER).unwrap();
            let a = m.content.find(ANSWER_MARKER).unwrap();
            assert!(r < a);
        }
        assert!(b.messages[0].content.contains(COT_INSTRUCTION));
    }

    #[test]
    fn target_leakage_rejected() {
        let c = train_corpus(4);
        let demos = sample_demos(&c, 2, 0, false).unwrap();
        let target = demos[0].subject.clone();
        assert_eq!(
            render_prompt(&target, &demos, Mode::FewShot, 0).unwrap_err(),
            PromptError::TargetInDemos(target.subject_id.clone())
        );
    }

    #[test]
    fn sampling_is_deterministic_and_balanced() {
        let c = train_corpus(40);
        let ids = |d: &[Demo]| d.iter().map(|d| d.subject.subject_id.clone()).collect::<Vec<_>>();
        let a = sample_demos(&c, 4, 11, false).unwrap();
        let b = sample_demos(&c, 4, 11, false).unwrap();
        assert_eq!(ids(&a), ids(&b));
        let bal = sample_demos(&c, 5, 2, true).unwrap();
        let labels: Vec<Label> = bal.iter().map(|d| d.subject.label).collect();
        assert_eq!(
            labels,
            [
                Label::AtRisk,
                Label::NoRisk,
                Label::AtRisk,
                Label::NoRisk,
                Label::AtRisk
            ]
        );
    }

    #[test]
    fn insufficient_examples() {
        let c = train_corpus(3);
        assert!(matches!(
            sample_demos(&c, 4, 0, false),
            Err(PromptError::InsufficientTrainExamples {
                needed: 4,
                available: 3,
                ..
            })
        ));
    }

    #[test]
    fn transcripts_with_placeholder_text_are_literal() {
        let mut s = blank("x");
        s.transcript_task1 = "{second speech transcript}".into();
        let b = render_prompt(&s, &[], Mode::ZeroShot, 0).unwrap();
        assert!(b.messages[1]
            .content
            .contains("Their answer: {second speech transcript}\n2."));
    }

    #[test]
    fn cot_demo_without_rationale() {
        let c = train_corpus(4);
        let mut demos = sample_demos(&c, 1, 0, false).unwrap();
        demos[0].rationale_text = None;
        assert!(matches!(
            render_prompt(&blank("x"), &demos, Mode::FewShotCot, 0),
            Err(PromptError::MissingRationale(_))
        ));
    }
}
