//! Synthetic stand-in corpora shaped like the real screening data.
//!
//! Transcripts are assembled from small phrase banks. At-risk subjects draw
//! mostly from a distress bank, so keyword-matching mock backends reach
//! accuracies well above chance without being perfect.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Corpus, Label, Sex, Split, SubjectRecord};

const DISTRESS_TASK1: &[&str] = &[
    "Sometimes I feel hopeless and I don't know who to talk to.",
    "I often feel like there is no way out, so I just stay in my room.",
    "When it gets bad I think everyone would be better off without me.",
    "I cry at night and I can't stop thinking about disappearing.",
    "Nothing really helps, I just wait for the feeling to pass.",
    "I hurt myself once when the pressure from school was too much.",
];

const COPING_TASK1: &[&str] = &[
    "When I feel upset I talk to my mom and it gets better.",
    "I go running or play basketball with my friends.",
    "I listen to music and write in my diary until I calm down.",
    "Usually I sleep and the next day I feel fine again.",
    "I tell my teacher, she always gives good advice.",
    "I have not really had moments like that, maybe when I lost a game.",
];

const DISTRESS_TASK2: &[&str] = &[
    "The face looks empty, like the person has given up on everything.",
    "She looks like me when I am alone, tired and very sad.",
    "He seems hopeless, like nobody would notice if he was gone.",
    "The eyes are dark and sad, maybe the person feels trapped.",
];

const COPING_TASK2: &[&str] = &[
    "The person looks angry, maybe someone took his phone.",
    "She looks sad, maybe she failed an exam but she will be okay.",
    "He is frowning, he might be worried about something small.",
    "The face is upset, probably an argument with a friend.",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub n: usize,
    pub at_risk: usize,
    pub female: usize,
    /// Fraction of subjects whose transcripts come from the other label's bank.
    pub label_noise: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    /// 600 subjects, 420 F / 180 M, 300 / 300 labels.
    pub fn full_scale(seed: u64) -> Self {
        Self {
            n: 600,
            at_risk: 300,
            female: 420,
            label_noise: 0.15,
            seed,
        }
    }

    /// Small balanced corpus for quick runs.
    pub fn small(n: usize, seed: u64) -> Self {
        Self {
            n,
            at_risk: n / 2,
            female: (n * 7) / 10,
            label_noise: 0.15,
            seed,
        }
    }
}

fn rationale(label: Label, task1: &str, task2: &str) -> String {
    match label {
        Label::AtRisk => format!(
            "The teenager's first answer (\"{task1}\") describes distress without an effective coping strategy, \
and the image description (\"{task2}\") projects hopelessness onto the face. \
Together these suggest current risk."
        ),
        Label::NoRisk => format!(
            "The teenager names a concrete way of coping (\"{task1}\"), \
and the image description (\"{task2}\") stays at the level of an ordinary negative emotion. \
Nothing points to current risk."
        ),
    }
}

pub fn generate(config: SyntheticConfig) -> Corpus {
    assert!(config.at_risk <= config.n && config.female <= config.n);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut labels: Vec<Label> = (0..config.n)
        .map(|i| {
            if i < config.at_risk {
                Label::AtRisk
            } else {
                Label::NoRisk
            }
        })
        .collect();
    labels.shuffle(&mut rng);
    let mut sexes: Vec<Sex> = (0..config.n)
        .map(|i| if i < config.female { Sex::F } else { Sex::M })
        .collect();
    sexes.shuffle(&mut rng);

    let width = config.n.to_string().len().max(3);
    let subjects = labels
        .into_iter()
        .zip(sexes)
        .enumerate()
        .map(|(i, (label, sex))| {
            let apparent = if rng.gen_bool(config.label_noise.clamp(0.0, 1.0)) {
                label.flip()
            } else {
                label
            };
            let (bank1, bank2) = match apparent {
                Label::AtRisk => (DISTRESS_TASK1, DISTRESS_TASK2),
                Label::NoRisk => (COPING_TASK1, COPING_TASK2),
            };
            let task1 = bank1.choose(&mut rng).expect("bank").to_string();
            let task2 = bank2.choose(&mut rng).expect("bank").to_string();
            let age = rng.gen_range(10..=18);
            SubjectRecord {
                subject_id: format!("subject-{:0width$}", i + 1),
                age,
                sex,
                rationale: Some(rationale(label, &task1, &task2)),
                transcript_task1: task1,
                transcript_task2: task2,
                label,
                split: Split::Unassigned,
            }
        })
        .collect();
    Corpus::new(subjects, format!("synthetic(n={}, seed={})", config.n, config.seed)).expect("generated ids are unique")
}

/// Keywords that appear only in the distress phrase banks.
pub const DISTRESS_KEYWORDS: &[&str] = &[
    "hopeless",
    "no way out",
    "better off without me",
    "disappearing",
    "hurt myself",
    "given up",
    "trapped",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_scale_counts() {
        let c = generate(SyntheticConfig::full_scale(3));
        assert_eq!(c.len(), 600);
        assert_eq!(c.sex_count(None, Sex::F), 420);
        assert_eq!(c.sex_count(None, Sex::M), 180);
        assert_eq!(c.label_count(None, Label::AtRisk), 300);
        assert_eq!(c.label_count(None, Label::NoRisk), 300);
    }

    #[test]
    fn deterministic() {
        assert_eq!(
            generate(SyntheticConfig::small(12, 5)),
            generate(SyntheticConfig::small(12, 5))
        );
    }
}
