use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError, Split, SubjectRecord};

/// Stratification variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratum {
    Label,
    Sex,
    AgeBand,
}

impl std::str::FromStr for Stratum {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "label" => Ok(Self::Label),
            "sex" => Ok(Self::Sex),
            "age_band" => Ok(Self::AgeBand),
            other => Err(format!("unknown stratum {other:?} (label, sex, age_band)")),
        }
    }
}

/// Age bands 10–12, 13–15, 16–18. Ages outside 10–18 join the nearest band.
pub fn age_band(age: u32) -> &'static str {
    match age {
        0..=12 => "10-12",
        13..=15 => "13-15",
        _ => "16-18",
    }
}

impl Stratum {
    fn level(self, s: &SubjectRecord) -> String {
        match self {
            Stratum::Label => s.label.token().to_string(),
            Stratum::Sex => format!("{:?}", s.sex),
            Stratum::AgeBand => age_band(s.age).to_string(),
        }
    }
}

/// Train/dev/test proportions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fractions([f64; 3]);

impl Fractions {
    pub fn new(train: f64, dev: f64, test: f64) -> Result<Self, CorpusError> {
        let f = [train, dev, test];
        if f.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(CorpusError::InvalidFractions(format!(
                "each fraction must be positive and finite, got {f:?}"
            )));
        }
        let sum: f64 = f.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CorpusError::InvalidFractions(format!("fractions sum to {sum}, not 1")));
        }
        Ok(Self(f))
    }

    pub fn as_array(&self) -> [f64; 3] {
        self.0
    }
}

/// Splits `n` items by largest remainder; leftover units go to the largest
/// fractional parts, ties to the earlier split.
fn largest_remainder(n: usize, fractions: &[f64; 3]) -> [usize; 3] {
    let mut counts = [0usize; 3];
    let mut remainders = [0f64; 3];
    for i in 0..3 {
        let mut quota = fractions[i] * n as f64;
        let nearest = quota.round();
        if (quota - nearest).abs() < 1e-9 {
            quota = nearest;
        }
        counts[i] = quota.floor() as usize;
        remainders[i] = quota - quota.floor();
    }
    let assigned: usize = counts.iter().sum();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| remainders[b].total_cmp(&remainders[a]).then(a.cmp(&b)));
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Assigns every subject to train/dev/test so that each stratum cell is
/// split in the requested proportions. Deterministic in `seed`.
pub fn stratified_split(
    corpus: &Corpus,
    fractions: Fractions,
    strata: &[Stratum],
    seed: u64,
) -> Result<Corpus, CorpusError> {
    if corpus.is_empty() {
        return Err(CorpusError::EmptyStratum("<whole corpus>".into()));
    }
    let strata: Vec<Stratum> = strata.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();

    let mut cells: BTreeMap<Vec<String>, Vec<usize>> = BTreeMap::new();
    for (i, s) in corpus.subjects().iter().enumerate() {
        let key = strata.iter().map(|st| st.level(s)).collect();
        cells.entry(key).or_default().push(i);
    }

    // Every combination of observed levels must be populated.
    let observed: Vec<BTreeSet<String>> = strata
        .iter()
        .map(|st| corpus.subjects().iter().map(|s| st.level(s)).collect())
        .collect();
    let expected_cells: usize = observed.iter().map(BTreeSet::len).product();
    if cells.len() < expected_cells {
        let mut combos: Vec<Vec<String>> = vec![Vec::new()];
        for levels in &observed {
            combos = combos
                .into_iter()
                .flat_map(|prefix| {
                    levels.iter().map(move |l| {
                        let mut k = prefix.clone();
                        k.push(l.clone());
                        k
                    })
                })
                .collect();
        }
        let missing = combos
            .into_iter()
            .find(|k| !cells.contains_key(k))
            .expect("some cell missing");
        let descriptor = strata
            .iter()
            .zip(&missing)
            .map(|(st, l)| format!("{st:?}={l}"))
            .collect::<Vec<_>>()
            .join(",");
        return Err(CorpusError::EmptyStratum(descriptor));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![Split::Unassigned; corpus.len()];
    let frac = fractions.as_array();
    for members in cells.values() {
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        let counts = largest_remainder(shuffled.len(), &frac);
        let mut iter = shuffled.into_iter();
        for (split, &count) in Split::ASSIGNED.iter().zip(&counts) {
            for idx in iter.by_ref().take(count) {
                assignment[idx] = *split;
            }
        }
    }
    Ok(corpus.with_splits(&assignment))
}
