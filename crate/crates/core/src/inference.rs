//! Reading letter answers and turning them into predicted event pairs.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Document, MentionId};
use crate::mcq::McqSample;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionStatus {
    Ok,
    /// Nothing letter-like in the output (or the request failed).
    FallbackNone,
    /// Only letters outside this sample's option range were found.
    UnknownLetters,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub sample_id: String,
    pub raw: String,
    pub letters: BTreeSet<char>,
    pub status: PredictionStatus,
}

impl PredictionRecord {
    pub fn fallback(sample: &McqSample, raw: impl Into<String>) -> Self {
        PredictionRecord {
            sample_id: sample.sample_id.clone(),
            raw: raw.into(),
            letters: BTreeSet::from([sample.none_letter()]),
            status: PredictionStatus::FallbackNone,
        }
    }
}

/// Extracts chosen option letters from free-form model output.
///
/// Tokens are maximal alphanumeric runs. An all-uppercase token whose every
/// character is a valid option letter contributes those letters, so
/// `"A, C"`, `"AC"` and `"The answer is C"` all parse. When no such token
/// exists, single lowercase letters are case-folded and tried instead. Event
/// letters win over "None of the above" when both appear. With nothing
/// usable the answer falls back to "None of the above".
pub fn parse_answer(raw: &str, sample: &McqSample) -> PredictionRecord {
    let valid: BTreeSet<char> = sample.letters().collect();
    let none = sample.none_letter();
    let tokens: Vec<&str> = raw.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).collect();

    let mut letters = BTreeSet::new();
    let mut out_of_range = false;
    for t in &tokens {
        if !t.chars().all(|c| c.is_ascii_uppercase()) {
            continue;
        }
        if t.chars().all(|c| valid.contains(&c)) {
            letters.extend(t.chars());
        } else if t.len() == 1 {
            out_of_range = true;
        }
    }
    if letters.is_empty() {
        for t in &tokens {
            let mut chars = t.chars();
            if let (Some(c), None) = (chars.next(), chars.next()) {
                let upper = c.to_ascii_uppercase();
                if c.is_ascii_lowercase() && valid.contains(&upper) {
                    letters.insert(upper);
                }
            }
        }
    }
    if letters.len() > 1 {
        letters.remove(&none);
    }

    let status = if !letters.is_empty() {
        PredictionStatus::Ok
    } else if out_of_range {
        PredictionStatus::UnknownLetters
    } else {
        PredictionStatus::FallbackNone
    };
    if letters.is_empty() {
        letters.insert(none);
    }
    PredictionRecord { sample_id: sample.sample_id.clone(), raw: raw.to_owned(), letters, status }
}

/// An unordered mention pair; `a < b` lexicographically.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pair {
    pub doc_id: String,
    pub a: MentionId,
    pub b: MentionId,
}

impl Pair {
    /// `None` for a self-pair.
    pub fn new(doc_id: impl Into<String>, x: MentionId, y: MentionId) -> Option<Self> {
        match x.cmp(&y) {
            std::cmp::Ordering::Less => Some(Pair { doc_id: doc_id.into(), a: x, b: y }),
            std::cmp::Ordering::Greater => Some(Pair { doc_id: doc_id.into(), a: y, b: x }),
            std::cmp::Ordering::Equal => None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PairPredictionSet(pub BTreeSet<Pair>);

impl PairPredictionSet {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Pair> {
        self.0.iter()
    }
}

impl FromIterator<Pair> for PairPredictionSet {
    fn from_iter<I: IntoIterator<Item = Pair>>(iter: I) -> Self {
        PairPredictionSet(iter.into_iter().collect())
    }
}

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("prediction for unknown sample `{0}`")]
    UnknownSample(String),
    #[error("sample `{sample}` has no option {letter}")]
    UnknownLetter { sample: String, letter: char },
    #[error("document `{0}` is needed for coreference expansion but was not provided")]
    MissingDocument(String),
}

/// Unions the (observed, chosen mention) pairs of every record.
///
/// With `expand_with` set, each endpoint is replaced by its coreference
/// cluster and every cross-cluster pair is added.
pub fn aggregate(
    records: &[PredictionRecord],
    samples: &[McqSample],
    expand_with: Option<&[Document]>,
) -> Result<PairPredictionSet, InferenceError> {
    let by_id: HashMap<&str, &McqSample> = samples.iter().map(|s| (s.sample_id.as_str(), s)).collect();
    let docs: HashMap<&str, &Document> =
        expand_with.unwrap_or(&[]).iter().map(|d| (d.doc_id(), d)).collect();
    let mut pairs = BTreeSet::new();
    for r in records {
        let sample = by_id.get(r.sample_id.as_str()).ok_or_else(|| InferenceError::UnknownSample(r.sample_id.clone()))?;
        for &letter in &r.letters {
            let option = sample
                .option(letter)
                .ok_or(InferenceError::UnknownLetter { sample: r.sample_id.clone(), letter })?;
            let Some(chosen) = option.mention() else { continue };
            if expand_with.is_some() {
                let doc = docs.get(sample.doc_id.as_str()).ok_or_else(|| InferenceError::MissingDocument(sample.doc_id.clone()))?;
                let members = |m: &MentionId| -> Vec<MentionId> {
                    doc.cluster(m.as_str()).map_or_else(|| vec![m.clone()], |c| c.iter().cloned().collect())
                };
                for x in members(&sample.observed) {
                    for y in members(chosen) {
                        pairs.extend(Pair::new(sample.doc_id.as_str(), x.clone(), y));
                    }
                }
            } else {
                pairs.extend(Pair::new(sample.doc_id.as_str(), sample.observed.clone(), chosen.clone()));
            }
        }
    }
    Ok(PairPredictionSet(pairs))
}
