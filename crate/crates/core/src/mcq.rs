//! Multiple-choice question construction.
//!
//! Each sample interrogates one observed event. Only mentions after the
//! observed event are candidates; relations with earlier mentions are asked
//! for when those earlier mentions are observed. The context is clipped from
//! the observed event's sentence to the sentence of the last option event.
//!
//! Training samples carry every forward related event (one per coreference
//! cluster) plus seeded distractors. Test samples chunk the forward
//! candidates into option sets of `num_options - 1` events. Both end with a
//! "None of the above" option.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{related_events, CorpusError, Document, MentionId};
use crate::seeds::substream;

pub const NONE_OF_THE_ABOVE: &str = "None of the above";

/// Letters run from `A` to `Z`, so a question holds at most 26 options.
pub const MAX_OPTIONS: usize = 26;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OptionPayload {
    Mention(MentionId),
    NoneOfAbove,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "OptionWire", into = "OptionWire")]
pub struct OptionItem {
    pub letter: char,
    pub payload: OptionPayload,
    pub surface: String,
}

impl OptionItem {
    pub fn mention(&self) -> Option<&MentionId> {
        match &self.payload {
            OptionPayload::Mention(m) => Some(m),
            OptionPayload::NoneOfAbove => None,
        }
    }

    pub fn is_none_of_above(&self) -> bool {
        self.payload == OptionPayload::NoneOfAbove
    }
}

#[derive(Serialize, Deserialize)]
struct OptionWire {
    letter: char,
    mention_id: Option<MentionId>,
    surface: String,
}

impl From<OptionWire> for OptionItem {
    fn from(w: OptionWire) -> Self {
        OptionItem {
            letter: w.letter,
            payload: w.mention_id.map_or(OptionPayload::NoneOfAbove, OptionPayload::Mention),
            surface: w.surface,
        }
    }
}

impl From<OptionItem> for OptionWire {
    fn from(o: OptionItem) -> Self {
        OptionWire {
            letter: o.letter,
            mention_id: o.mention().cloned(),
            surface: o.surface,
        }
    }
}

/// The clipped text: sentences `first_sentence..=last_sentence` joined by
/// single spaces.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClippedContext {
    pub first_sentence: usize,
    pub last_sentence: usize,
    pub text: String,
}

/// Identifies a clipped span independently of the question asked about it.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpanKey {
    pub doc_id: String,
    pub first_sentence: usize,
    pub last_sentence: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct McqSample {
    #[serde(rename = "id")]
    pub sample_id: String,
    pub doc_id: String,
    pub mode: Mode,
    pub observed: MentionId,
    pub question: String,
    pub context: ClippedContext,
    pub options: Vec<OptionItem>,
    #[serde(rename = "gold")]
    pub gold_letters: BTreeSet<char>,
}

impl McqSample {
    pub fn none_letter(&self) -> char {
        self.options.last().map(|o| o.letter).unwrap_or('A')
    }

    pub fn option(&self, letter: char) -> Option<&OptionItem> {
        self.options.iter().find(|o| o.letter == letter)
    }

    pub fn letters(&self) -> impl Iterator<Item = char> + '_ {
        self.options.iter().map(|o| o.letter)
    }

    /// Event options, i.e. everything but the trailing "None of the above".
    pub fn event_options(&self) -> impl Iterator<Item = (&OptionItem, &MentionId)> + '_ {
        self.options.iter().filter_map(|o| o.mention().map(|m| (o, m)))
    }

    pub fn gold_is_none(&self) -> bool {
        self.gold_letters.len() == 1 && self.gold_letters.contains(&self.none_letter())
    }

    /// Gold letters concatenated in alphabetical order, e.g. `"AC"`.
    pub fn gold_string(&self) -> String {
        self.gold_letters.iter().collect()
    }

    pub fn span(&self) -> SpanKey {
        SpanKey {
            doc_id: self.doc_id.clone(),
            first_sentence: self.context.first_sentence,
            last_sentence: self.context.last_sentence,
        }
    }

    /// Checks the structural invariants every sample must satisfy.
    pub fn check_invariants(&self, num_options: usize) -> Result<(), String> {
        if self.options.is_empty() {
            return Err("no options".into());
        }
        for (i, o) in self.options.iter().enumerate() {
            let expected = (b'A' + i as u8) as char;
            if o.letter != expected {
                return Err(format!("option {i} has letter {} instead of {expected}", o.letter));
            }
        }
        let nones = self.options.iter().filter(|o| o.is_none_of_above()).count();
        if nones != 1 || !self.options.last().unwrap().is_none_of_above() {
            return Err("exactly one None-of-the-above option, in last place, is required".into());
        }
        if self.options.last().unwrap().surface != NONE_OF_THE_ABOVE {
            return Err("None-of-the-above surface text changed".into());
        }
        if self.gold_letters.is_empty() {
            return Err("empty gold".into());
        }
        if let Some(l) = self.gold_letters.iter().find(|l| self.option(**l).is_none()) {
            return Err(format!("gold letter {l} is not an option"));
        }
        if self.gold_letters.contains(&self.none_letter()) && self.gold_letters.len() > 1 {
            return Err("gold mixes None of the above with event letters".into());
        }
        if self.mode == Mode::Test && self.options.len() > num_options {
            return Err(format!("{} options exceed |D| = {num_options}", self.options.len()));
        }
        let surfaces: HashSet<&str> = self.options.iter().map(|o| o.surface.as_str()).collect();
        if surfaces.len() != self.options.len() {
            return Err("option surfaces are not unique".into());
        }
        if self.context.first_sentence > self.context.last_sentence {
            return Err("context span is reversed".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuilderConfig {
    /// |D|: option-set size including "None of the above".
    pub num_options: usize,
    pub min_distractors: usize,
    pub seed: u64,
}

impl Default for BuilderConfig {
    fn default() -> Self {
        BuilderConfig { num_options: 5, min_distractors: 3, seed: 0 }
    }
}

#[derive(Debug, Error)]
pub enum McqError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("invalid builder configuration: {0}")]
    Config(String),
}

pub fn question_for(trigger: &str) -> String {
    format!("What are the causes and effects of the {trigger}?")
}

/// Makes repeated trigger strings distinct: the k-th occurrence (k >= 2) of
/// a surface is rendered as `"surface (k)"`.
pub fn disambiguate_surfaces<'a>(triggers: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    triggers
        .into_iter()
        .map(|t| {
            let n = seen.entry(t).or_insert(0);
            *n += 1;
            if *n == 1 {
                t.to_owned()
            } else {
                format!("{t} ({n})")
            }
        })
        .collect()
}

/// Mentions strictly after `observed` in position order, minus mentions
/// coreferent with it.
pub fn forward_candidates(doc: &Document, observed: &str) -> Result<Vec<MentionId>, CorpusError> {
    doc.require(observed)?;
    let rank = doc.rank(observed).expect("known mention has a rank");
    Ok(doc
        .events_in_order()
        .skip(rank + 1)
        .filter(|e| !doc.are_coreferent(observed, e.mention_id.as_str()))
        .map(|e| e.mention_id.clone())
        .collect())
}

fn check_config(cfg: &BuilderConfig, min_options: usize) -> Result<(), McqError> {
    if cfg.num_options < min_options || cfg.num_options > MAX_OPTIONS {
        return Err(McqError::Config(format!(
            "num_options must lie in {min_options}..={MAX_OPTIONS}, got {}",
            cfg.num_options
        )));
    }
    Ok(())
}

fn clip(doc: &Document, observed: &str, events: &[MentionId]) -> ClippedContext {
    let first = doc.sentence_of(observed).expect("observed exists");
    // events are in position order, so the last one has the largest sentence
    let last = events.last().and_then(|m| doc.sentence_of(m.as_str())).unwrap_or(first);
    let text = doc.sentences()[first..=last]
        .iter()
        .map(|s| s.text.as_str())
        .collect::<Vec<_>>()
        .join(" ");
    ClippedContext { first_sentence: first, last_sentence: last, text }
}

fn assemble(
    doc: &Document,
    observed: &str,
    mode: Mode,
    chunk_index: usize,
    events: Vec<MentionId>,
    correct: &BTreeSet<MentionId>,
) -> McqSample {
    let surfaces = disambiguate_surfaces(events.iter().map(|m| doc.event(m.as_str()).unwrap().trigger.as_str()));
    let mut options: Vec<OptionItem> = events
        .iter()
        .zip(surfaces)
        .enumerate()
        .map(|(i, (m, surface))| OptionItem {
            letter: (b'A' + i as u8) as char,
            payload: OptionPayload::Mention(m.clone()),
            surface,
        })
        .collect();
    let none_letter = (b'A' + options.len() as u8) as char;
    options.push(OptionItem {
        letter: none_letter,
        payload: OptionPayload::NoneOfAbove,
        surface: NONE_OF_THE_ABOVE.to_owned(),
    });
    let mut gold_letters: BTreeSet<char> = options
        .iter()
        .filter(|o| o.mention().is_some_and(|m| correct.contains(m)))
        .map(|o| o.letter)
        .collect();
    if gold_letters.is_empty() {
        gold_letters.insert(none_letter);
    }
    let trigger = &doc.event(observed).unwrap().trigger;
    McqSample {
        sample_id: format!("{}#{}#{}", doc.doc_id(), observed, chunk_index),
        doc_id: doc.doc_id().to_owned(),
        mode,
        observed: MentionId::new(observed),
        question: question_for(trigger),
        context: clip(doc, observed, &events),
        options,
        gold_letters,
    }
}

/// Builds the single training sample for `observed`.
///
/// Related options are the forward candidates causally linked to `observed`,
/// keeping only the closest member of each coreference cluster. Distractors
/// are drawn uniformly without replacement from the remaining forward
/// candidates that are neither related nor coreferent with a kept related
/// event, using a generator keyed by `(seed, doc_id, observed)`. At most 25
/// event options fit; related events take precedence over distractors and the
/// closest related events are kept first.
pub fn build_train_sample(doc: &Document, observed: &str, cfg: &BuilderConfig) -> Result<McqSample, McqError> {
    check_config(cfg, 3)?;
    let forward = forward_candidates(doc, observed)?;
    let related = related_events(doc, observed)?;

    let capacity = MAX_OPTIONS - 1;
    let mut kept = Vec::new();
    let mut clusters_used = HashSet::new();
    for m in forward.iter().filter(|m| related.contains(*m)) {
        if let Some(cluster) = doc.cluster(m.as_str()) {
            if !clusters_used.insert(cluster.iter().next().unwrap().clone()) {
                continue;
            }
        }
        if kept.len() < capacity {
            kept.push(m.clone());
        }
    }

    let pool: Vec<&MentionId> = forward
        .iter()
        .filter(|m| !related.contains(*m))
        .filter(|m| !kept.iter().any(|k| doc.are_coreferent(k.as_str(), m.as_str())))
        .collect();
    let wanted = cfg
        .min_distractors
        .max((cfg.num_options - 1).saturating_sub(kept.len()))
        .min(capacity - kept.len())
        .min(pool.len());
    let mut rng = substream(cfg.seed, &["distractors", doc.doc_id(), observed]);
    let picked = index::sample(&mut rng, pool.len(), wanted);

    let correct: BTreeSet<MentionId> = kept.iter().cloned().collect();
    let mut events: Vec<MentionId> = kept;
    events.extend(picked.into_iter().map(|i| pool[i].clone()));
    events.sort_by_key(|m| doc.rank(m.as_str()).unwrap());

    Ok(assemble(doc, observed, Mode::Train, 0, events, &correct))
}

/// Chunks the forward candidates of `observed` into consecutive option sets
/// of `num_options - 1` events each. Returns no samples when there are no
/// forward candidates.
pub fn build_test_samples(doc: &Document, observed: &str, cfg: &BuilderConfig) -> Result<Vec<McqSample>, McqError> {
    check_config(cfg, 2)?;
    let forward = forward_candidates(doc, observed)?;
    let related = related_events(doc, observed)?;
    Ok(forward
        .chunks(cfg.num_options - 1)
        .enumerate()
        .map(|(i, chunk)| assemble(doc, observed, Mode::Test, i, chunk.to_vec(), &related))
        .collect())
}

/// Builds every sample of a split: one training sample per event, or the
/// chunked test samples of every event, documents and events in order.
pub fn build_split(docs: &[Document], mode: Mode, cfg: &BuilderConfig) -> Result<Vec<McqSample>, McqError> {
    let mut out = Vec::new();
    for doc in docs {
        for event in doc.events_in_order() {
            let id = event.mention_id.as_str();
            match mode {
                Mode::Train => out.push(build_train_sample(doc, id, cfg)?),
                Mode::Test => out.extend(build_test_samples(doc, id, cfg)?),
            }
        }
    }
    Ok(out)
}
