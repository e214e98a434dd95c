//! Canonical document model and the JSON interchange format.
//!
//! A corpus file is a JSON array of documents:
//!
//! ```json
//! [{"doc_id": "d1",
//!   "sentences": ["The storm hit.", "Roads flooded."],
//!   "events": [{"id": "e1", "sentence": 0, "start": 4, "end": 9, "trigger": "storm"}],
//!   "coref": [["e1", "e4"]],
//!   "causal": [{"cause": "e1", "effect": "e2"}]}]
//! ```
//!
//! Offsets count Unicode scalar values, not bytes. Every [`Document`] handed
//! out by this module has passed validation and carries a precomputed
//! position order, so downstream code never re-checks invariants.

use std::borrow::Borrow;
use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identifier of an event mention, unique within its document.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MentionId(pub String);

impl MentionId {
    pub fn new(id: impl Into<String>) -> Self {
        MentionId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for MentionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Borrow<str> for MentionId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl From<&str> for MentionId {
    fn from(s: &str) -> Self {
        MentionId(s.to_owned())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sentence {
    pub index: usize,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventMention {
    pub mention_id: MentionId,
    pub sentence_index: usize,
    pub char_start: usize,
    pub char_end: usize,
    pub trigger: String,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CausalLink {
    pub cause: MentionId,
    pub effect: MentionId,
}

/// Raw interchange record for one document, before validation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDocument {
    pub doc_id: String,
    pub sentences: Vec<String>,
    pub events: Vec<RawEvent>,
    #[serde(default)]
    pub coref: Vec<Vec<String>>,
    #[serde(default)]
    pub causal: Vec<RawLink>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawEvent {
    pub id: String,
    pub sentence: usize,
    pub start: usize,
    pub end: usize,
    pub trigger: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawLink {
    pub cause: String,
    pub effect: String,
}

/// A broken document invariant.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("sentence {index} has empty text")]
    EmptySentence { index: usize },
    #[error("mention id `{0}` is used more than once")]
    DuplicateMention(String),
    #[error("mention `{mention}` points at sentence {sentence}, but the document has {count} sentences")]
    SentenceOutOfRange { mention: String, sentence: usize, count: usize },
    #[error("mention `{mention}` has offsets [{start}, {end}) outside a sentence of length {len}")]
    BadOffsets { mention: String, start: usize, end: usize, len: usize },
    #[error("mention `{mention}` trigger is `{trigger}` but the sentence text at its offsets is `{found}`")]
    TriggerMismatch { mention: String, trigger: String, found: String },
    #[error("{context} references unknown mention `{id}`")]
    UnknownMention { context: String, id: String },
    #[error("coreference cluster {index} has fewer than two distinct mentions")]
    ClusterTooSmall { index: usize },
    #[error("mention `{0}` appears in more than one coreference cluster")]
    OverlappingClusters(String),
    #[error("causal link from `{0}` to itself")]
    SelfLink(String),
    #[error("causal link `{cause}` -> `{effect}` joins two mentions of the same coreference cluster")]
    LinkInsideCluster { cause: String, effect: String },
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corpus is not valid JSON: {0}")]
    Json(#[source] serde_json::Error),
    #[error("schema violation in document `{doc_id}` at `{path}`: {message}")]
    Schema { doc_id: String, path: String, message: String },
    #[error("document `{doc_id}`: {violation}")]
    Invalid { doc_id: String, violation: Violation },
    #[error("document id `{0}` appears more than once in the corpus")]
    DuplicateDocument(String),
    #[error("document `{doc_id}` has no mention `{id}`")]
    UnknownMention { doc_id: String, id: String },
}

/// A validated document.
///
/// Fields are read through accessors; the derived indices below are kept in
/// sync with them by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Document {
    doc_id: String,
    sentences: Vec<Sentence>,
    events: Vec<EventMention>,
    coref_clusters: Vec<BTreeSet<MentionId>>,
    causal_links: Vec<CausalLink>,
    // event indices sorted by position
    order: Vec<usize>,
    // mention id -> (index into events, position rank)
    lookup: HashMap<MentionId, (usize, usize)>,
    // mention id -> index into coref_clusters
    cluster_of: HashMap<MentionId, usize>,
    // mention id -> mentions it shares a causal link with, either direction
    partners: HashMap<MentionId, BTreeSet<MentionId>>,
}

impl Document {
    pub fn doc_id(&self) -> &str {
        &self.doc_id
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    /// Events in file order.
    pub fn events(&self) -> &[EventMention] {
        &self.events
    }

    pub fn coref_clusters(&self) -> &[BTreeSet<MentionId>] {
        &self.coref_clusters
    }

    pub fn causal_links(&self) -> &[CausalLink] {
        &self.causal_links
    }

    pub fn event(&self, id: &str) -> Option<&EventMention> {
        self.lookup.get(id).map(|&(i, _)| &self.events[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.lookup.contains_key(id)
    }

    /// Position rank of a mention: 0 for the first mention in reading order.
    pub fn rank(&self, id: &str) -> Option<usize> {
        self.lookup.get(id).map(|&(_, r)| r)
    }

    /// Mentions in position order.
    pub fn events_in_order(&self) -> impl Iterator<Item = &EventMention> + '_ {
        self.order.iter().map(move |&i| &self.events[i])
    }

    /// The coreference cluster containing `id`, if any.
    pub fn cluster(&self, id: &str) -> Option<&BTreeSet<MentionId>> {
        self.cluster_of.get(id).map(|&c| &self.coref_clusters[c])
    }

    pub fn are_coreferent(&self, a: &str, b: &str) -> bool {
        match (self.cluster_of.get(a), self.cluster_of.get(b)) {
            (Some(x), Some(y)) => x == y,
            _ => false,
        }
    }

    /// Mentions sharing a causal link with `id` in either direction.
    pub fn partners(&self, id: &str) -> Option<&BTreeSet<MentionId>> {
        self.partners.get(id)
    }

    pub fn sentence_of(&self, id: &str) -> Option<usize> {
        self.event(id).map(|e| e.sentence_index)
    }

    pub fn require(&self, id: &str) -> Result<&EventMention, CorpusError> {
        self.event(id).ok_or_else(|| CorpusError::UnknownMention {
            doc_id: self.doc_id.clone(),
            id: id.to_owned(),
        })
    }

    pub fn to_raw(&self) -> RawDocument {
        RawDocument {
            doc_id: self.doc_id.clone(),
            sentences: self.sentences.iter().map(|s| s.text.clone()).collect(),
            events: self
                .events
                .iter()
                .map(|e| RawEvent {
                    id: e.mention_id.0.clone(),
                    sentence: e.sentence_index,
                    start: e.char_start,
                    end: e.char_end,
                    trigger: e.trigger.clone(),
                })
                .collect(),
            coref: self
                .coref_clusters
                .iter()
                .map(|c| c.iter().map(|m| m.0.clone()).collect())
                .collect(),
            causal: self
                .causal_links
                .iter()
                .map(|l| RawLink { cause: l.cause.0.clone(), effect: l.effect.0.clone() })
                .collect(),
        }
    }

    pub fn from_raw(raw: RawDocument) -> Result<Self, CorpusError> {
        let doc_id = raw.doc_id.clone();
        validate(raw).map_err(|violation| CorpusError::Invalid { doc_id, violation })
    }
}

fn validate(raw: RawDocument) -> Result<Document, Violation> {
    let sentences: Vec<Sentence> = raw
        .sentences
        .into_iter()
        .enumerate()
        .map(|(index, text)| Sentence { index, text })
        .collect();
    if let Some(s) = sentences.iter().find(|s| s.text.is_empty()) {
        return Err(Violation::EmptySentence { index: s.index });
    }

    let mut events = Vec::with_capacity(raw.events.len());
    let mut seen = HashSet::new();
    for ev in raw.events {
        if !seen.insert(ev.id.clone()) {
            return Err(Violation::DuplicateMention(ev.id));
        }
        let sentence = sentences.get(ev.sentence).ok_or_else(|| Violation::SentenceOutOfRange {
            mention: ev.id.clone(),
            sentence: ev.sentence,
            count: sentences.len(),
        })?;
        let len = sentence.text.chars().count();
        if ev.start >= ev.end || ev.end > len {
            return Err(Violation::BadOffsets { mention: ev.id, start: ev.start, end: ev.end, len });
        }
        let found: String = sentence.text.chars().skip(ev.start).take(ev.end - ev.start).collect();
        if found != ev.trigger {
            return Err(Violation::TriggerMismatch { mention: ev.id, trigger: ev.trigger, found });
        }
        events.push(EventMention {
            mention_id: MentionId(ev.id),
            sentence_index: ev.sentence,
            char_start: ev.start,
            char_end: ev.end,
            trigger: ev.trigger,
        });
    }

    // (sentence, start) is the position order; end and id only break ties
    // between mentions that start at the same character.
    let mut order: Vec<usize> = (0..events.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (&events[a], &events[b]);
        (x.sentence_index, x.char_start, x.char_end, &x.mention_id)
            .cmp(&(y.sentence_index, y.char_start, y.char_end, &y.mention_id))
    });
    let mut lookup = HashMap::with_capacity(events.len());
    for (rank, &i) in order.iter().enumerate() {
        lookup.insert(events[i].mention_id.clone(), (i, rank));
    }

    let mut coref_clusters = Vec::with_capacity(raw.coref.len());
    let mut cluster_of = HashMap::new();
    for (index, members) in raw.coref.into_iter().enumerate() {
        let mut cluster = BTreeSet::new();
        for id in members {
            if !lookup.contains_key(id.as_str()) {
                return Err(Violation::UnknownMention {
                    context: format!("coreference cluster {index}"),
                    id,
                });
            }
            if let Some(&other) = cluster_of.get(id.as_str()) {
                if other != index {
                    return Err(Violation::OverlappingClusters(id));
                }
            }
            cluster_of.insert(MentionId(id.clone()), index);
            cluster.insert(MentionId(id));
        }
        if cluster.len() < 2 {
            return Err(Violation::ClusterTooSmall { index });
        }
        coref_clusters.push(cluster);
    }

    let mut causal_links = Vec::with_capacity(raw.causal.len());
    let mut partners: HashMap<MentionId, BTreeSet<MentionId>> = HashMap::new();
    for (index, link) in raw.causal.into_iter().enumerate() {
        for id in [&link.cause, &link.effect] {
            if !lookup.contains_key(id.as_str()) {
                return Err(Violation::UnknownMention {
                    context: format!("causal link {index}"),
                    id: id.clone(),
                });
            }
        }
        if link.cause == link.effect {
            return Err(Violation::SelfLink(link.cause));
        }
        if let (Some(a), Some(b)) = (cluster_of.get(link.cause.as_str()), cluster_of.get(link.effect.as_str())) {
            if a == b {
                return Err(Violation::LinkInsideCluster { cause: link.cause, effect: link.effect });
            }
        }
        let cause = MentionId(link.cause);
        let effect = MentionId(link.effect);
        partners.entry(cause.clone()).or_default().insert(effect.clone());
        partners.entry(effect.clone()).or_default().insert(cause.clone());
        causal_links.push(CausalLink { cause, effect });
    }

    Ok(Document {
        doc_id: raw.doc_id,
        sentences,
        events,
        coref_clusters,
        causal_links,
        order,
        lookup,
        cluster_of,
        partners,
    })
}

/// Mention ids in position order: ascending (sentence index, start offset).
pub fn position_order(doc: &Document) -> Vec<MentionId> {
    doc.events_in_order().map(|e| e.mention_id.clone()).collect()
}

/// Every mention joined to `observed` by a causal link in either direction.
///
/// Links held by coreferent mentions of `observed` are not inherited.
pub fn related_events(doc: &Document, observed: &str) -> Result<BTreeSet<MentionId>, CorpusError> {
    doc.require(observed)?;
    Ok(doc
        .partners(observed)
        .map(|p| p.iter().filter(|m| !doc.are_coreferent(observed, m.as_str())).cloned().collect())
        .unwrap_or_default())
}

/// Parses and validates a corpus from a JSON string.
pub fn parse_corpus(json: &str) -> Result<Vec<Document>, CorpusError> {
    let values: Vec<serde_json::Value> = serde_json::from_str(json).map_err(CorpusError::Json)?;
    let mut raws = Vec::with_capacity(values.len());
    for (i, value) in values.into_iter().enumerate() {
        raws.push(raw_from_value(value, i)?);
    }
    documents_from_raw(raws)
}

/// Parses one document per line (blank lines skipped).
pub fn parse_corpus_jsonl(text: &str) -> Result<Vec<Document>, CorpusError> {
    let mut raws = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let value: serde_json::Value = serde_json::from_str(line).map_err(CorpusError::Json)?;
        raws.push(raw_from_value(value, i)?);
    }
    documents_from_raw(raws)
}

fn raw_from_value(value: serde_json::Value, position: usize) -> Result<RawDocument, CorpusError> {
    let doc_id = value
        .get("doc_id")
        .and_then(|v| v.as_str())
        .map(str::to_owned)
        .unwrap_or_else(|| format!("<document {position}>"));
    serde_path_to_error::deserialize(value).map_err(|e| CorpusError::Schema {
        doc_id,
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

pub fn documents_from_raw(raws: Vec<RawDocument>) -> Result<Vec<Document>, CorpusError> {
    let mut ids = HashSet::new();
    let mut docs = Vec::with_capacity(raws.len());
    for raw in raws {
        if !ids.insert(raw.doc_id.clone()) {
            return Err(CorpusError::DuplicateDocument(raw.doc_id));
        }
        docs.push(Document::from_raw(raw)?);
    }
    Ok(docs)
}

/// Reads a corpus file. Files ending in `.jsonl` hold one document per line;
/// anything else is read as a JSON array.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Document>, CorpusError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.to_owned(), source })?;
    if path.extension().is_some_and(|e| e == "jsonl") {
        parse_corpus_jsonl(&text)
    } else {
        parse_corpus(&text)
    }
}

pub fn corpus_to_json(docs: &[Document]) -> String {
    let raws: Vec<RawDocument> = docs.iter().map(Document::to_raw).collect();
    serde_json::to_string_pretty(&raws).expect("corpus serialization is infallible")
}

pub fn save_corpus(path: impl AsRef<Path>, docs: &[Document]) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let mut text = corpus_to_json(docs);
    text.push('\n');
    fs::write(path, text).map_err(|source| CorpusError::Io { path: path.to_owned(), source })
}
