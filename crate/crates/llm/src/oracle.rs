//! Deterministic responder that answers from gold annotations.

use std::collections::{BTreeSet, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};

use async_trait::async_trait;
use causalqa_core::corpus::Document;
use causalqa_core::ecg::{build_ecg, linearize};
use causalqa_core::mcq::McqSample;

use crate::{ClientError, CompletionRequest, CompletionResult, Responder};

/// Which prompt kind a correlation id refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RequestKind {
    Qa,
    Rationale,
    Ecg,
}

impl RequestKind {
    pub fn prefix(self) -> &'static str {
        match self {
            RequestKind::Qa => "qa",
            RequestKind::Rationale => "rationale",
            RequestKind::Ecg => "ecg",
        }
    }
}

/// `"{kind}:{sample_id}"`.
pub fn correlation_id(kind: RequestKind, sample_id: &str) -> String {
    format!("{}:{sample_id}", kind.prefix())
}

pub fn parse_correlation_id(id: &str) -> Option<(RequestKind, &str)> {
    let (kind, rest) = id.split_once(':')?;
    let kind = match kind {
        "qa" => RequestKind::Qa,
        "rationale" => RequestKind::Rationale,
        "ecg" => RequestKind::Ecg,
        _ => return None,
    };
    Some((kind, rest))
}

/// The stub rationale the oracle returns for `letters`.
pub fn stub_rationale(letters: &BTreeSet<char>) -> String {
    let letters: String = letters.iter().collect();
    format!("Selected {letters} per annotation.")
}

pub struct MockOracle {
    samples: HashMap<String, McqSample>,
    docs: HashMap<String, Document>,
    requests: AtomicU64,
}

impl MockOracle {
    /// `docs` is only needed for ECG requests.
    pub fn new(samples: impl IntoIterator<Item = McqSample>, docs: &[Document]) -> Self {
        MockOracle {
            samples: samples.into_iter().map(|s| (s.sample_id.clone(), s)).collect(),
            docs: docs.iter().map(|d| (d.doc_id().to_owned(), d.clone())).collect(),
            requests: AtomicU64::new(0),
        }
    }

    pub fn requests_served(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }

    pub fn answer(&self, correlation: Option<&str>) -> Result<String, ClientError> {
        let id = correlation.ok_or_else(|| ClientError::Oracle("request has no correlation id".into()))?;
        let (kind, sample_id) =
            parse_correlation_id(id).ok_or_else(|| ClientError::Oracle(format!("bad correlation id `{id}`")))?;
        let sample = self
            .samples
            .get(sample_id)
            .ok_or_else(|| ClientError::Oracle(format!("unknown sample `{sample_id}`")))?;
        Ok(match kind {
            RequestKind::Qa => sample.gold_string(),
            RequestKind::Rationale => stub_rationale(&sample.gold_letters),
            RequestKind::Ecg => {
                let doc = self
                    .docs
                    .get(&sample.doc_id)
                    .ok_or_else(|| ClientError::Oracle(format!("unknown document `{}`", sample.doc_id)))?;
                let g = build_ecg(doc, sample.context.first_sentence..=sample.context.last_sentence);
                linearize(&g, doc).0
            }
        })
    }
}

#[async_trait]
impl Responder for MockOracle {
    async fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, ClientError> {
        self.requests.fetch_add(1, Ordering::Relaxed);
        let text = self.answer(req.correlation_id.as_deref())?;
        Ok(CompletionResult { text, latency_ms: 0, attempts: 1 })
    }
}
