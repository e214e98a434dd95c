//! Precision, recall and F1 over unordered causal pairs, overall and split
//! into intra-sentence and inter-sentence buckets.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Document;
use crate::inference::{Pair, PairPredictionSet};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub f1: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub intra: Bucket,
    pub inter: Bucket,
}

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("predicted pair refers to unknown document `{0}`")]
    UnknownDocument(String),
    #[error("predicted pair refers to unknown mention `{mention}` in document `{doc_id}`")]
    UnknownMention { doc_id: String, mention: String },
}

/// `num / den`, with 0/0 taken as 0.
fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Returns `(precision, recall, f1)`.
pub fn prf(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fn_);
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f1)
}

/// Gold causal pairs of every document, with direction dropped.
pub fn gold_pairs(docs: &[Document]) -> PairPredictionSet {
    docs.iter()
        .flat_map(|d| d.causal_links().iter().filter_map(move |l| Pair::new(d.doc_id(), l.cause.clone(), l.effect.clone())))
        .collect()
}

pub fn score(pred: &PairPredictionSet, docs: &[Document]) -> Result<Metrics, ScoreError> {
    let by_id: HashMap<&str, &Document> = docs.iter().map(|d| (d.doc_id(), d)).collect();
    for p in pred.iter() {
        let doc = by_id.get(p.doc_id.as_str()).ok_or_else(|| ScoreError::UnknownDocument(p.doc_id.clone()))?;
        for m in [&p.a, &p.b] {
            if !doc.contains(m.as_str()) {
                return Err(ScoreError::UnknownMention { doc_id: p.doc_id.clone(), mention: m.0.clone() });
            }
        }
    }
    let intra = |p: &Pair| {
        let d = by_id[p.doc_id.as_str()];
        d.sentence_of(p.a.as_str()) == d.sentence_of(p.b.as_str())
    };

    let gold = gold_pairs(docs);
    let (mut all, mut ia, mut ie) = ([0usize; 3], [0usize; 3], [0usize; 3]);
    let mut bump = |p: &Pair, slot: usize| {
        all[slot] += 1;
        if intra(p) {
            ia[slot] += 1;
        } else {
            ie[slot] += 1;
        }
    };
    for p in pred.iter() {
        bump(p, if gold.0.contains(p) { 0 } else { 1 });
    }
    for p in gold.iter().filter(|p| !pred.0.contains(*p)) {
        bump(p, 2);
    }

    let bucket = |c: [usize; 3]| Bucket { tp: c[0], fp: c[1], fn_: c[2], f1: prf(c[0], c[1], c[2]).2 };
    let (precision, recall, f1) = prf(all[0], all[1], all[2]);
    Ok(Metrics { tp: all[0], fp: all[1], fn_: all[2], precision, recall, f1, intra: bucket(ia), inter: bucket(ie) })
}
