//! Seeded synthetic corpora for fixtures, sweeps and property tests.

use std::collections::BTreeSet;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, RawDocument, RawEvent, RawLink};
use crate::seeds::substream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LinkStructure {
    /// Each non-coreferent pair within `max_distance` positions is linked
    /// with probability `link_prob`, in a random direction.
    Random { link_prob: f64, max_distance: usize },
    /// `related` events chosen uniformly are all linked to each other
    /// (earlier to later); everything else is unrelated. No coreference.
    Clique { related: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub documents: usize,
    pub events_min: usize,
    pub events_max: usize,
    pub max_events_per_sentence: usize,
    pub structure: LinkStructure,
    /// Fraction of events placed into coreference clusters (random structure).
    pub coref_rate: f64,
    /// Probability that an event reuses an earlier trigger string.
    pub duplicate_trigger_rate: f64,
    pub seed: u64,
    pub doc_prefix: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            documents: 10,
            events_min: 10,
            events_max: 20,
            max_events_per_sentence: 3,
            structure: LinkStructure::Random { link_prob: 0.15, max_distance: 8 },
            coref_rate: 0.2,
            duplicate_trigger_rate: 0.0,
            seed: 0,
            doc_prefix: "syn".into(),
        }
    }
}

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";
const FILLERS: &[&str] = &["then", "after", "the", "a", "reported", "later", "near", "amid", "before", "officials"];

/// The i-th word of a fixed lowercase vocabulary; distinct for distinct `i`
/// below 343 000.
fn word(i: usize) -> String {
    let syllables = CONSONANTS.len() * VOWELS.len();
    let mut out = String::with_capacity(6);
    let mut rest = i;
    for _ in 0..3 {
        let s = rest % syllables;
        out.push(CONSONANTS[s / VOWELS.len()] as char);
        out.push(VOWELS[s % VOWELS.len()] as char);
        rest /= syllables;
    }
    out
}

fn one_document(cfg: &SynthConfig, doc_index: usize, rng: &mut ChaCha8Rng) -> RawDocument {
    let n = rng.gen_range(cfg.events_min..=cfg.events_max.max(cfg.events_min));
    let per_sentence = cfg.max_events_per_sentence.max(1);

    let mut triggers: Vec<String> = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 && rng.gen_bool(cfg.duplicate_trigger_rate.clamp(0.0, 1.0)) {
            let j = rng.gen_range(0..i);
            triggers.push(triggers[j].clone());
        } else {
            triggers.push(word(doc_index * 1000 + i));
        }
    }

    let mut sentences = Vec::new();
    let mut events = Vec::with_capacity(n);
    let mut next = 0;
    while next < n {
        let count = rng.gen_range(1..=per_sentence).min(n - next);
        let mut text = String::new();
        for k in 0..count {
            let filler = FILLERS[rng.gen_range(0..FILLERS.len())];
            if k == 0 {
                let mut c = filler.chars();
                let first = c.next().unwrap().to_ascii_uppercase();
                text.push(first);
                text.push_str(c.as_str());
            } else {
                text.push_str(filler);
            }
            text.push(' ');
            let start = text.chars().count();
            text.push_str(&triggers[next]);
            events.push(RawEvent {
                id: format!("e{next}"),
                sentence: sentences.len(),
                start,
                end: start + triggers[next].chars().count(),
                trigger: triggers[next].clone(),
            });
            next += 1;
            text.push_str(if k + 1 == count { "." } else { "," });
            if k + 1 < count {
                text.push(' ');
            }
        }
        sentences.push(text);
    }

    let mut coref: Vec<Vec<usize>> = Vec::new();
    let mut links: BTreeSet<(usize, usize)> = BTreeSet::new();
    match &cfg.structure {
        LinkStructure::Clique { related } => {
            let mut chosen: Vec<usize> = index::sample(rng, n, (*related).min(n)).into_vec();
            chosen.sort_unstable();
            for (i, &a) in chosen.iter().enumerate() {
                for &b in &chosen[i + 1..] {
                    links.insert((a, b));
                }
            }
        }
        LinkStructure::Random { link_prob, max_distance } => {
            let clustered = ((n as f64) * cfg.coref_rate.clamp(0.0, 1.0)).round() as usize;
            let mut pool: Vec<usize> = (0..n).collect();
            pool.shuffle(rng);
            let mut taken = 0;
            while clustered - taken.min(clustered) >= 2 && taken + 2 <= pool.len() {
                let size = if clustered - taken >= 3 && rng.gen_bool(0.3) { 3 } else { 2 };
                let mut members = pool[taken..taken + size].to_vec();
                members.sort_unstable();
                coref.push(members);
                taken += size;
            }
            let cluster_of = |m: usize| coref.iter().position(|c| c.contains(&m));
            for a in 0..n {
                for b in a + 1..n.min(a + 1 + max_distance) {
                    if cluster_of(a).is_some() && cluster_of(a) == cluster_of(b) {
                        continue;
                    }
                    if rng.gen_bool(link_prob.clamp(0.0, 1.0)) {
                        links.insert(if rng.gen_bool(0.5) { (a, b) } else { (b, a) });
                    }
                }
            }
        }
    }

    RawDocument {
        doc_id: format!("{}{doc_index:03}", cfg.doc_prefix),
        sentences,
        events,
        coref: coref.iter().map(|c| c.iter().map(|m| format!("e{m}")).collect()).collect(),
        causal: links.into_iter().map(|(c, e)| RawLink { cause: format!("e{c}"), effect: format!("e{e}") }).collect(),
    }
}

/// Generates `cfg.documents` valid documents. Equal configs give equal
/// corpora.
pub fn generate(cfg: &SynthConfig) -> Vec<Document> {
    (0..cfg.documents)
        .map(|i| {
            let mut rng = substream(cfg.seed, &["synth", &i.to_string()]);
            Document::from_raw(one_document(cfg, i, &mut rng)).expect("generator emits valid documents")
        })
        .collect()
}
