//! Event causality graphs over a clipped span and their clause encoding.
//!
//! A graph is linearized as coreference clauses followed by causal clauses,
//! each relation stated forward and then reversed:
//!
//! ```text
//! e1 is e2, e2 is e1, e1 is the cause of e3, e3 is the effect of e1
//! ```

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::ops::RangeInclusive;

use crate::corpus::{Document, MentionId};
use crate::mcq::disambiguate_surfaces;

pub const COREF_RELATION: &str = " is ";
pub const CAUSE_RELATION: &str = " is the cause of ";
pub const EFFECT_RELATION: &str = " is the effect of ";
pub const CLAUSE_SEPARATOR: &str = ", ";

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EcGraph {
    /// Position order.
    pub nodes: Vec<MentionId>,
    /// Unordered pairs stored with the earlier mention first.
    pub coref_edges: BTreeSet<(MentionId, MentionId)>,
    /// `(cause, effect)`.
    pub causal_edges: BTreeSet<(MentionId, MentionId)>,
}

impl EcGraph {
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct LinearizedEcg(pub String);

impl LinearizedEcg {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn clause_count(&self) -> usize {
        if self.0.is_empty() {
            0
        } else {
            self.0.split(CLAUSE_SEPARATOR).count()
        }
    }
}

impl fmt::Display for LinearizedEcg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Graph over the mentions of `span` (inclusive sentence indices).
///
/// Nodes are mentions with a causal link whose endpoints both lie in the
/// span, plus in-span mentions coreferent with such a mention.
pub fn build_ecg(doc: &Document, span: RangeInclusive<usize>) -> EcGraph {
    let in_span = |id: &MentionId| doc.sentence_of(id.as_str()).is_some_and(|s| span.contains(&s));

    let causal_edges: BTreeSet<(MentionId, MentionId)> = doc
        .causal_links()
        .iter()
        .filter(|l| in_span(&l.cause) && in_span(&l.effect))
        .map(|l| (l.cause.clone(), l.effect.clone()))
        .collect();
    let causal_nodes: BTreeSet<&MentionId> = causal_edges.iter().flat_map(|(c, e)| [c, e]).collect();

    let nodes: Vec<MentionId> = doc
        .events_in_order()
        .map(|e| &e.mention_id)
        .filter(|m| in_span(m))
        .filter(|m| {
            causal_nodes.contains(m) || causal_nodes.iter().any(|n| doc.are_coreferent(n.as_str(), m.as_str()))
        })
        .cloned()
        .collect();

    let mut coref_edges = BTreeSet::new();
    for (i, a) in nodes.iter().enumerate() {
        for b in &nodes[i + 1..] {
            if doc.are_coreferent(a.as_str(), b.as_str()) {
                coref_edges.insert((a.clone(), b.clone()));
            }
        }
    }
    EcGraph { nodes, coref_edges, causal_edges }
}

/// Surface strings of graph nodes, disambiguated in position order.
fn node_surfaces(g: &EcGraph, doc: &Document) -> HashMap<MentionId, String> {
    let surfaces =
        disambiguate_surfaces(g.nodes.iter().map(|m| doc.event(m.as_str()).map_or(m.as_str(), |e| e.trigger.as_str())));
    g.nodes.iter().cloned().zip(surfaces).collect()
}

pub fn linearize(g: &EcGraph, doc: &Document) -> LinearizedEcg {
    let surface = node_surfaces(g, doc);
    let rank = |m: &MentionId| doc.rank(m.as_str()).unwrap_or(usize::MAX);
    let text = |m: &MentionId| surface.get(m).cloned().unwrap_or_else(|| m.0.clone());

    let mut coref: Vec<(&MentionId, &MentionId)> = g
        .coref_edges
        .iter()
        .map(|(a, b)| if rank(a) <= rank(b) { (a, b) } else { (b, a) })
        .collect();
    coref.sort_by_key(|(a, b)| (rank(a), rank(b)));
    let mut causal: Vec<(&MentionId, &MentionId)> = g.causal_edges.iter().map(|(c, e)| (c, e)).collect();
    causal.sort_by_key(|(c, e)| (rank(c), rank(e)));

    let mut clauses = Vec::with_capacity(2 * (coref.len() + causal.len()));
    for (x, y) in coref {
        clauses.push(format!("{}{COREF_RELATION}{}", text(x), text(y)));
        clauses.push(format!("{}{COREF_RELATION}{}", text(y), text(x)));
    }
    for (c, e) in causal {
        clauses.push(format!("{}{CAUSE_RELATION}{}", text(c), text(e)));
        clauses.push(format!("{}{EFFECT_RELATION}{}", text(e), text(c)));
    }
    LinearizedEcg(clauses.join(CLAUSE_SEPARATOR))
}

/// Resolves surface strings back to mentions while parsing.
#[derive(Clone, Debug, Default)]
pub struct SurfaceMap {
    entries: HashMap<String, (MentionId, usize)>,
}

impl SurfaceMap {
    /// Surfaces exactly as [`linearize`] renders them for `g`.
    pub fn for_graph(g: &EcGraph, doc: &Document) -> Self {
        SurfaceMap::for_mentions(doc, g.nodes.iter().map(MentionId::as_str))
    }

    /// Surfaces of every mention inside `span`, disambiguated in position
    /// order. Use this to read back generations for a span whose graph is
    /// unknown.
    pub fn for_span(doc: &Document, span: RangeInclusive<usize>) -> Self {
        SurfaceMap::for_mentions(
            doc,
            doc.events_in_order().filter(|e| span.contains(&e.sentence_index)).map(|e| e.mention_id.as_str()),
        )
    }

    pub fn for_mentions<'a>(doc: &Document, ids: impl IntoIterator<Item = &'a str>) -> Self {
        let mut ids: Vec<&str> = ids.into_iter().filter(|m| doc.contains(m)).collect();
        ids.sort_by_key(|m| doc.rank(m));
        let surfaces = disambiguate_surfaces(ids.iter().map(|m| doc.event(m).unwrap().trigger.as_str()));
        let entries = ids
            .into_iter()
            .zip(surfaces)
            .map(|(m, s)| (s, (MentionId::new(m), doc.rank(m).unwrap())))
            .collect();
        SurfaceMap { entries }
    }

    pub fn insert(&mut self, surface: impl Into<String>, mention: MentionId, rank: usize) {
        self.entries.insert(surface.into(), (mention, rank));
    }

    fn get(&self, surface: &str) -> Option<&(MentionId, usize)> {
        self.entries.get(surface)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseOutcome {
    pub graph: EcGraph,
    pub warnings: Vec<String>,
}

enum Relation {
    Coref,
    Cause,
    Effect,
}

type Entry = (MentionId, usize);

fn split_clause<'m>(clause: &str, map: &'m SurfaceMap) -> Option<(Relation, &'m Entry, &'m Entry)> {
    for (phrase, rel) in [(CAUSE_RELATION, Relation::Cause), (EFFECT_RELATION, Relation::Effect), (COREF_RELATION, Relation::Coref)]
    {
        for (at, _) in clause.match_indices(phrase) {
            let (left, right) = (&clause[..at], &clause[at + phrase.len()..]);
            if let (Some(l), Some(r)) = (map.get(left), map.get(right)) {
                return Some((rel, l, r));
            }
        }
    }
    None
}

/// Reads a linearized graph back. Reverse restatements fold into their
/// forward edge; clauses that do not parse become warnings.
pub fn parse_linearized(text: &str, map: &SurfaceMap) -> ParseOutcome {
    let mut graph = EcGraph::default();
    let mut warnings = Vec::new();
    let mut nodes: BTreeSet<(usize, MentionId)> = BTreeSet::new();
    let text = text.trim();
    if text.is_empty() {
        return ParseOutcome { graph, warnings };
    }
    for clause in text.split(CLAUSE_SEPARATOR).map(str::trim) {
        let Some((rel, (a, ra), (b, rb))) = split_clause(clause, map) else {
            warnings.push(format!("unrecognized clause `{clause}`"));
            continue;
        };
        if a == b {
            warnings.push(format!("clause `{clause}` relates a mention to itself"));
            continue;
        }
        match rel {
            Relation::Coref => {
                let edge = if ra <= rb { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
                graph.coref_edges.insert(edge);
            }
            Relation::Cause => {
                graph.causal_edges.insert((a.clone(), b.clone()));
            }
            Relation::Effect => {
                graph.causal_edges.insert((b.clone(), a.clone()));
            }
        }
        nodes.insert((*ra, a.clone()));
        nodes.insert((*rb, b.clone()));
    }
    graph.nodes = nodes.into_iter().map(|(_, m)| m).collect();
    ParseOutcome { graph, warnings }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{RawDocument, RawEvent, RawLink};

    /// `layout[i]` lists the triggers of sentence i; mention ids equal triggers.
    fn doc(layout: &[&[&str]], coref: &[&[&str]], causal: &[(&str, &str)]) -> Document {
        let mut events = Vec::new();
        let mut sentences = Vec::new();
        for (s, words) in layout.iter().enumerate() {
            let mut text = String::new();
            for w in *words {
                if !text.is_empty() {
                    text.push(' ');
                }
                let start = text.chars().count();
                text.push_str(w);
                events.push(RawEvent {
                    id: w.to_string(),
                    sentence: s,
                    start,
                    end: start + w.chars().count(),
                    trigger: w.to_string(),
                });
            }
            if text.is_empty() {
                text.push_str("quiet");
            }
            sentences.push(text);
        }
        Document::from_raw(RawDocument {
            doc_id: "g".into(),
            sentences,
            events,
            coref: coref.iter().map(|c| c.iter().map(|s| s.to_string()).collect()).collect(),
            causal: causal.iter().map(|(c, e)| RawLink { cause: c.to_string(), effect: e.to_string() }).collect(),
        })
        .unwrap()
    }

    fn ids(v: &[MentionId]) -> Vec<&str> {
        v.iter().map(MentionId::as_str).collect()
    }

    #[test]
    fn worked_example() {
        let d = doc(&[&["e1", "e2", "e3"]], &[&["e1", "e2"]], &[("e1", "e3")]);
        let g = build_ecg(&d, 0..=0);
        assert_eq!(
            linearize(&g, &d).as_str(),
            "e1 is e2, e2 is e1, e1 is the cause of e3, e3 is the effect of e1"
        );
    }

    #[test]
    fn unrelated_events_excluded() {
        let d = doc(&[&["a", "z", "b"]], &[], &[("a", "b")]);
        let g = build_ecg(&d, 0..=0);
        assert_eq!(ids(&g.nodes), ["a", "b"]);
    }

    #[test]
    fn link_leaving_span_dropped() {
        let d = doc(&[&["a"], &["b"]], &[], &[("a", "b")]);
        // oracle: links with both endpoints in sentence 0
        let inside = d.causal_links().iter().filter(|l| d.sentence_of(l.cause.as_str()) == Some(0) && d.sentence_of(l.effect.as_str()) == Some(0)).count();
        assert_eq!(inside, 0);
        let g = build_ecg(&d, 0..=0);
        assert!(g.is_empty());
        assert_eq!(linearize(&g, &d).as_str(), "");
    }

    #[test]
    fn coreferent_nodes_join() {
        let d = doc(&[&["a", "b"], &["c"]], &[&["b", "c"]], &[("a", "b")]);
        let g = build_ecg(&d, 0..=1);
        assert_eq!(ids(&g.nodes), ["a", "b", "c"]);
        assert_eq!(g.coref_edges.len(), 1);
        assert!(g.coref_edges.contains(&(MentionId::new("b"), MentionId::new("c"))));
    }

    #[test]
    fn causal_blocks_sorted_by_position() {
        let d = doc(&[&["a", "b", "c", "d"]], &[], &[("c", "d"), ("a", "b")]);
        let g = build_ecg(&d, 0..=0);
        let lin = linearize(&g, &d);
        // oracle: sort edges by endpoint positions, then emit
        let mut edges: Vec<(usize, usize, &str, &str)> = d
            .causal_links()
            .iter()
            .map(|l| (d.rank(l.cause.as_str()).unwrap(), d.rank(l.effect.as_str()).unwrap(), l.cause.as_str(), l.effect.as_str()))
            .collect();
        edges.sort();
        let expected: Vec<String> = edges
            .iter()
            .flat_map(|(_, _, c, e)| [format!("{c} is the cause of {e}"), format!("{e} is the effect of {c}")])
            .collect();
        assert_eq!(lin.as_str(), expected.join(", "));
        assert_eq!(lin.clause_count(), 4);
    }

    #[test]
    fn effect_clause_folds_forward() {
        let d = doc(&[&["x", "y"]], &[], &[]);
        let map = SurfaceMap::for_span(&d, 0..=0);
        let out = parse_linearized("x is the effect of y", &map);
        assert!(out.warnings.is_empty());
        assert_eq!(out.graph.causal_edges, BTreeSet::from([(MentionId::new("y"), MentionId::new("x"))]));
    }

    #[test]
    fn malformed_clause_warns() {
        let d = doc(&[&["x", "y"]], &[], &[]);
        let map = SurfaceMap::for_span(&d, 0..=0);
        let out = parse_linearized("x frobnicates y", &map);
        assert!(out.graph.is_empty());
        assert_eq!(out.warnings.len(), 1);
        let out = parse_linearized("x is ghost", &map);
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn duplicate_triggers_round_trip() {
        let mut d = doc(&[&["fire", "smoke", "fire2"]], &[], &[("fire", "smoke"), ("smoke", "fire2")]);
        // make the third trigger a repeat of the first
        let mut raw = d.to_raw();
        raw.sentences[0] = "fire smoke fire".into();
        raw.events[2].end = raw.events[2].start + 4;
        raw.events[2].trigger = "fire".into();
        d = Document::from_raw(raw).unwrap();
        let g = build_ecg(&d, 0..=0);
        let lin = linearize(&g, &d);
        assert!(lin.as_str().contains("smoke is the cause of fire (2)"));
        let back = parse_linearized(lin.as_str(), &SurfaceMap::for_graph(&g, &d));
        assert_eq!(back.graph, g);
    }
}
