//! Rendered prompts compared byte-for-byte with the files under
//! `testdata/prompts/`. Set `UPDATE_GOLDENS=1` to rewrite them.

use std::path::PathBuf;

use causalqa_core::corpus::load_corpus;
use causalqa_core::mcq::{build_train_sample, BuilderConfig, McqSample};
use causalqa_core::prompts::{EmissionMode, TaskKind, TemplateSet, RATIONALE_INSTRUCTION};

fn fixture_sample() -> McqSample {
    let docs = load_corpus(concat!(env!("CARGO_MANIFEST_DIR"), "/testdata/corpus_small.json")).unwrap();
    build_train_sample(&docs[0], "e1", &BuilderConfig::default()).unwrap()
}

fn check(name: &str, rendered: &str) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("testdata/prompts").join(format!("{name}.txt"));
    if std::env::var_os("UPDATE_GOLDENS").is_some() {
        std::fs::write(&path, rendered).unwrap();
    }
    let golden = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(rendered, golden, "{name} drifted from its golden file");
}

#[test]
fn every_render_path_matches_its_golden() {
    let t = TemplateSet::default();
    let s = fixture_sample();
    check("qa", &t.render(TaskKind::Qa, &s, EmissionMode::Multitask).unwrap());
    check("rationale", &t.render(TaskKind::Rationale, &s, EmissionMode::Multitask).unwrap());
    check("ecg", &t.render(TaskKind::Ecg, &s, EmissionMode::Multitask).unwrap());
    check("qa_concat_r", &t.render(TaskKind::QaConcatR, &s, EmissionMode::Concat).unwrap());
    check("rationale_request", &t.render_rationale_request(&s, &s.gold_letters).unwrap());
}

#[test]
fn rationale_request_ends_with_instruction() {
    let t = TemplateSet::default();
    let s = fixture_sample();
    let req = t.render_rationale_request(&s, &s.gold_letters).unwrap();
    let instruction = RATIONALE_INSTRUCTION.replace("{answer}", &s.gold_string());
    assert!(req.ends_with(&instruction));
    assert!(req.ends_with("Please provide a reason for choosing this answer. No more than 50 words."));
}
