//! Multi-task SFT JSONL emission.
//!
//! Loss weights are not applied here; each record carries the weight of its
//! task and the fine-tuning side multiplies it into the per-record loss.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Document;
use crate::ecg::{build_ecg, linearize};
use crate::mcq::{McqSample, SpanKey};
use crate::prompts::{EmissionMode, PromptError, TaskKind, TemplateSet};

const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SftRecord {
    pub id: String,
    pub task: TaskKind,
    pub prompt: String,
    pub target: String,
    pub weight: f64,
}

/// Per-task loss weights over the active tasks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskWeights(pub BTreeMap<TaskKind, f64>);

impl TaskWeights {
    /// QA 0.5, rationale 0.25, ECG 0.25.
    pub fn three_task() -> Self {
        TaskWeights(BTreeMap::from([(TaskKind::Qa, 0.5), (TaskKind::Rationale, 0.25), (TaskKind::Ecg, 0.25)]))
    }

    /// QA 0.3, rationale 0.7.
    pub fn two_task() -> Self {
        TaskWeights(BTreeMap::from([(TaskKind::Qa, 0.3), (TaskKind::Rationale, 0.7)]))
    }

    pub fn is_active(&self, task: TaskKind) -> bool {
        self.0.contains_key(&task)
    }

    pub fn get(&self, task: TaskKind) -> Option<f64> {
        self.0.get(&task).copied()
    }

    pub fn validate(&self) -> Result<(), EmitError> {
        if self.0.is_empty() {
            return Err(EmitError::Weights("no active tasks".into()));
        }
        if self.is_active(TaskKind::QaConcatR) {
            return Err(EmitError::Weights("qa_concat_r is not a multitask task".into()));
        }
        if let Some((t, w)) = self.0.iter().find(|(_, w)| !(**w > 0.0 && **w <= 1.0)) {
            return Err(EmitError::Weights(format!("weight of {t} must lie in (0, 1], got {w}")));
        }
        let sum: f64 = self.0.values().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(EmitError::Weights(format!("weights sum to {sum}, expected 1")));
        }
        Ok(())
    }

    /// Parses `qa=0.5,rationale=0.25,ecg=0.25`.
    pub fn parse(spec: &str) -> Result<Self, EmitError> {
        let mut map = BTreeMap::new();
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (task, weight) = part
                .split_once('=')
                .ok_or_else(|| EmitError::Weights(format!("expected task=weight, got `{part}`")))?;
            let task: TaskKind = task.trim().parse().map_err(EmitError::Weights)?;
            let weight: f64 =
                weight.trim().parse().map_err(|_| EmitError::Weights(format!("bad weight in `{part}`")))?;
            if map.insert(task, weight).is_some() {
                return Err(EmitError::Weights(format!("task {task} listed twice")));
            }
        }
        let weights = TaskWeights(map);
        weights.validate()?;
        Ok(weights)
    }
}

impl Default for TaskWeights {
    fn default() -> Self {
        TaskWeights::three_task()
    }
}

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("invalid task weights: {0}")]
    Weights(String),
    #[error("missing rationales for {} sample(s): {}", .0.len(), .0.join(", "))]
    MissingRationales(Vec<String>),
    #[error("no linearized graph for span {0:?}")]
    MissingLinearization(SpanKey),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmissionReport {
    pub mode: EmissionMode,
    pub records: BTreeMap<TaskKind, usize>,
    pub total: usize,
}

pub struct EmitInputs<'a> {
    pub samples: &'a [McqSample],
    pub rationales: &'a BTreeMap<String, String>,
    pub linearizations: &'a BTreeMap<SpanKey, String>,
    pub weights: &'a TaskWeights,
    pub mode: EmissionMode,
    pub templates: &'a TemplateSet,
}

fn rationale_needed(inputs: &EmitInputs<'_>) -> bool {
    inputs.mode == EmissionMode::Concat || inputs.weights.is_active(TaskKind::Rationale)
}

/// Builds the records in emission order: samples in input order and, per
/// sample, QA then rationale then the ECG record of its span if that span
/// has not been emitted yet.
pub fn assemble_sft(inputs: &EmitInputs<'_>) -> Result<Vec<SftRecord>, EmitError> {
    if rationale_needed(inputs) {
        let missing: Vec<String> = inputs
            .samples
            .iter()
            .filter(|s| !inputs.rationales.contains_key(&s.sample_id))
            .map(|s| s.sample_id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(EmitError::MissingRationales(missing));
        }
    }
    let t = inputs.templates;
    let mut out = Vec::new();

    if inputs.mode == EmissionMode::Concat {
        for s in inputs.samples {
            out.push(SftRecord {
                id: s.sample_id.clone(),
                task: TaskKind::QaConcatR,
                prompt: t.render(TaskKind::QaConcatR, s, EmissionMode::Concat)?,
                target: format!("{}\n{}", s.gold_string(), inputs.rationales[&s.sample_id]),
                weight: 1.0,
            });
        }
        return Ok(out);
    }

    inputs.weights.validate()?;
    let mut spans_done = HashSet::new();
    for s in inputs.samples {
        for task in TaskKind::MULTITASK {
            let Some(weight) = inputs.weights.get(task) else { continue };
            let target = match task {
                TaskKind::Qa => s.gold_string(),
                TaskKind::Rationale => inputs.rationales[&s.sample_id].clone(),
                TaskKind::Ecg => {
                    let span = s.span();
                    if spans_done.contains(&span) {
                        continue;
                    }
                    let lin = inputs
                        .linearizations
                        .get(&span)
                        .ok_or_else(|| EmitError::MissingLinearization(span.clone()))?
                        .clone();
                    spans_done.insert(span);
                    lin
                }
                TaskKind::QaConcatR => unreachable!(),
            };
            out.push(SftRecord {
                id: s.sample_id.clone(),
                task,
                prompt: t.render(task, s, EmissionMode::Multitask)?,
                target,
                weight,
            });
        }
    }
    Ok(out)
}

/// Gold linearized graph of every distinct span of `samples` whose document
/// is in `docs`.
pub fn gold_linearizations(docs: &[Document], samples: &[McqSample]) -> BTreeMap<SpanKey, String> {
    let by_id: BTreeMap<&str, &Document> = docs.iter().map(|d| (d.doc_id(), d)).collect();
    let mut out = BTreeMap::new();
    for s in samples {
        let span = s.span();
        if out.contains_key(&span) {
            continue;
        }
        if let Some(doc) = by_id.get(span.doc_id.as_str()) {
            let g = build_ecg(doc, span.first_sentence..=span.last_sentence);
            out.insert(span, linearize(&g, doc).0);
        }
    }
    out
}

pub fn report_for(records: &[SftRecord], mode: EmissionMode) -> EmissionReport {
    let mut counts = BTreeMap::new();
    for r in records {
        *counts.entry(r.task).or_insert(0) += 1;
    }
    EmissionReport { mode, records: counts, total: records.len() }
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), std::io::Error> {
    let mut w = BufWriter::new(File::create(path)?);
    for row in rows {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Assembles the records and writes them as JSONL to `out`.
pub fn emit_sft(inputs: &EmitInputs<'_>, out: &Path) -> Result<EmissionReport, EmitError> {
    let records = assemble_sft(inputs)?;
    write_jsonl(out, &records).map_err(|source| EmitError::Io { path: out.to_owned(), source })?;
    Ok(report_for(&records, inputs.mode))
}
