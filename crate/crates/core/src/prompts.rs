//! Prompt templates for the training tasks and the rationale request.
//!
//! Templates are plain strings with `{context}`, `{question}` and
//! `{options}` placeholders. Substitution is a single left-to-right pass, so
//! braces inside a document never expand.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mcq::McqSample;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Qa,
    Rationale,
    Ecg,
    QaConcatR,
}

impl TaskKind {
    pub const MULTITASK: [TaskKind; 3] = [TaskKind::Qa, TaskKind::Rationale, TaskKind::Ecg];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Qa => "qa",
            TaskKind::Rationale => "rationale",
            TaskKind::Ecg => "ecg",
            TaskKind::QaConcatR => "qa_concat_r",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "qa" => Ok(TaskKind::Qa),
            "rationale" => Ok(TaskKind::Rationale),
            "ecg" => Ok(TaskKind::Ecg),
            "qa_concat_r" => Ok(TaskKind::QaConcatR),
            other => Err(format!("unknown task `{other}`")),
        }
    }
}

/// How training records are laid out: one record per task, or the
/// answer-then-rationale concatenation used for ablations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmissionMode {
    #[default]
    Multitask,
    Concat,
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("task qa_concat_r is only available in concat emission mode")]
    ConcatOutsideConcatMode,
    #[error("rationale request needs at least one gold letter")]
    EmptyGold,
    #[error("template `{name}`: {message}")]
    BadTemplate { name: &'static str, message: String },
    #[error("cannot read templates from {path}: {message}")]
    Load { path: String, message: String },
}

const CONTEXT: &str = "{context}";
const QUESTION: &str = "{question}";
const OPTIONS: &str = "{options}";
const PROMPT: &str = "{prompt}";
const ANSWER: &str = "{answer}";

pub const RATIONALE_INSTRUCTION: &str = "The known answer to this question has been determined to be {answer}. Please provide a reason for choosing this answer. No more than 50 words.";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemplateSet {
    pub version: String,
    pub qa: String,
    pub rationale: String,
    pub ecg: String,
    pub qa_concat_r: String,
    /// Wraps a rendered QA prompt; `{prompt}` and `{answer}` placeholders.
    pub rationale_request: String,
}

impl Default for TemplateSet {
    fn default() -> Self {
        TemplateSet {
            version: "v1".into(),
            qa: "Answer the following multiple-choice question by listing the letters of all correct options.\n\n{context}\n{question}\n{options}".into(),
            rationale: "Explain the reasoning for the correct answer to the following question.\n\n{context}\n{question}\n{options}".into(),
            ecg: "List all coreference and causal relations between events in the following text.\n\n{context}\n{question}".into(),
            qa_concat_r: "Answer the following multiple-choice question by listing the letters of all correct options, then explain the reasoning for the answer.\n\n{context}\n{question}\n{options}".into(),
            rationale_request: format!("{{prompt}}\n{RATIONALE_INSTRUCTION}"),
        }
    }
}

fn count(haystack: &str, needle: &str) -> usize {
    haystack.matches(needle).count()
}

impl TemplateSet {
    pub fn validate(&self) -> Result<(), PromptError> {
        let bad = |name, message: String| Err(PromptError::BadTemplate { name, message });
        let checks: [(&'static str, &str, &[&str], &[&str]); 4] = [
            ("qa", &self.qa, &[CONTEXT, QUESTION, OPTIONS], &[]),
            ("rationale", &self.rationale, &[CONTEXT, QUESTION, OPTIONS], &[]),
            ("qa_concat_r", &self.qa_concat_r, &[CONTEXT, QUESTION, OPTIONS], &[]),
            ("ecg", &self.ecg, &[CONTEXT, QUESTION], &[OPTIONS]),
        ];
        for (name, template, required, forbidden) in checks {
            for p in required {
                let n = count(template, p);
                if n != 1 {
                    return bad(name, format!("{p} must appear exactly once, found {n}"));
                }
            }
            for p in forbidden {
                if template.contains(p) {
                    return bad(name, format!("{p} is not allowed"));
                }
            }
        }
        for p in [PROMPT, ANSWER] {
            let n = count(&self.rationale_request, p);
            if n != 1 {
                return bad("rationale_request", format!("{p} must appear exactly once, found {n}"));
            }
        }
        Ok(())
    }

    /// Reads a JSON object overriding any subset of the default templates.
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, PromptError> {
        let path = path.as_ref();
        let load = |message: String| PromptError::Load { path: path.display().to_string(), message };
        let text = std::fs::read_to_string(path).map_err(|e| load(e.to_string()))?;
        let set: TemplateSet = serde_json::from_str(&text).map_err(|e| load(e.to_string()))?;
        set.validate()?;
        Ok(set)
    }

    fn template(&self, task: TaskKind) -> &str {
        match task {
            TaskKind::Qa => &self.qa,
            TaskKind::Rationale => &self.rationale,
            TaskKind::Ecg => &self.ecg,
            TaskKind::QaConcatR => &self.qa_concat_r,
        }
    }

    pub fn render(&self, task: TaskKind, sample: &McqSample, mode: EmissionMode) -> Result<String, PromptError> {
        if task == TaskKind::QaConcatR && mode != EmissionMode::Concat {
            return Err(PromptError::ConcatOutsideConcatMode);
        }
        let options = render_options(sample);
        Ok(substitute(
            self.template(task),
            &[(CONTEXT, &sample.context.text), (QUESTION, &sample.question), (OPTIONS, &options)],
        ))
    }

    /// The QA prompt followed by the rationale instruction, naming the gold
    /// letters in alphabetical order.
    pub fn render_rationale_request(&self, sample: &McqSample, gold: &BTreeSet<char>) -> Result<String, PromptError> {
        if gold.is_empty() {
            return Err(PromptError::EmptyGold);
        }
        let prompt = self.render(TaskKind::Qa, sample, EmissionMode::Multitask)?;
        let answer: String = gold.iter().collect();
        Ok(substitute(&self.rationale_request, &[(PROMPT, &prompt), (ANSWER, &answer)]))
    }
}

pub fn render_options(sample: &McqSample) -> String {
    sample
        .options
        .iter()
        .map(|o| format!("{}: {}", o.letter, o.surface))
        .collect::<Vec<_>>()
        .join("\n")
}

fn substitute(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + values.iter().map(|(_, v)| v.len()).sum::<usize>());
    let mut rest = template;
    'scan: while !rest.is_empty() {
        if rest.starts_with('{') {
            for (key, value) in values {
                if let Some(tail) = rest.strip_prefix(key) {
                    out.push_str(value);
                    rest = tail;
                    continue 'scan;
                }
            }
        }
        let ch = rest.chars().next().unwrap();
        out.push(ch);
        rest = &rest[ch.len_utf8()..];
    }
    out
}
