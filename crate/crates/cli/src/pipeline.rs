//! Pipeline stages. Each reads its inputs from the output directory (or the
//! corpus), writes its artifacts there and records itself in the manifest.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use causalqa_core::corpus::{load_corpus, Document};
use causalqa_core::emitter::{emit_sft, gold_linearizations, write_jsonl, EmissionReport, EmitInputs};
use causalqa_core::inference::{aggregate, Pair, PairPredictionSet, PredictionRecord};
use causalqa_core::mcq::{build_split, McqSample, Mode};
use causalqa_core::scorer::{score, Metrics};
use causalqa_core::seeds::substream;
use causalqa_core::stats::{measure_corpus, CorpusMeasurement};
use causalqa_llm::runner::{collect_rationales, load_rationales, run_inference, RunStats};
use causalqa_llm::{ChatClient, MockOracle, Responder};
use rand::seq::SliceRandom;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::manifest::Manifest;

pub const SPLIT: &str = "split.json";
pub const TRAIN_MCQ: &str = "train_mcq.jsonl";
pub const TEST_MCQ: &str = "test_mcq.jsonl";
pub const RATIONALES: &str = "rationales.jsonl";
pub const SFT: &str = "sft.jsonl";
pub const SFT_REPORT: &str = "sft_report.json";
pub const PREDICTIONS: &str = "predictions.jsonl";
pub const PAIRS: &str = "pairs.jsonl";
pub const REPORT: &str = "report.json";
pub const STATS: &str = "stats.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub seed: u64,
    pub ratio: f64,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// Size of the training side: `floor(ratio * n)`, nudged so that binary
/// rounding of the product never drops a document.
pub fn train_count(n: usize, ratio: f64) -> usize {
    ((ratio * n as f64) + 1e-9).floor() as usize
}

/// Document-level seeded split; each side keeps corpus order.
pub fn split_documents(docs: &[Document], seed: u64, ratio: f64) -> Split {
    let mut idx: Vec<usize> = (0..docs.len()).collect();
    idx.shuffle(&mut substream(seed, &["split"]));
    let k = train_count(docs.len(), ratio);
    let (mut train, mut test) = (idx[..k].to_vec(), idx[k..].to_vec());
    train.sort_unstable();
    test.sort_unstable();
    let ids = |v: Vec<usize>| v.into_iter().map(|i| docs[i].doc_id().to_owned()).collect();
    Split { seed, ratio, train: ids(train), test: ids(test) }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), n + 1)))
        .collect()
}

/// Shared state of one invocation.
pub struct Run {
    pub cfg: RunConfig,
    pub mock_oracle: bool,
    pub resume: bool,
    manifest: Manifest,
}

impl Run {
    pub fn new(cfg: RunConfig, mock_oracle: bool, resume: bool) -> Result<Self> {
        cfg.validate()?;
        fs::create_dir_all(&cfg.output_dir).with_context(|| format!("creating {}", cfg.output_dir.display()))?;
        let manifest = Manifest::open(&cfg)?;
        Ok(Run { cfg, mock_oracle, resume, manifest })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.cfg.output_dir.join(name)
    }

    fn require(&self, name: &str, stage: &str) -> Result<PathBuf> {
        let p = self.path(name);
        if !p.exists() {
            bail!("{} not found; run `{stage}` first", p.display());
        }
        Ok(p)
    }

    fn corpus(&self) -> Result<Vec<Document>> {
        let path = self.cfg.corpus()?;
        load_corpus(path).with_context(|| format!("loading corpus {}", path.display()))
    }

    fn side(&self, docs: Vec<Document>, names: &[String]) -> Vec<Document> {
        let wanted: HashSet<&str> = names.iter().map(String::as_str).collect();
        docs.into_iter().filter(|d| wanted.contains(d.doc_id())).collect()
    }

    fn record<F: FnOnce() -> Result<()>>(&mut self, stage: &str, outputs: &[&str], work: F) -> Result<()> {
        let started = chrono::Utc::now();
        work()?;
        self.manifest.record(stage, started, outputs.iter().map(|s| s.to_string()).collect());
        self.manifest.save(&self.cfg)
    }

    pub fn split(&mut self) -> Result<Split> {
        let docs = self.corpus()?;
        let split = split_documents(&docs, self.cfg.split_seed, self.cfg.split_ratio);
        let path = self.path(SPLIT);
        self.record("split", &[SPLIT], || write_json(&path, &split))?;
        Ok(split)
    }

    pub fn build(&mut self) -> Result<(usize, usize)> {
        let split: Split = read_json(&self.require(SPLIT, "split")?)?;
        let docs = self.corpus()?;
        let builder = self.cfg.builder();
        let train = build_split(&self.side(docs.clone(), &split.train), Mode::Train, &builder)?;
        let test = build_split(&self.side(docs, &split.test), Mode::Test, &builder)?;
        let (tp, sp) = (self.path(TRAIN_MCQ), self.path(TEST_MCQ));
        self.record("build", &[TRAIN_MCQ, TEST_MCQ], || {
            write_jsonl(&tp, &train).with_context(|| format!("writing {}", tp.display()))?;
            write_jsonl(&sp, &test).with_context(|| format!("writing {}", sp.display()))?;
            Ok(())
        })?;
        Ok((train.len(), test.len()))
    }

    fn responder(&self, samples: &[McqSample], endpoint: &causalqa_llm::EndpointConfig) -> Result<Arc<dyn Responder>> {
        if self.mock_oracle {
            let docs = self.corpus()?;
            Ok(Arc::new(MockOracle::new(samples.to_vec(), &docs)))
        } else {
            Ok(Arc::new(ChatClient::new(endpoint.clone())?))
        }
    }

    pub fn rationales(&mut self) -> Result<RunStats> {
        let samples: Vec<McqSample> = read_jsonl(&self.require(TRAIN_MCQ, "build")?)?;
        let endpoint = self.cfg.rationale_endpoint().clone();
        let responder = self.responder(&samples, &endpoint)?;
        let templates = self.cfg.templates()?;
        let out = self.path(RATIONALES);
        let resume = self.resume;
        let mut stats = RunStats::default();
        self.record("rationales", &[RATIONALES], || {
            let rt = tokio::runtime::Runtime::new()?;
            let (_, s) = rt.block_on(collect_rationales(
                &samples,
                &templates,
                responder.as_ref(),
                endpoint.max_in_flight,
                &out,
                resume,
            ))?;
            stats = s;
            Ok(())
        })?;
        if !stats.failed_ids.is_empty() {
            tracing::warn!(count = stats.failed_ids.len(), "some rationale requests failed; rerun with --resume");
        }
        Ok(stats)
    }

    pub fn emit(&mut self) -> Result<EmissionReport> {
        let samples: Vec<McqSample> = read_jsonl(&self.require(TRAIN_MCQ, "build")?)?;
        let templates = self.cfg.templates()?;
        let rationale_path = self.path(RATIONALES);
        let rationales = if rationale_path.exists() { load_rationales(&rationale_path)? } else { BTreeMap::new() };
        let docs = self.corpus()?;
        let linearizations = gold_linearizations(&docs, &samples);
        let weights = self.cfg.weights.clone();
        let inputs = EmitInputs {
            samples: &samples,
            rationales: &rationales,
            linearizations: &linearizations,
            weights: &weights,
            mode: self.cfg.emission_mode,
            templates: &templates,
        };
        let (out, report_path) = (self.path(SFT), self.path(SFT_REPORT));
        let mut report = None;
        self.record("emit-sft", &[SFT, SFT_REPORT], || {
            let r = emit_sft(&inputs, &out)?;
            write_json(&report_path, &r)?;
            report = Some(r);
            Ok(())
        })?;
        Ok(report.expect("set on success"))
    }

    pub fn infer(&mut self) -> Result<(PairPredictionSet, RunStats)> {
        let samples: Vec<McqSample> = read_jsonl(&self.require(TEST_MCQ, "build")?)?;
        let endpoint = self.cfg.endpoint.clone();
        let responder = self.responder(&samples, &endpoint)?;
        let templates = self.cfg.templates()?;
        let expand = if self.cfg.coref_expansion { Some(self.corpus()?) } else { None };
        let (pred_path, pairs_path) = (self.path(PREDICTIONS), self.path(PAIRS));
        let resume = self.resume;
        let mut result = None;
        self.record("infer", &[PREDICTIONS, PAIRS], || {
            let rt = tokio::runtime::Runtime::new()?;
            let (records, stats): (Vec<PredictionRecord>, RunStats) = rt.block_on(run_inference(
                &samples,
                &templates,
                responder.as_ref(),
                endpoint.max_in_flight,
                &pred_path,
                resume,
            ))?;
            let pairs = aggregate(&records, &samples, expand.as_deref())?;
            let rows: Vec<&Pair> = pairs.iter().collect();
            write_jsonl(&pairs_path, &rows).with_context(|| format!("writing {}", pairs_path.display()))?;
            result = Some((pairs, stats));
            Ok(())
        })?;
        Ok(result.expect("set on success"))
    }

    /// Scores `pred` (default: the run's pairs) against `gold` (default: the
    /// configured corpus). With `test_only`, gold is limited to the split's
    /// test documents.
    pub fn score(&mut self, pred: Option<&Path>, gold: Option<&Path>, report: Option<&Path>, test_only: bool) -> Result<Metrics> {
        let pred_path = match pred {
            Some(p) => p.to_owned(),
            None => self.require(PAIRS, "infer")?,
        };
        let pairs: PairPredictionSet = read_jsonl::<Pair>(&pred_path)?.into_iter().collect();
        let mut docs = match gold {
            Some(g) => load_corpus(g).with_context(|| format!("loading gold {}", g.display()))?,
            None => self.corpus()?,
        };
        if test_only {
            let split: Split = read_json(&self.require(SPLIT, "split")?)?;
            docs = self.side(docs, &split.test);
        }
        let metrics = score(&pairs, &docs)?;
        let out = report.map_or_else(|| self.path(REPORT), Path::to_owned);
        let name = out.display().to_string();
        self.record("score", &[name.as_str()], || write_json(&out, &metrics))?;
        Ok(metrics)
    }

    pub fn corpus_stats(&mut self) -> Result<CorpusMeasurement> {
        let docs = self.corpus()?;
        let m = measure_corpus(&docs, &self.cfg.builder())?;
        let out = self.path(STATS);
        self.record("stats", &[STATS], || write_json(&out, &m))?;
        Ok(m)
    }

    /// split → build → rationales (if needed) → emit-sft → infer → score → stats.
    pub fn all(&mut self) -> Result<Metrics> {
        self.split()?;
        self.build()?;
        let needs_rationales = self.cfg.emission_mode == causalqa_core::prompts::EmissionMode::Concat
            || self.cfg.weights.is_active(causalqa_core::prompts::TaskKind::Rationale);
        if needs_rationales {
            let stats = self.rationales()?;
            if !stats.failed_ids.is_empty() {
                bail!("{} rationale request(s) failed: {}", stats.failed_ids.len(), stats.failed_ids.join(", "));
            }
        }
        self.emit()?;
        self.infer()?;
        let metrics = self.score(None, None, None, true)?;
        self.corpus_stats()?;
        Ok(metrics)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use causalqa_core::synth::{generate, SynthConfig};

    #[test]
    fn split_counts() {
        assert_eq!(train_count(10, 0.8), 8);
        assert_eq!(train_count(258, 0.8), 206);
        assert_eq!(258 - train_count(258, 0.8), 52);
        // 0.7 * 10 is 6.999... in binary
        assert_eq!(train_count(10, 0.7), 7);
    }

    #[test]
    fn split_is_seeded_and_disjoint() {
        let docs = generate(&SynthConfig { documents: 10, ..SynthConfig::default() });
        let a = split_documents(&docs, 3, 0.8);
        assert_eq!((a.train.len(), a.test.len()), (8, 2));
        assert_eq!(a, split_documents(&docs, 3, 0.8));
        let train: HashSet<&String> = a.train.iter().collect();
        assert!(a.test.iter().all(|d| !train.contains(d)));
        let others: Vec<Split> = (4..10).map(|s| split_documents(&docs, s, 0.8)).collect();
        assert!(others.iter().any(|s| s.test != a.test));
    }
}
