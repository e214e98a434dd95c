//! Resumable batch runs over samples with incremental JSONL persistence.
//!
//! Each finished request is appended and flushed before the next result is
//! taken, so a crash loses at most the requests still in flight. With
//! `resume` set, sample ids already present in the output file are skipped.
//! A completed run leaves the file in sample order.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use causalqa_core::inference::{parse_answer, PredictionRecord};
use causalqa_core::mcq::McqSample;
use causalqa_core::prompts::{EmissionMode, PromptError, TaskKind, TemplateSet};
use futures::stream::{self, StreamExt};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oracle::{correlation_id, RequestKind};
use crate::{ClientError, CompletionRequest, CompletionResult, Responder};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("max_in_flight must be at least 1")]
    Concurrency,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStats {
    /// Samples already present in the output file.
    pub skipped: usize,
    /// Samples sent to the responder in this run.
    pub requested: usize,
    pub failed_ids: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RationaleRecord {
    pub sample_id: String,
    pub rationale: String,
}

trait Keyed {
    fn key(&self) -> &str;
}

impl Keyed for PredictionRecord {
    fn key(&self) -> &str {
        &self.sample_id
    }
}

impl Keyed for RationaleRecord {
    fn key(&self) -> &str {
        &self.sample_id
    }
}

struct Sink {
    path: PathBuf,
    file: File,
}

impl Sink {
    fn io(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
        move |source| RunError::Io { path: path.to_owned(), source }
    }

    /// Opens `path`, keeping the parseable records for `wanted` ids when
    /// resuming. A torn final line from an interrupted run is dropped.
    fn open<T: Serialize + DeserializeOwned + Keyed>(
        path: &Path,
        resume: bool,
        wanted: &HashSet<&str>,
    ) -> Result<(Sink, Vec<T>), RunError> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(Sink::io(path))?;
        }
        let mut kept: Vec<T> = Vec::new();
        if resume && path.exists() {
            let reader = BufReader::new(File::open(path).map_err(Sink::io(path))?);
            let mut seen = HashSet::new();
            for (n, line) in reader.lines().enumerate() {
                let line = line.map_err(Sink::io(path))?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<T>(&line) {
                    Ok(r) if wanted.contains(r.key()) && seen.insert(r.key().to_owned()) => kept.push(r),
                    Ok(r) => tracing::warn!(id = r.key(), "dropping stale or repeated record"),
                    Err(e) => tracing::warn!(line = n + 1, error = %e, "dropping unreadable record"),
                }
            }
        }
        let mut file = File::create(path).map_err(Sink::io(path))?;
        for r in &kept {
            writeln!(file, "{}", serde_json::to_string(r).expect("record serializes")).map_err(Sink::io(path))?;
        }
        file.flush().map_err(Sink::io(path))?;
        drop(file);
        let file = OpenOptions::new().append(true).open(path).map_err(Sink::io(path))?;
        Ok((Sink { path: path.to_owned(), file }, kept))
    }

    /// Rewrites the file with `records` in the given order so finished runs
    /// do not depend on completion order.
    fn finish<T: Serialize>(self, records: &[T]) -> Result<(), RunError> {
        drop(self.file);
        let tmp = self.path.with_extension("jsonl.tmp");
        let mut text = String::new();
        for r in records {
            text.push_str(&serde_json::to_string(r).expect("record serializes"));
            text.push('\n');
        }
        fs::write(&tmp, text).map_err(Sink::io(&tmp))?;
        fs::rename(&tmp, &self.path).map_err(Sink::io(&self.path))
    }

    fn append<T: Serialize>(&mut self, record: &T) -> Result<(), RunError> {
        let line = serde_json::to_string(record).expect("record serializes");
        writeln!(self.file, "{line}").map_err(Sink::io(&self.path))?;
        self.file.flush().map_err(Sink::io(&self.path))
    }
}

async fn run_jobs<T, F>(
    jobs: Vec<(String, CompletionRequest)>,
    responder: &dyn Responder,
    max_in_flight: usize,
    sink: &mut Sink,
    mut finish: F,
) -> Result<Vec<T>, RunError>
where
    T: Serialize,
    F: FnMut(&str, Result<CompletionResult, ClientError>) -> Option<T>,
{
    if max_in_flight == 0 {
        return Err(RunError::Concurrency);
    }
    let mut results = stream::iter(jobs)
        .map(|(id, req)| async move {
            let result = responder.complete(&req).await;
            (id, result)
        })
        .buffer_unordered(max_in_flight);
    let mut out = Vec::new();
    while let Some((id, result)) = results.next().await {
        if let Some(record) = finish(&id, result) {
            sink.append(&record)?;
            out.push(record);
        }
    }
    Ok(out)
}

/// One QA completion per sample. Endpoint failures become `fallback_none`
/// records and the run continues. Records come back in sample order.
pub async fn run_inference(
    samples: &[McqSample],
    templates: &TemplateSet,
    responder: &dyn Responder,
    max_in_flight: usize,
    out: &Path,
    resume: bool,
) -> Result<(Vec<PredictionRecord>, RunStats), RunError> {
    let wanted: HashSet<&str> = samples.iter().map(|s| s.sample_id.as_str()).collect();
    let (mut sink, existing) = Sink::open::<PredictionRecord>(out, resume, &wanted)?;
    let done: HashSet<String> = existing.iter().map(|r| r.sample_id.clone()).collect();
    let by_id: HashMap<&str, &McqSample> = samples.iter().map(|s| (s.sample_id.as_str(), s)).collect();

    let mut jobs = Vec::new();
    for s in samples.iter().filter(|s| !done.contains(&s.sample_id)) {
        let prompt = templates.render(TaskKind::Qa, s, EmissionMode::Multitask)?;
        let req = CompletionRequest { prompt, correlation_id: Some(correlation_id(RequestKind::Qa, &s.sample_id)) };
        jobs.push((s.sample_id.clone(), req));
    }
    let mut stats = RunStats { skipped: done.len(), requested: jobs.len(), failed_ids: Vec::new() };
    let fresh = run_jobs(jobs, responder, max_in_flight, &mut sink, |id, result| {
        let sample = by_id[id];
        Some(match result {
            Ok(r) => parse_answer(&r.text, sample),
            Err(e) => {
                tracing::warn!(sample = id, error = %e, "completion failed; recording None of the above");
                stats.failed_ids.push(id.to_owned());
                PredictionRecord::fallback(sample, "")
            }
        })
    })
    .await?;

    let mut all: HashMap<String, PredictionRecord> =
        existing.into_iter().chain(fresh).map(|r| (r.sample_id.clone(), r)).collect();
    let ordered: Vec<PredictionRecord> = samples.iter().filter_map(|s| all.remove(&s.sample_id)).collect();
    sink.finish(&ordered)?;
    stats.failed_ids.sort();
    Ok((ordered, stats))
}

/// Asks for a rationale of every sample's gold answer. Failed samples are
/// left out of the file and listed in the stats.
pub async fn collect_rationales(
    samples: &[McqSample],
    templates: &TemplateSet,
    responder: &dyn Responder,
    max_in_flight: usize,
    out: &Path,
    resume: bool,
) -> Result<(BTreeMap<String, String>, RunStats), RunError> {
    let wanted: HashSet<&str> = samples.iter().map(|s| s.sample_id.as_str()).collect();
    let (mut sink, existing) = Sink::open::<RationaleRecord>(out, resume, &wanted)?;
    let done: HashSet<String> = existing.iter().map(|r| r.sample_id.clone()).collect();

    let mut jobs = Vec::new();
    for s in samples.iter().filter(|s| !done.contains(&s.sample_id)) {
        let prompt = templates.render_rationale_request(s, &s.gold_letters)?;
        let req = CompletionRequest { prompt, correlation_id: Some(correlation_id(RequestKind::Rationale, &s.sample_id)) };
        jobs.push((s.sample_id.clone(), req));
    }
    let mut stats = RunStats { skipped: done.len(), requested: jobs.len(), failed_ids: Vec::new() };
    let fresh = run_jobs(jobs, responder, max_in_flight, &mut sink, |id, result| match result {
        Ok(r) => Some(RationaleRecord { sample_id: id.to_owned(), rationale: r.text.trim().to_owned() }),
        Err(e) => {
            tracing::warn!(sample = id, error = %e, "rationale request failed");
            stats.failed_ids.push(id.to_owned());
            None
        }
    })
    .await?;
    stats.failed_ids.sort();
    let mut all: HashMap<String, RationaleRecord> =
        existing.into_iter().chain(fresh).map(|r| (r.sample_id.clone(), r)).collect();
    let ordered: Vec<RationaleRecord> = samples.iter().filter_map(|s| all.remove(&s.sample_id)).collect();
    sink.finish(&ordered)?;
    let map = ordered.into_iter().map(|r| (r.sample_id, r.rationale)).collect();
    Ok((map, stats))
}

/// Reads a rationale JSONL file into a map.
pub fn load_rationales(path: &Path) -> Result<BTreeMap<String, String>, RunError> {
    let text = fs::read_to_string(path).map_err(Sink::io(path))?;
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let r: RationaleRecord = serde_json::from_str(line).map_err(|e| RunError::Io {
            path: path.to_owned(),
            source: io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", n + 1)),
        })?;
        out.insert(r.sample_id, r.rationale);
    }
    Ok(out)
}
