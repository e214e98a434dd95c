//! Argument parsing and subcommand dispatch.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use causalqa_core::corpus::{load_corpus, save_corpus, Document};
use causalqa_core::emitter::TaskWeights;
use causalqa_core::prompts::EmissionMode;
use causalqa_core::stats::{analytic_report, monte_carlo_p_test, StatsReport};
use causalqa_core::synth::{generate, LinkStructure, SynthConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::RunConfig;
use crate::pipeline::{Run, SPLIT};

#[derive(Debug, Parser)]
#[command(name = "causalqa", version, about = "Event causality identification as multiple-choice QA")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON run configuration; flags below override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Seed of every random choice (split, distractors, Monte Carlo).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub split_ratio: Option<f64>,
    /// Option-set size |D|, "None of the above" included.
    #[arg(long, global = true)]
    pub num_options: Option<usize>,
    #[arg(long, global = true)]
    pub min_distractors: Option<usize>,
    /// Task weights, e.g. `qa=0.5,rationale=0.25,ecg=0.25`.
    #[arg(long, global = true)]
    pub weights: Option<String>,
    #[arg(long, global = true, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, global = true)]
    pub templates: Option<PathBuf>,
    #[arg(long, global = true)]
    pub base_url: Option<String>,
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long, global = true)]
    pub api_key_env: Option<String>,
    #[arg(long, global = true)]
    pub max_in_flight: Option<usize>,
    #[arg(long, global = true)]
    pub timeout_ms: Option<u64>,
    #[arg(long, global = true)]
    pub max_retries: Option<u32>,
    /// Expand predicted pairs over coreference clusters.
    #[arg(long, global = true)]
    pub coref_expansion: bool,
    /// Answer from gold annotations instead of calling an endpoint.
    #[arg(long, global = true)]
    pub mock_oracle: bool,
    /// Skip samples already present in the output files.
    #[arg(long, global = true)]
    pub resume: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Multitask,
    Concat,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ScoreScope {
    /// Only the split's test documents.
    Test,
    /// Every document of the gold corpus.
    All,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rewrite a corpus as JSON (`.json`) or JSON Lines (`.jsonl`).
    Convert {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Check a corpus against the schema and its invariants.
    Validate,
    /// Seeded document-level train/test split.
    Split,
    /// Build training and test question samples.
    Build,
    /// Collect a rationale for every training sample.
    Rationales,
    /// Write the SFT records.
    EmitSft,
    /// Answer every test sample and aggregate predicted pairs.
    Infer,
    /// Score predicted pairs against gold links.
    Score {
        #[arg(long)]
        pred: Option<PathBuf>,
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Gold documents to score against. Defaults to `test` when a split
        /// exists and no `--gold` is given, else `all`.
        #[arg(long, value_enum)]
        split: Option<ScoreScope>,
    },
    /// Label-distribution analysis, analytic (`--n --x --d`) or measured on
    /// `--corpus`.
    Stats {
        #[arg(long)]
        n: Option<f64>,
        #[arg(long)]
        x: Option<f64>,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        mc_trials: Option<u64>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run every stage in order.
    All,
    /// Generate a synthetic corpus.
    Synth {
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 10)]
        documents: usize,
        #[arg(long, default_value_t = 10)]
        events_min: usize,
        #[arg(long, default_value_t = 20)]
        events_max: usize,
        #[arg(long, default_value_t = 0.15)]
        link_prob: f64,
        #[arg(long, default_value_t = 8)]
        max_distance: usize,
        #[arg(long, default_value_t = 0.2)]
        coref_rate: f64,
        /// Link this many events per document into a clique instead.
        #[arg(long)]
        clique: Option<usize>,
    },
}

impl GlobalArgs {
    pub fn run_config(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($field:expr, $value:expr) => {
                if let Some(v) = $value.clone() {
                    $field = v;
                }
            };
        }
        if self.corpus.is_some() {
            c.corpus_path = self.corpus.clone();
        }
        set!(c.output_dir, self.output_dir);
        set!(c.split_seed, self.seed);
        set!(c.split_ratio, self.split_ratio);
        set!(c.num_options, self.num_options);
        set!(c.min_distractors, self.min_distractors);
        if let Some(w) = &self.weights {
            c.weights = TaskWeights::parse(w)?;
        }
        if let Some(m) = self.mode {
            c.emission_mode = match m {
                ModeArg::Multitask => EmissionMode::Multitask,
                ModeArg::Concat => EmissionMode::Concat,
            };
        }
        if self.templates.is_some() {
            c.templates_path = self.templates.clone();
        }
        set!(c.endpoint.base_url, self.base_url);
        set!(c.endpoint.model, self.model);
        if self.api_key_env.is_some() {
            c.endpoint.api_key_env = self.api_key_env.clone();
        }
        set!(c.endpoint.max_in_flight, self.max_in_flight);
        set!(c.endpoint.timeout_ms, self.timeout_ms);
        set!(c.endpoint.max_retries, self.max_retries);
        c.coref_expansion |= self.coref_expansion;
        Ok(c)
    }
}

/// A closed stdout (e.g. piped into `head`) is not an error.
fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{}", serde_json::to_string_pretty(value)?) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

#[derive(Serialize)]
struct CorpusSummary {
    documents: usize,
    events: usize,
    coref_clusters: usize,
    causal_links: usize,
    intra_sentence_links: usize,
    inter_sentence_links: usize,
}

fn summarize(docs: &[Document]) -> CorpusSummary {
    let links = docs.iter().flat_map(|d| d.causal_links().iter().map(move |l| (d, l)));
    let intra = links.clone().filter(|(d, l)| d.sentence_of(l.cause.as_str()) == d.sentence_of(l.effect.as_str())).count();
    let total = links.count();
    CorpusSummary {
        documents: docs.len(),
        events: docs.iter().map(|d| d.events().len()).sum(),
        coref_clusters: docs.iter().map(|d| d.coref_clusters().len()).sum(),
        causal_links: total,
        intra_sentence_links: intra,
        inter_sentence_links: total - intra,
    }
}

fn convert(input: &Path, output: &Path) -> Result<()> {
    let docs = load_corpus(input)?;
    if output.extension().is_some_and(|e| e == "jsonl") {
        let mut text = String::new();
        for d in &docs {
            text.push_str(&serde_json::to_string(&d.to_raw())?);
            text.push('\n');
        }
        std::fs::write(output, text).with_context(|| format!("writing {}", output.display()))?;
    } else {
        save_corpus(output, &docs)?;
    }
    eprintln!("wrote {} documents to {}", docs.len(), output.display());
    Ok(())
}

#[derive(Serialize)]
struct MonteCarlo {
    trials: u64,
    seed: u64,
    estimate: f64,
    standard_error: f64,
    deviation: f64,
}

#[derive(Serialize)]
struct AnalyticOutput {
    #[serde(flatten)]
    report: StatsReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    monte_carlo: Option<MonteCarlo>,
}

pub fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Convert { input, output } => convert(&input, &output),
        Command::Validate => {
            let cfg = g.run_config()?;
            let path = cfg.corpus()?;
            let docs = load_corpus(path).with_context(|| format!("validating {}", path.display()))?;
            print_json(&summarize(&docs))
        }
        Command::Synth { output, documents, events_min, events_max, link_prob, max_distance, coref_rate, clique } => {
            if events_min == 0 || events_max < events_min {
                bail!("need 1 <= events_min <= events_max");
            }
            let structure = match clique {
                Some(related) => LinkStructure::Clique { related },
                None => LinkStructure::Random { link_prob, max_distance },
            };
            let docs = generate(&SynthConfig {
                documents,
                events_min,
                events_max,
                structure,
                coref_rate,
                seed: g.seed.unwrap_or(0),
                ..SynthConfig::default()
            });
            save_corpus(&output, &docs)?;
            print_json(&summarize(&docs))
        }
        Command::Stats { n: Some(n), x, d, mc_trials, report } => {
            let x = x.context("--x is required with --n")?;
            let d = d.unwrap_or(g.num_options.unwrap_or(5));
            let analytic = analytic_report(n, x, d)?;
            let monte_carlo = match mc_trials {
                Some(trials) => {
                    if n.fract() != 0.0 || x.fract() != 0.0 {
                        bail!("Monte Carlo needs whole-number --n and --x");
                    }
                    let seed = g.seed.unwrap_or(0);
                    let estimate = monte_carlo_p_test(n as usize, x as usize, d, trials, seed)?;
                    let p = analytic.p_test;
                    Some(MonteCarlo {
                        trials,
                        seed,
                        estimate,
                        standard_error: (p * (1.0 - p) / trials as f64).sqrt(),
                        deviation: estimate - p,
                    })
                }
                None => None,
            };
            let out = AnalyticOutput { report: analytic, monte_carlo };
            if let Some(path) = report {
                std::fs::write(&path, serde_json::to_string_pretty(&out)? + "\n")
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            print_json(&out)
        }
        Command::Stats { n: None, .. } => {
            let mut run = Run::new(g.run_config()?, false, false)?;
            print_json(&run.corpus_stats()?)
        }
        Command::Split => {
            let mut run = Run::new(g.run_config()?, g.mock_oracle, g.resume)?;
            let s = run.split()?;
            eprintln!("split: {} train / {} test documents", s.train.len(), s.test.len());
            Ok(())
        }
        Command::Build => {
            let mut run = Run::new(g.run_config()?, g.mock_oracle, g.resume)?;
            let (train, test) = run.build()?;
            eprintln!("built {train} training and {test} test samples");
            Ok(())
        }
        Command::Rationales => {
            let mut run = Run::new(g.run_config()?, g.mock_oracle, g.resume)?;
            let stats = run.rationales()?;
            eprintln!(
                "rationales: {} requested, {} already present, {} failed",
                stats.requested,
                stats.skipped,
                stats.failed_ids.len()
            );
            if !stats.failed_ids.is_empty() {
                bail!("rationale requests failed for: {}", stats.failed_ids.join(", "));
            }
            Ok(())
        }
        Command::EmitSft => {
            let mut run = Run::new(g.run_config()?, g.mock_oracle, g.resume)?;
            print_json(&run.emit()?)
        }
        Command::Infer => {
            let mut run = Run::new(g.run_config()?, g.mock_oracle, g.resume)?;
            let (pairs, stats) = run.infer()?;
            eprintln!(
                "infer: {} requested, {} already present, {} failed, {} predicted pairs",
                stats.requested,
                stats.skipped,
                stats.failed_ids.len(),
                pairs.len()
            );
            Ok(())
        }
        Command::Score { pred, gold, report, split } => {
            let mut run = Run::new(g.run_config()?, g.mock_oracle, g.resume)?;
            let test_only = match split {
                Some(ScoreScope::Test) => true,
                Some(ScoreScope::All) => false,
                None => gold.is_none() && run.path(SPLIT).exists(),
            };
            let m = run.score(pred.as_deref(), gold.as_deref(), report.as_deref(), test_only)?;
            print_json(&m)
        }
        Command::All => {
            let mut run = Run::new(g.run_config()?, g.mock_oracle, g.resume)?;
            let m = run.all()?;
            print_json(&m)
        }
    }
}
