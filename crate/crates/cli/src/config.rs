use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use causalqa_core::emitter::TaskWeights;
use causalqa_core::mcq::BuilderConfig;
use causalqa_core::prompts::{EmissionMode, TemplateSet};
use causalqa_llm::EndpointConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Everything a run depends on besides the corpus contents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus_path: Option<PathBuf>,
    pub split_seed: u64,
    pub split_ratio: f64,
    pub num_options: usize,
    pub min_distractors: usize,
    pub weights: TaskWeights,
    pub emission_mode: EmissionMode,
    pub templates_path: Option<PathBuf>,
    /// Model under evaluation.
    pub endpoint: EndpointConfig,
    /// Model asked for rationales; `endpoint` when unset.
    pub rationale_endpoint: Option<EndpointConfig>,
    /// Replace predicted endpoints by their coreference clusters.
    pub coref_expansion: bool,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus_path: None,
            split_seed: 0,
            split_ratio: 0.8,
            num_options: 5,
            min_distractors: 3,
            weights: TaskWeights::three_task(),
            emission_mode: EmissionMode::Multitask,
            templates_path: None,
            endpoint: EndpointConfig::default(),
            rationale_endpoint: None,
            coref_expansion: false,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            bail!("split_ratio must lie strictly between 0 and 1, got {}", self.split_ratio);
        }
        if self.emission_mode == EmissionMode::Multitask {
            self.weights.validate()?;
        }
        self.endpoint.validate()?;
        if let Some(e) = &self.rationale_endpoint {
            e.validate()?;
        }
        Ok(())
    }

    pub fn builder(&self) -> BuilderConfig {
        BuilderConfig { num_options: self.num_options, min_distractors: self.min_distractors, seed: self.split_seed }
    }

    pub fn templates(&self) -> Result<TemplateSet> {
        match &self.templates_path {
            Some(p) => Ok(TemplateSet::from_json_file(p)?),
            None => Ok(TemplateSet::default()),
        }
    }

    pub fn corpus(&self) -> Result<&Path> {
        self.corpus_path.as_deref().context("no corpus given; pass --corpus or set corpus_path in the config")
    }

    pub fn rationale_endpoint(&self) -> &EndpointConfig {
        self.rationale_endpoint.as_ref().unwrap_or(&self.endpoint)
    }

    /// sha256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        assert_eq!((c.split_ratio, c.num_options, c.min_distractors), (0.8, 5, 3));
        assert_eq!(c.weights, TaskWeights::three_task());
        c.validate().unwrap();
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"split_seed": 7, "weights": {"qa": 0.3, "rationale": 0.7}}"#).unwrap();
        assert_eq!(c.split_seed, 7);
        assert_eq!(c.weights, TaskWeights::two_task());
        c.validate().unwrap();
        assert!(serde_json::from_str::<RunConfig>(r#"{"unknown": 1}"#).is_err());
    }

    #[test]
    fn bad_values_rejected() {
        for c in [
            RunConfig { split_ratio: 1.0, ..RunConfig::default() },
            RunConfig { split_ratio: 0.0, ..RunConfig::default() },
            RunConfig { weights: TaskWeights::parse("qa=0.5").unwrap_or(TaskWeights(Default::default())), ..RunConfig::default() },
        ] {
            assert!(c.validate().is_err());
        }
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let b = RunConfig { split_seed: 1, ..RunConfig::default() };
        assert_eq!(a.hash(), RunConfig::default().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
