//! `manifest.json`: the config, its hash, the code version and a timestamped
//! entry per executed stage.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::Command;

use anyhow::{Context, Result};
use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageEntry {
    pub started: String,
    pub finished: String,
    pub outputs: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub git_describe: String,
    pub tool_version: String,
    pub config: RunConfig,
    pub stages: BTreeMap<String, StageEntry>,
}

fn git_describe() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_owned())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

fn stamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn path(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir.join(MANIFEST)
}

impl Manifest {
    /// Continues the existing manifest when it was written under the same
    /// config; otherwise starts a fresh one.
    pub fn open(cfg: &RunConfig) -> Result<Self> {
        let hash = cfg.hash();
        let existing = std::fs::read_to_string(path(cfg))
            .ok()
            .and_then(|t| serde_json::from_str::<Manifest>(&t).ok())
            .filter(|m| m.config_hash == hash);
        Ok(existing.unwrap_or_else(|| Manifest {
            config_hash: hash,
            git_describe: git_describe(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config: cfg.clone(),
            stages: BTreeMap::new(),
        }))
    }

    pub fn record(&mut self, stage: &str, started: DateTime<Utc>, outputs: Vec<String>) {
        self.stages
            .insert(stage.to_owned(), StageEntry { started: stamp(started), finished: stamp(Utc::now()), outputs });
    }

    pub fn save(&self, cfg: &RunConfig) -> Result<()> {
        let p = path(cfg);
        std::fs::write(&p, serde_json::to_string_pretty(self)? + "\n").with_context(|| format!("writing {}", p.display()))
    }
}
