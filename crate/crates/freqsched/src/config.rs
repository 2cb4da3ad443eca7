//! Experiment configuration files.
//!
//! One TOML document with sections mirroring the domain configs:
//! `[env]` (environment), `[agent]` (architecture; required for training),
//! `[train]`, `[mcs]` (optional ladder override), `[eval]`, `[bench]` and
//! `[finetune]`. Every field of every section has a default except
//! `agent.variant` and `finetune.checkpoint`, which the commands that need
//! them insist on. Unbounded values (`buffer_max_bits`, `snr_ce_db`) are
//! written as `inf`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::AgentSpec;
use crate::env::EnvConfig;
use crate::error::Error;
use crate::link::McsTable;
use crate::training::TrainConfig;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    /// Number of evaluation states fed identically to every policy.
    pub n_states: usize,
    /// Checkpoints to evaluate next to the built-in policies.
    pub checkpoints: Vec<PathBuf>,
    /// Include the uniform-random policy.
    pub include_random: bool,
    /// Include the exhaustive oracle (subject to the enumeration guard).
    pub include_oracle: bool,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            n_states: 1000,
            checkpoints: Vec::new(),
            include_random: true,
            include_oracle: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSettings {
    /// Timed greedy decisions per policy.
    pub n_runs: usize,
    /// Extra GNN message-passing depths to time (built fresh per depth).
    pub gnn_iteration_sweep: Vec<usize>,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            n_runs: 300,
            gnn_iteration_sweep: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneSettings {
    /// Source checkpoint to adapt from.
    pub checkpoint: Option<PathBuf>,
}

/// Everything a run needs, parsed from one file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub agent: Option<AgentSpec>,
    pub train: TrainConfig,
    pub mcs: McsTable,
    pub eval: EvalSettings,
    pub bench: BenchSettings,
    pub finetune: FinetuneSettings,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.train.validate()?;
        self.mcs.validate()?;
        if let Some(agent) = &self.agent {
            agent.validate()?;
        }
        if self.eval.n_states == 0 {
            return Err(Error::Config("eval.n_states must be positive".into()));
        }
        if self.bench.n_runs == 0 {
            return Err(Error::Config("bench.n_runs must be positive".into()));
        }
        Ok(())
    }

    /// The architecture section, required by train and finetune.
    pub fn require_agent(&self) -> Result<&AgentSpec> {
        self.agent
            .as_ref()
            .ok_or_else(|| Error::Config("missing [agent] section with key `variant`".into()))
    }
}

/// Parses a config document, mapping TOML diagnostics (which name the
/// offending key) onto configuration errors.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let config: ExperimentConfig =
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}
