//! Run configuration: TOML file, then command-line overrides.

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use storesim::agent::{CohortConfig, GuardrailConfig, HeuristicWeights};
use storesim::evaluation::{EvalConfig, SensitivityConfig};
use storesim::persona::{PersonaMode, PipelineConfig};
use storesim::remote::EndpointConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    #[default]
    Heuristic,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TextBackendKind {
    #[default]
    Deterministic,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub master_seed: u64,
    pub agents_per_shop: usize,
    pub trials: u32,
    pub policy: PolicyKind,
    pub text_backend: TextBackendKind,
    pub memory_enabled: bool,
    pub persona_mode: PersonaMode,
    /// Worker threads; 0 means available parallelism.
    pub workers: usize,
    pub guardrails: GuardrailConfig,
    pub endpoint: Option<EndpointConfig>,
    pub heuristic: HeuristicWeights,
    pub pipeline: PipelineConfig,
    pub eval: EvalConfig,
    pub sensitivity: SensitivityConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            master_seed: 0,
            agents_per_shop: 600,
            trials: 2,
            policy: PolicyKind::Heuristic,
            text_backend: TextBackendKind::Deterministic,
            memory_enabled: true,
            persona_mode: PersonaMode::FullPersona,
            workers: 0,
            guardrails: GuardrailConfig::default(),
            endpoint: None,
            heuristic: HeuristicWeights::default(),
            pipeline: PipelineConfig::default(),
            eval: EvalConfig::default(),
            sensitivity: SensitivityConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    /// Pushes the master seed into every seeded stage.
    pub fn seeded(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.master_seed = s;
        }
        self.pipeline.seed = self.master_seed;
        self.eval.seed = self.master_seed;
        self.sensitivity.seed = self.master_seed;
        self
    }

    pub fn cohort(&self) -> CohortConfig {
        CohortConfig {
            agents_per_shop: self.agents_per_shop,
            trials: self.trials,
            master_seed: self.master_seed,
            guardrails: self.guardrails,
            memory_enabled: self.memory_enabled,
            mode: self.persona_mode,
        }
    }

    pub fn endpoint(&self) -> Result<EndpointConfig> {
        self.endpoint
            .clone()
            .context("a remote backend was selected but the config has no [endpoint] table")
    }

    /// sha256 over the canonical JSON form of the effective config.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(&json))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
