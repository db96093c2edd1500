//! Run configuration: a single TOML file with nested sections, plus
//! command-line overrides for the common knobs. Secrets never live in the
//! file; endpoint auth tokens are read from the environment variables the
//! config names.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use collabvr::backends::http::EndpointConfig;
use collabvr::baselines::{PassKConfig, TpoConfig};
use collabvr::engine::EngineConfig;
use collabvr::metrics::PricingModel;
use collabvr::simworld::FaultConfig;

pub const MAX_PARALLELISM: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[clap(rename_all = "snake_case")]
pub enum Baseline {
    Collabvr,
    Single,
    PassK,
    Tpo,
}

/// Per-role backend choice: the grid-world oracle or a remote endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BackendChoice {
    Named(String),
    Http(EndpointConfig),
}

impl Default for BackendChoice {
    fn default() -> Self {
        BackendChoice::Named("sim".into())
    }
}

impl BackendChoice {
    pub fn endpoint(&self) -> Option<&EndpointConfig> {
        match self {
            BackendChoice::Http(e) => Some(e),
            BackendChoice::Named(_) => None,
        }
    }

    fn validate(&self, role: &str) -> Result<()> {
        match self {
            BackendChoice::Named(n) if n == "sim" => Ok(()),
            BackendChoice::Named(n) => bail!("unknown {role} backend {n:?}; use \"sim\" or an endpoint table"),
            BackendChoice::Http(_) => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendsConfig {
    pub planner: BackendChoice,
    pub verifier: BackendChoice,
    pub generator: BackendChoice,
    pub router: BackendChoice,
    pub selector: BackendChoice,
    pub critic: BackendChoice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub task_set_path: PathBuf,
    pub out_dir: PathBuf,
    pub baseline: Baseline,
    pub parallelism: usize,
    /// Overrides the task-set header's fault config when present.
    pub faults: Option<FaultConfig>,
    /// Overrides every task's rng seed (derived per index) when present.
    pub seed: Option<u64>,
    pub engine: EngineConfig,
    pub pass_k: PassKConfig,
    pub tpo: TpoConfig,
    pub pricing: PricingModel,
    pub backends: BackendsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task_set_path: PathBuf::from("tasks.jsonl"),
            out_dir: PathBuf::from("out"),
            baseline: Baseline::Collabvr,
            parallelism: 4,
            faults: None,
            seed: None,
            engine: EngineConfig::default(),
            pass_k: PassKConfig::new(4),
            tpo: TpoConfig::default(),
            pricing: PricingModel::default(),
            backends: BackendsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let cfg: RunConfig =
            toml::from_str(&text).with_context(|| format!("bad config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.task_set_path.exists() {
            bail!("task set {} does not exist", self.task_set_path.display());
        }
        if self.parallelism < 1 || self.parallelism > MAX_PARALLELISM {
            bail!("parallelism must be in 1..={MAX_PARALLELISM}");
        }
        if let Some(f) = &self.faults {
            f.validate().map_err(|e| anyhow::anyhow!(e))?;
        }
        self.pass_k.validate().map_err(|e| anyhow::anyhow!(e))?;
        self.tpo.validate().map_err(|e| anyhow::anyhow!(e))?;
        for (choice, role) in [
            (&self.backends.planner, "planner"),
            (&self.backends.verifier, "verifier"),
            (&self.backends.generator, "generator"),
            (&self.backends.router, "router"),
            (&self.backends.selector, "selector"),
            (&self.backends.critic, "critic"),
        ] {
            choice.validate(role)?;
        }
        Ok(())
    }

    /// Stable digest of the effective configuration, recorded in every trace
    /// header so reports can refuse to mix incompatible runs.
    pub fn config_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_toml_fills_defaults() {
        let cfg: RunConfig = toml::from_str("task_set_path = \"x.jsonl\"").unwrap();
        assert_eq!(cfg.baseline, Baseline::Collabvr);
        assert_eq!(cfg.engine.n_max, 3);
        assert_eq!(cfg.pass_k.k, 4);
        assert!(cfg.backends.planner.endpoint().is_none());
    }

    #[test]
    fn endpoint_backends_parse_from_tables() {
        let cfg: RunConfig = toml::from_str(
            r#"
task_set_path = "x.jsonl"
[backends.planner]
url = "http://localhost:9000/"
model_name = "remote-planner"
auth_token_env_var = "PLANNER_TOKEN"
"#,
        )
        .unwrap();
        let ep = cfg.backends.planner.endpoint().unwrap();
        assert_eq!(ep.model_name, "remote-planner");
        assert_eq!(ep.temperature, 0.2);
        assert_eq!(ep.auth_token_env_var.as_deref(), Some("PLANNER_TOKEN"));
    }

    #[test]
    fn hash_tracks_config_changes() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        assert_eq!(a.config_hash(), b.config_hash());
        b.engine.m_budget = 5;
        assert_ne!(a.config_hash(), b.config_hash());
    }
}
