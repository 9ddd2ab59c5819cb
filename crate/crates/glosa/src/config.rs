//! Run-level configuration: the scenario file tying together environment,
//! policy, trainer, and evaluation protocol, plus the config hash stamped
//! into every output file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::Method;
use crate::env::EnvConfig;
use crate::error::{GlosaError, Result};
use crate::nn::PolicyConfig;
use crate::ppo::TrainerConfig;

/// Everything one run needs. Loaded from a TOML scenario file; unknown
/// keys are hard errors so typos cannot silently fall back to defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub method: Method,
    /// Traffic demands (veh/h) evaluated in sequence.
    pub densities: Vec<f64>,
    /// Seeded episodes per density during evaluation.
    pub eval_repeats: u64,
    /// Master seed; per-repeat and per-episode seeds derive from it.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub env: EnvConfig,
    pub policy: PolicyConfig,
    pub trainer: TrainerConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: Method::AfGlosa,
            densities: vec![300.0, 1200.0, 2700.0],
            eval_repeats: 100,
            seed: 7,
            out_dir: PathBuf::from("out"),
            env: EnvConfig::default(),
            policy: PolicyConfig::default(),
            trainer: TrainerConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)
            .map_err(|e| GlosaError::Config(format!("scenario file: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            GlosaError::Config(format!("cannot read scenario file {}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.eval_repeats == 0 {
            return Err(GlosaError::Config("eval_repeats must be at least 1".into()));
        }
        if self.densities.is_empty() {
            return Err(GlosaError::Config("densities must not be empty".into()));
        }
        if self.densities.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(GlosaError::Config("densities must be finite and non-negative".into()));
        }
        self.env.validate()?;
        self.policy.validate()?;
        self.trainer.validate()?;
        Ok(())
    }

    /// Policy layout implied by the selected method.
    pub fn policy_for_method(&self) -> PolicyConfig {
        PolicyConfig { with_discrete: self.method.with_discrete(), ..self.policy.clone() }
    }

    /// Short digest of the effective configuration, stamped into output
    /// headers so results trace back to exact settings.
    pub fn config_hash(&self) -> String {
        let canonical = toml::to_string(self).expect("run config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Crate version, recorded next to the config hash in output headers.
pub fn code_version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}
