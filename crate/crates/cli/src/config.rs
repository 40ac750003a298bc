//! Experiment configuration: TOML (canonical) or JSON input.

use std::path::{Path, PathBuf};

use driftlab_core::environment::EnvSpec;
use driftlab_core::functional::FunctionalDesc;
use driftlab_core::regeneration::RegenMode;
use driftlab_core::sde::Scheme;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid TOML config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid JSON config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown experiment `{0}`; see `driftlab list`")]
    UnknownExperiment(String),
    #[error("experiment `{experiment}` needs `{key}`")]
    Missing { experiment: String, key: &'static str },
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
    #[error("experiment `{experiment}` does not use `{key}`")]
    UnusedKey { experiment: String, key: &'static str },
}

/// One experiment run. Keys an experiment does not use must be absent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_paths: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_cycles: Option<usize>,
    /// Time step of the integrator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<Scheme>,
    /// Cells per side of the torus grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regen_mode: Option<RegenMode>,
    /// Censoring horizon in units of `λ⁻²`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_cens_factor: Option<f64>,
    /// Total integrator steps allowed before giving up.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<u64>,
    pub env: EnvSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub functional: Option<FunctionalDesc>,
}

impl ExperimentConfig {
    pub fn new(experiment: &str, seed: u64, env: EnvSpec) -> Self {
        ExperimentConfig {
            experiment: experiment.to_string(),
            seed,
            output_dir: None,
            lambda: None,
            lambda_grid: None,
            horizon: None,
            horizon_grid: None,
            n_paths: None,
            n_cycles: None,
            step: None,
            scheme: None,
            grid_n: None,
            alpha_grid: None,
            eps: None,
            delta: None,
            regen_mode: None,
            h_cens_factor: None,
            max_steps: None,
            env,
            functional: None,
        }
    }

    /// Parses TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        if text.trim_start().starts_with('{') {
            Ok(serde_json::from_str(text)?)
        } else {
            Ok(toml::from_str(text)?)
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    /// Canonical TOML text; parsing it back yields the same text.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical text without the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        hex::encode(Sha256::digest(c.to_toml().as_bytes()))
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("out").join(&self.experiment))
    }

    pub fn req<T: Copy>(&self, value: Option<T>, key: &'static str) -> Result<T, ConfigError> {
        value.ok_or_else(|| ConfigError::Missing { experiment: self.experiment.clone(), key })
    }

    pub fn req_vec<'a>(&'a self, value: &'a Option<Vec<f64>>, key: &'static str) -> Result<&'a [f64], ConfigError> {
        value.as_deref().ok_or_else(|| ConfigError::Missing { experiment: self.experiment.clone(), key })
    }

    pub fn functional(&self) -> FunctionalDesc {
        self.functional.clone().unwrap_or(FunctionalDesc::DriftComponent)
    }

    /// Names of the optional experiment keys that are set.
    pub fn present_keys(&self) -> Vec<&'static str> {
        let set = [
            ("lambda", self.lambda.is_some()),
            ("lambda_grid", self.lambda_grid.is_some()),
            ("horizon", self.horizon.is_some()),
            ("horizon_grid", self.horizon_grid.is_some()),
            ("n_paths", self.n_paths.is_some()),
            ("n_cycles", self.n_cycles.is_some()),
            ("step", self.step.is_some()),
            ("scheme", self.scheme.is_some()),
            ("grid_n", self.grid_n.is_some()),
            ("alpha_grid", self.alpha_grid.is_some()),
            ("eps", self.eps.is_some()),
            ("delta", self.delta.is_some()),
            ("regen_mode", self.regen_mode.is_some()),
            ("h_cens_factor", self.h_cens_factor.is_some()),
            ("max_steps", self.max_steps.is_some()),
            ("functional", self.functional.is_some()),
        ];
        set.iter().filter(|(_, on)| *on).map(|(k, _)| *k).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = r#"experiment = "mc_vs_pde_drift"
seed = 7
lambda = 0.05
horizon = 4000.0
n_paths = 200
step = 0.01

[env]
kind = "periodic"
dim = 1

[env.a11]
mean = 2.0
reciprocal = false

[[env.a11.terms]]
k = [1]
cos = 0.0
sin = 1.0
"#;

    #[test]
    fn canonical_text_round_trips() {
        let cfg = ExperimentConfig::parse(TEXT).unwrap();
        assert_eq!(cfg.lambda, Some(0.05));
        let canon = cfg.to_toml();
        assert_eq!(ExperimentConfig::parse(&canon).unwrap().to_toml(), canon);
        assert_eq!(canon, TEXT);
    }

    #[test]
    fn json_is_accepted() {
        let cfg = ExperimentConfig::parse(TEXT).unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::parse(&json).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = TEXT.replace("seed = 7", "seed = 7\nsed = 8");
        assert!(matches!(ExperimentConfig::parse(&bad), Err(ConfigError::Toml(_))));
        let bad_env = TEXT.replace("dim = 1", "dim = 1\nradius = 2.0");
        assert!(ExperimentConfig::parse(&bad_env).is_err());
    }

    #[test]
    fn hash_ignores_output_dir() {
        let mut cfg = ExperimentConfig::parse(TEXT).unwrap();
        let h = cfg.hash();
        cfg.output_dir = Some("/tmp/x".into());
        assert_eq!(cfg.hash(), h);
        cfg.seed = 8;
        assert_ne!(cfg.hash(), h);
        assert_eq!(h.len(), 64);
    }
}
