//! Experiment configuration files (strict JSON, one experiment per file).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::schedule::{ModelConfig, ModelError};

/// Laws rejected up front: no exponential moment, so the bound cannot apply.
const HEAVY_TAILED: [&str; 5] = ["pareto", "lognormal", "log_normal", "weibull", "cauchy"];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("law `{0}` is heavy-tailed (no finite exponential moment); the exponential bound does not apply")]
    HeavyTailed(String),
    #[error("invalid model: {0}")]
    Model(#[from] ModelError),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSettings {
    /// Lattice pitch; inferred from the increment atoms when absent.
    #[serde(default)]
    pub pitch: Option<f64>,
    #[serde(default = "default_oracle_horizon")]
    pub n_max: usize,
    /// Depth of the lower cutoff in pitch units; automatic when absent.
    #[serde(default)]
    pub lower_cutoff: Option<u64>,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self {
            pitch: None,
            n_max: default_oracle_horizon(),
            lower_cutoff: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    #[serde(default)]
    pub csv: Option<PathBuf>,
    #[serde(default)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub x_grid: Vec<f64>,
    #[serde(default = "default_horizon")]
    pub horizon_n: usize,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub delta_override: Option<f64>,
    #[serde(default)]
    pub delta_grid_search: bool,
    /// Multiplier (>= 1) on the truncated-moment surrogate.
    #[serde(default = "default_scale")]
    pub surrogate_scale: f64,
    /// Enables certified early abandonment with this bias bound.
    #[serde(default)]
    pub abandon_epsilon: Option<f64>,
    #[serde(default)]
    pub oracle: OracleSettings,
    #[serde(default)]
    pub output: OutputPaths,
}

fn default_horizon() -> usize {
    10_000
}
fn default_trials() -> u64 {
    100_000
}
fn default_workers() -> usize {
    1
}
fn default_scale() -> f64 {
    1.0
}
fn default_oracle_horizon() -> usize {
    5_000
}

fn find_heavy_tailed(v: &Value) -> Option<String> {
    match v {
        Value::Object(map) => {
            if let Some(Value::String(t)) = map.get("type") {
                if HEAVY_TAILED.contains(&t.to_ascii_lowercase().as_str()) {
                    return Some(t.clone());
                }
            }
            map.values().find_map(find_heavy_tailed)
        }
        Value::Array(items) => items.iter().find_map(find_heavy_tailed),
        _ => None,
    }
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self, ConfigError> {
        let raw: Value = serde_json::from_str(s)?;
        if let Some(law) = find_heavy_tailed(&raw) {
            return Err(ConfigError::HeavyTailed(law));
        }
        let cfg: Self = serde_json::from_value(raw)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model.validate()?;
        let invalid = |msg: String| Err(ConfigError::Invalid(msg));
        if let Some(x) = self.x_grid.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return invalid(format!("x_grid entries must be finite and >= 0, got {x}"));
        }
        if self.horizon_n == 0 {
            return invalid("horizon_n must be >= 1".into());
        }
        if self.trials == 0 {
            return invalid("trials must be >= 1".into());
        }
        if self.workers == 0 {
            return invalid("workers must be >= 1".into());
        }
        if !(self.surrogate_scale.is_finite() && self.surrogate_scale >= 1.0) {
            return invalid(format!("surrogate_scale must be >= 1, got {}", self.surrogate_scale));
        }
        if let Some(e) = self.abandon_epsilon {
            if !(e > 0.0 && e < 1.0) {
                return invalid(format!("abandon_epsilon must lie in (0, 1), got {e}"));
            }
        }
        if let Some(d) = self.delta_override {
            if !(d > 0.0 && d <= self.model.gamma) {
                return invalid(format!("delta_override must lie in (0, gamma], got {d}"));
            }
        }
        if self.oracle.n_max == 0 {
            return invalid("oracle.n_max must be >= 1".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "model": {
            "premium": 2.0,
            "gamma": 0.5,
            "schedule": {"cycle": [{"claim": {"type": "exponential", "rate": 1.0},
                                     "inter": {"type": "exponential", "rate": 1.0}}]}
        },
        "x_grid": [0, 1, 2, 5]
    }"#;

    #[test]
    fn defaults() {
        let c = ExperimentConfig::from_json_str(BASE).unwrap();
        assert_eq!(c.horizon_n, 10_000);
        assert_eq!(c.workers, 1);
        assert_eq!(c.surrogate_scale, 1.0);
        assert!(c.model.schedule.prefix.is_empty());
        assert_eq!(c.oracle.n_max, 5000);
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = BASE.replacen("\"x_grid\"", "\"x_gird\"", 1);
        assert!(matches!(ExperimentConfig::from_json_str(&bad), Err(ConfigError::Parse(_))));
        let bad = BASE.replacen("\"rate\": 1.0}", "\"rate\": 1.0, \"scale\": 2}", 1);
        assert!(matches!(ExperimentConfig::from_json_str(&bad), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn heavy_tails_rejected() {
        let bad = BASE.replacen(r#"{"type": "exponential", "rate": 1.0}"#, r#"{"type": "pareto", "alpha": 2.5}"#, 1);
        assert!(matches!(
            ExperimentConfig::from_json_str(&bad),
            Err(ConfigError::HeavyTailed(t)) if t == "pareto"
        ));
    }

    #[test]
    fn value_checks() {
        let bad = BASE.replacen("[0, 1, 2, 5]", "[0, -1]", 1);
        assert!(matches!(ExperimentConfig::from_json_str(&bad), Err(ConfigError::Invalid(_))));
        let bad = BASE.replacen("\"premium\": 2.0", "\"premium\": 0.0", 1);
        assert!(matches!(ExperimentConfig::from_json_str(&bad), Err(ConfigError::Model(_))));
    }
}
