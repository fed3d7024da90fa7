//! Flat run configuration: defaults, then a TOML file, then `ALLOYGEN_<KEY>`
//! environment variables.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

pub const ENV_PREFIX: &str = "ALLOYGEN_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleKind {
    Surrogate,
    FileBridge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Element property CSV; the bundled table when unset.
    pub elements_path: Option<PathBuf>,
    /// Role CSV; the bundled table when unset.
    pub roles_path: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: u64,

    pub oracle: OracleKind,
    pub cache_dir: Option<PathBuf>,
    pub bridge_request_dir: Option<PathBuf>,
    pub bridge_response_dir: Option<PathBuf>,
    pub bridge_poll_ms: u64,
    pub bridge_timeout_s: u64,
    pub grid_step_k: f64,

    pub filter_min_frac: f64,
    pub volumes_per_pair: usize,
    pub volume_sampler: String,
    pub volume_mean: f64,
    pub volume_sd: f64,

    pub window: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub sft_lr: f64,
    pub sft_momentum: f64,
    pub sft_batch_size: usize,
    pub sft_epochs: usize,
    pub clip_norm: f64,

    pub sample_n: usize,
    pub temperature: f64,
    pub max_len: usize,
    pub max_attempts_factor: usize,
    pub workers: usize,

    pub beta: f64,
    pub top_frac: f64,
    pub rejected_per_chosen: usize,
    pub dpo_lr: f64,
    pub dpo_momentum: f64,
    pub dpo_batch_size: usize,
    pub dpo_steps: usize,

    pub unique_n: usize,
    pub coverage_delta: Option<f64>,
    pub novelty_delta: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            elements_path: None,
            roles_path: None,
            out_dir: PathBuf::from("run"),
            seed: 0,
            oracle: OracleKind::Surrogate,
            cache_dir: None,
            bridge_request_dir: None,
            bridge_response_dir: None,
            bridge_poll_ms: 200,
            bridge_timeout_s: 600,
            grid_step_k: 25.0,
            filter_min_frac: 0.99,
            volumes_per_pair: 3,
            volume_sampler: "normal".into(),
            volume_mean: 0.45,
            volume_sd: 0.15,
            window: 16,
            embed_dim: 16,
            hidden: 64,
            sft_lr: 0.3,
            sft_momentum: 0.9,
            sft_batch_size: 32,
            sft_epochs: 10,
            clip_norm: 5.0,
            sample_n: 500,
            temperature: 1.0,
            max_len: 96,
            max_attempts_factor: 20,
            workers: 0,
            beta: 0.5,
            top_frac: 0.25,
            rejected_per_chosen: 5,
            dpo_lr: 0.05,
            dpo_momentum: 0.9,
            dpo_batch_size: 32,
            dpo_steps: 200,
            unique_n: 100,
            coverage_delta: None,
            novelty_delta: None,
        }
    }
}

/// Parses an environment value as a TOML literal, falling back to a string.
fn env_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str::<toml::Table>(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => toml::Table::new(),
        };
        let known = toml::Table::try_from(RunConfig::default())?;
        let keys: Vec<String> = known.keys().cloned().chain(["elements_path", "roles_path", "cache_dir", "bridge_request_dir", "bridge_response_dir", "coverage_delta", "novelty_delta"].map(String::from)).collect();
        for key in keys {
            if let Ok(raw) = std::env::var(format!("{ENV_PREFIX}{}", key.to_ascii_uppercase())) {
                let value = match known.get(&key) {
                    Some(toml::Value::String(_)) => toml::Value::String(raw),
                    _ if key.ends_with("_path") || key.ends_with("_dir") => toml::Value::String(raw),
                    _ => env_value(&raw),
                };
                table.insert(key, value);
            }
        }
        for (key, value) in table.iter_mut() {
            let float_key = matches!(known.get(key), Some(toml::Value::Float(_))) || key.ends_with("_delta");
            if let (true, toml::Value::Integer(i)) = (float_key, &*value) {
                *value = toml::Value::Float(*i as f64);
            }
        }
        let cfg: RunConfig = toml::Value::Table(table).try_into().context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for p in [&self.elements_path, &self.roles_path].into_iter().flatten() {
            if !p.exists() {
                bail!("configured file {} does not exist", p.display());
            }
        }
        if !(self.beta > 0.0) {
            bail!("beta must be positive, got {}", self.beta);
        }
        if !(self.top_frac > 0.0 && self.top_frac <= 1.0) {
            bail!("top_frac must be in (0, 1], got {}", self.top_frac);
        }
        if !(self.temperature > 0.0) {
            bail!("temperature must be positive, got {}", self.temperature);
        }
        if !matches!(self.volume_sampler.as_str(), "normal" | "uniform") {
            bail!("volume_sampler must be normal or uniform, got {:?}", self.volume_sampler);
        }
        if self.oracle == OracleKind::FileBridge && (self.bridge_request_dir.is_none() || self.bridge_response_dir.is_none()) {
            bail!("the file-bridge oracle needs bridge_request_dir and bridge_response_dir");
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(toml::from_str::<RunConfig>(&text).unwrap(), cfg);
    }

    #[test]
    fn file_values_override_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "beta = 0.25\nsft_epochs = 2\ngrid_step_k = 50\n").unwrap();
        let cfg = RunConfig::load(Some(&path)).unwrap();
        assert_eq!(cfg.beta, 0.25);
        assert_eq!(cfg.sft_epochs, 2);
        assert_eq!(cfg.top_frac, 0.25);
        assert_eq!(cfg.grid_step_k, 50.0);
    }

    #[test]
    fn invalid_values_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "beta = 0.0\n").unwrap();
        assert!(RunConfig::load(Some(&path)).is_err());
        std::fs::write(&path, "not_a_key = 1\n").unwrap();
        assert!(RunConfig::load(Some(&path)).is_err());
    }

    #[test]
    fn env_literal_parsing() {
        assert_eq!(env_value("3"), toml::Value::Integer(3));
        assert_eq!(env_value("0.5"), toml::Value::Float(0.5));
        assert_eq!(env_value("surrogate"), toml::Value::String("surrogate".into()));
    }
}
