//! Run configuration: one JSON document with a section per component.
//! Every section and field is optional and falls back to the defaults.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bench::GenConfig;
use crate::design_space::{SpaceSpec, SpaceSpecFile};
use crate::llm::RetryPolicy;
use crate::lumina::LuminaConfig;
use crate::optimizers::OptimizerConfig;
use crate::perf_model::{CalibrationConstants, Evaluator};
use crate::workload::{ModelConfig, Scenario};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed config {path}: {source}")]
    Parse { path: String, source: serde_json::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Live-model client settings. Credentials come from the environment only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub timeout_s: u64,
    pub max_retries: u32,
    pub base_delay_ms: u64,
    /// Write every exchange (credentials redacted) to `llm_log.jsonl` in the run directory.
    pub log_exchanges: bool,
}

impl Default for LlmConfig {
    fn default() -> Self {
        let r = RetryPolicy::default();
        LlmConfig { timeout_s: 60, max_retries: r.max_retries, base_delay_ms: r.base_delay_ms, log_exchanges: true }
    }
}

impl LlmConfig {
    pub fn retry(&self) -> RetryPolicy {
        RetryPolicy { max_retries: self.max_retries, base_delay_ms: self.base_delay_ms }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_s.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub space: SpaceSpecFile,
    pub model: ModelConfig,
    pub scenario: Scenario,
    pub calibration: CalibrationConstants,
    pub optimizer: OptimizerConfig,
    pub lumina: LuminaConfig,
    pub llm: LlmConfig,
    pub bench: GenConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            space: SpaceSpec::default_lattice().to_file(),
            model: ModelConfig::default(),
            scenario: Scenario::default(),
            calibration: CalibrationConstants::default(),
            optimizer: OptimizerConfig::default(),
            lumina: LuminaConfig::default(),
            llm: LlmConfig::default(),
            bench: GenConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: shown.clone(), source })?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|source| ConfigError::Parse { path: shown, source })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The file at `path`, or the defaults when no path is given.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self, ConfigError> {
        path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.space()?;
        self.model.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.scenario.batch == 0 || self.scenario.seq_len == 0 {
            return Err(ConfigError::Invalid("scenario batch and seq_len must be positive".into()));
        }
        Ok(())
    }

    pub fn space(&self) -> Result<SpaceSpec, ConfigError> {
        SpaceSpec::from_file(self.space.clone()).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Evaluator for the configured workload, normalized to the space's
    /// reference design.
    pub fn evaluator(&self) -> Result<Evaluator, ConfigError> {
        let space = self.space()?;
        let (prefill, decode) = self.scenario.build(&self.model).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(Evaluator::new(prefill, decode, self.calibration, self.model.elem_bytes as f64, space.reference()))
    }

    /// First 16 hex digits of the SHA-256 of the calibration section.
    pub fn calibration_hash(&self) -> String {
        let json = serde_json::to_string(&self.calibration).expect("calibration serializes");
        Sha256::digest(json.as_bytes()).iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"lumina": {"patience": 9}, "scenario": {"batch": 4}}"#).unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.lumina.patience, 9);
        assert_eq!(cfg.lumina.smoothing, 0.5);
        assert_eq!(cfg.scenario.batch, 4);
        assert_eq!(cfg.scenario.seq_len, 2048);
        assert_eq!(cfg.space().unwrap(), SpaceSpec::default_lattice());
    }

    #[test]
    fn default_evaluator_matches_reference() {
        let ev = RunConfig::default().evaluator().unwrap();
        let m = ev.metrics(&SpaceSpec::default_lattice().reference());
        assert_eq!(m.normalized(), [1.0, 1.0, 1.0]);
    }

    #[test]
    fn bad_files_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, "{not json").unwrap();
        assert!(matches!(RunConfig::load(&path), Err(ConfigError::Parse { .. })));
        std::fs::write(&path, r#"{"scenario": {"batch": 0}}"#).unwrap();
        assert!(matches!(RunConfig::load(&path), Err(ConfigError::Invalid(_))));
        assert!(matches!(RunConfig::load(&dir.path().join("missing.json")), Err(ConfigError::Io { .. })));
    }

    #[test]
    fn hash_tracks_calibration() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.calibration.clock_hz *= 1.01;
        assert_ne!(a.calibration_hash(), b.calibration_hash());
        assert_eq!(a.calibration_hash().len(), 16);
    }
}
