//! Run configuration shared by the CLI and the experiment harness.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mining::ParseParams;
use crate::retrieval::OverlapMode;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read config {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("bad config {path}: {reason}")]
    Parse { path: String, reason: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Flat, JSON-serializable run configuration. Field names mirror the CLI
/// flags; flags override file values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Target superpixels per image (R).
    pub superpixels: usize,
    /// Landmark regions per image (K).
    pub landmarks: usize,
    /// Scene descriptor length (L).
    pub descriptor_len: usize,
    /// VLAD codebook size.
    pub codebook_k: usize,
    /// SLIC compactness.
    pub compactness: f64,
    /// SLIC iterations.
    pub iterations: usize,
    /// Minimum keypoints for a landmark candidate region.
    pub min_keypoints: usize,
    /// Master seed for every random choice in a run.
    pub seed: u64,
    pub overlap_mode: OverlapMode,
    pub use_bb: bool,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            superpixels: 72,
            landmarks: 40,
            descriptor_len: 20,
            codebook_k: 16,
            compactness: 10.0,
            iterations: 10,
            min_keypoints: 5,
            seed: 0,
            overlap_mode: OverlapMode::Iou,
            use_bb: true,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let cfg: Config = serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.superpixels < 2 {
            return Err(ConfigError::Invalid("superpixels must be >= 2".into()));
        }
        if self.landmarks == 0 || self.descriptor_len == 0 {
            return Err(ConfigError::Invalid(
                "landmarks and descriptor_len must be positive".into(),
            ));
        }
        if self.codebook_k < 2 {
            return Err(ConfigError::Invalid("codebook_k must be >= 2".into()));
        }
        if self.iterations == 0 || self.min_keypoints == 0 {
            return Err(ConfigError::Invalid(
                "iterations and min_keypoints must be positive".into(),
            ));
        }
        if self.compactness <= 0.0 {
            return Err(ConfigError::Invalid("compactness must be positive".into()));
        }
        Ok(())
    }

    pub fn parse_params(&self) -> ParseParams {
        ParseParams {
            superpixels: self.superpixels,
            landmarks: self.landmarks,
            compactness: self.compactness,
            iterations: self.iterations,
            min_keypoints: self.min_keypoints,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_is_identical() {
        let mut cfg = Config::default();
        cfg.superpixels = 48;
        cfg.seed = 9;
        cfg.overlap_mode = OverlapMode::IntersectionArea;
        let json = cfg.to_json();
        let back: Config = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_json(), json);
    }

    #[test]
    fn partial_files_fill_defaults() {
        let cfg: Config = serde_json::from_str(r#"{"superpixels": 36}"#).unwrap();
        assert_eq!(cfg.superpixels, 36);
        assert_eq!(cfg.landmarks, Config::default().landmarks);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<Config>(r#"{"nope": 1}"#).is_err());
    }

    #[test]
    fn validation_catches_bad_counts() {
        let mut cfg = Config::default();
        cfg.codebook_k = 1;
        assert!(cfg.validate().is_err());
        let mut cfg = Config::default();
        cfg.descriptor_len = 0;
        assert!(cfg.validate().is_err());
    }
}
