//! Optional JSON configuration file. Flags override file values, file values
//! override built-in defaults. A run manifest is also accepted as a config
//! file, in which case its `config` snapshot is used.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use devnav_core::dataset::DEFAULT_MAX_DIFF;
use devnav_core::dynamic::DetectConfig;
use devnav_core::simulation::{SceneParams, SimConfig};
use serde::{Deserialize, Serialize};

pub const CONFIG_ENV: &str = "DEVNAV_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Seconds.
    pub max_diff: f64,
    pub delta: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            max_diff: DEFAULT_MAX_DIFF,
            delta: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanConfig {
    pub occupied_threshold: f64,
    /// Meters; obstacles are grown by this radius before search.
    pub inflate: f64,
    /// Meters per cell when the grid comes from an image.
    pub resolution: f64,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            occupied_threshold: 0.5,
            inflate: 0.0,
            resolution: 0.1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub eval: EvalConfig,
    pub detect: DetectConfig,
    pub plan: PlanConfig,
    pub sim: SimConfig,
    pub scene: SceneParams,
}

/// `explicit` wins over the environment variable; no file means defaults.
pub fn load(explicit: Option<&Path>) -> Result<FileConfig> {
    let path: Option<PathBuf> = explicit.map(Path::to_path_buf).or_else(|| {
        std::env::var_os(CONFIG_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
    });
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading config {}", path.display()))?;
    parse(&text).with_context(|| format!("parsing config {}", path.display()))
}

pub fn parse(text: &str) -> Result<FileConfig> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let section = match value.get("command") {
        Some(_) => value.get("config").cloned().context("manifest without config")?,
        None => value,
    };
    Ok(serde_json::from_value(section)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = parse(r#"{"detect": {"threshold1": 2.5}, "eval": {"delta": 3}}"#).unwrap();
        assert_eq!(cfg.detect.threshold1, 2.5);
        assert_eq!(cfg.detect.flow.max_corners, 1250);
        assert_eq!(cfg.eval.delta, 3);
        assert_eq!(cfg.sim, SimConfig::default());
    }

    #[test]
    fn manifest_snapshot_is_accepted() {
        let cfg = FileConfig {
            eval: EvalConfig {
                max_diff: 0.05,
                delta: 4,
            },
            ..FileConfig::default()
        };
        let manifest = serde_json::json!({"command": "eval-rpe", "config": cfg});
        assert_eq!(parse(&manifest.to_string()).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse(r#"{"detect": {"threshold3": 1}}"#).is_err());
        assert!(parse(r#"{"bogus": {}}"#).is_err());
    }
}
