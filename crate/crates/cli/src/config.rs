//! Run configs: JSON files checked against the schemas in `schemas/`, then
//! deserialized into typed records.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ensroll::ensemble::{RolloutMode, TrainConfig};
use ensroll::Split;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::Value;

pub const SCHEMA_VERSION: &str = "1";

/// Overrides `out_dir` in every config that has one.
pub const OUT_DIR_ENV: &str = "ER_OUT_DIR";

/// A config that failed to parse or validate. Maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Schema {
    GenData,
    Train,
    Rollout,
    Evaluate,
    Sweep,
    Report,
}

impl Schema {
    #[cfg(test)]
    pub const ALL: [Schema; 6] = [
        Schema::GenData,
        Schema::Train,
        Schema::Rollout,
        Schema::Evaluate,
        Schema::Sweep,
        Schema::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Schema::GenData => "gen-data",
            Schema::Train => "train",
            Schema::Rollout => "rollout",
            Schema::Evaluate => "evaluate",
            Schema::Sweep => "sweep",
            Schema::Report => "report",
        }
    }

    pub fn source(self) -> &'static str {
        match self {
            Schema::GenData => include_str!("../schemas/gen-data.schema.json"),
            Schema::Train => include_str!("../schemas/train.schema.json"),
            Schema::Rollout => include_str!("../schemas/rollout.schema.json"),
            Schema::Evaluate => include_str!("../schemas/evaluate.schema.json"),
            Schema::Sweep => include_str!("../schemas/sweep.schema.json"),
            Schema::Report => include_str!("../schemas/report.schema.json"),
        }
    }
}

/// Validates `instance` against `schema`, listing every violation.
pub fn validate(schema: Schema, instance: &Value) -> Result<()> {
    let raw: Value = serde_json::from_str(schema.source()).expect("bundled schemas are valid JSON");
    let compiled = jsonschema::JSONSchema::compile(&raw).expect("bundled schemas compile");
    if let Err(errors) = compiled.validate(instance) {
        let msgs: Vec<String> = errors
            .map(|e| {
                let at = e.instance_path.to_string();
                if at.is_empty() {
                    e.to_string()
                } else {
                    format!("{at}: {e}")
                }
            })
            .collect();
        return Err(config_error(format!(
            "{} config does not match its schema:\n  {}",
            schema.name(),
            msgs.join("\n  ")
        )));
    }
    Ok(())
}

/// Reads, schema-checks and deserializes a config file.
pub fn load<T: DeserializeOwned>(schema: Schema, path: &Path) -> Result<T> {
    let raw = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let value: Value =
        serde_json::from_str(&raw).map_err(|e| config_error(format!("{}: not valid JSON: {e}", path.display())))?;
    validate(schema, &value).with_context(|| path.display().to_string())?;
    serde_json::from_value(value).map_err(|e| config_error(format!("{}: {e}", path.display())))
}

/// Applies `ER_OUT_DIR` when set and non-empty.
pub fn resolve_out_dir(configured: PathBuf) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => configured,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum System {
    GrayScott,
    LoadPaths,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Square(usize),
    Rect([usize; 2]),
}

impl Grid {
    pub fn shape(self) -> (usize, usize) {
        match self {
            Grid::Square(n) => (n, n),
            Grid::Rect([nx, ny]) => (nx, ny),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Combo {
    pub f: f64,
    pub k: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadPathOptions {
    pub n_ctrl: Option<usize>,
    pub final_strain_low: Option<f64>,
    pub final_strain_high: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenDataConfig {
    pub schema_version: String,
    pub system: System,
    pub grid: Option<Grid>,
    #[serde(rename = "N_T")]
    pub n_t: usize,
    #[serde(default)]
    pub combos: Vec<Combo>,
    pub n_ic: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    #[serde(default = "default_split")]
    pub split: Split,
    #[serde(default)]
    pub load_path: LoadPathOptions,
}

fn default_split() -> Split {
    Split::Train
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelOverrides {
    pub base_channels: Option<usize>,
    pub depth: Option<usize>,
    pub d_t: Option<usize>,
    pub emb_out: Option<usize>,
    pub attn_grid: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRunConfig {
    pub schema_version: String,
    pub dataset_dir: PathBuf,
    pub out_dir: PathBuf,
    pub n_members: usize,
    pub history: usize,
    #[serde(default)]
    pub model: ModelOverrides,
    #[serde(default)]
    pub train: TrainConfig,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolloutConfig {
    pub schema_version: String,
    pub ensemble_dir: PathBuf,
    pub dataset_dir: PathBuf,
    pub out_dir: PathBuf,
    pub n_members: Option<usize>,
    #[serde(default)]
    pub mode: RolloutMode,
    #[serde(default = "default_max_plots")]
    pub max_plots: usize,
}

fn default_max_plots() -> usize {
    8
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateConfig {
    pub schema_version: String,
    pub ensemble_dir: PathBuf,
    pub dataset_dir: PathBuf,
    pub out_dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub schema_version: String,
    pub ensemble_dir: PathBuf,
    pub dataset_dir: PathBuf,
    pub out_dir: PathBuf,
    pub sizes: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    pub schema_version: String,
    pub run_dir: PathBuf,
}
