//! Command configuration documents. Each is one JSON object with a
//! versioned `schema` field; unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use pyroflux_core::coupling::{FuelRef, ScenarioConfig};
use pyroflux_core::surrogate::{MlpHyperparams, RfHyperparams};
use pyroflux_core::tga::{Ambient, DatasetGrid, FitOptions, TgaOptions};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::UsageError;

pub const SCHEMA_DATASET_BUILD: &str = "pyroflux.dataset-build/1";
pub const SCHEMA_DATASET_INGEST: &str = "pyroflux.dataset-ingest/1";
pub const SCHEMA_TRAIN: &str = "pyroflux.train/1";
pub const SCHEMA_EVALUATE: &str = "pyroflux.evaluate/1";
pub const SCHEMA_SIMULATE: &str = "pyroflux.simulate/1";
pub const SCHEMA_COMPARE: &str = "pyroflux.compare/1";

fn reference_mechanism() -> String {
    "builtin:reference".into()
}

/// A dataset grid whose fuels may be given by builtin name.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDoc {
    pub fuels: Vec<FuelRef>,
    pub betas: Vec<f64>,
    pub t_ranges: Vec<(f64, f64)>,
    pub pressures: Vec<f64>,
    pub ambients: Vec<Ambient>,
    #[serde(default)]
    pub jitter: f64,
    #[serde(default)]
    pub tga: TgaOptions,
    #[serde(default)]
    pub fit: FitOptions,
}

impl GridDoc {
    pub fn resolve(&self) -> Result<DatasetGrid, UsageError> {
        let fuels = self.fuels.iter().map(|f| f.resolve().map_err(UsageError::from)).collect::<Result<_, _>>()?;
        Ok(DatasetGrid {
            fuels,
            betas: self.betas.clone(),
            t_ranges: self.t_ranges.clone(),
            pressures: self.pressures.clone(),
            ambients: self.ambients.clone(),
            jitter: self.jitter,
            tga: self.tga,
            fit: self.fit.clone(),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetBuildDoc {
    pub schema: String,
    #[serde(default = "reference_mechanism")]
    pub mechanism: String,
    pub grid: GridDoc,
    /// Seeds the composition jitter.
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetIngestDoc {
    pub schema: String,
    /// Measured TGA-derived samples, CSV.
    pub input: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Rf,
    Mlp,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainDoc {
    pub schema: String,
    pub dataset: PathBuf,
    pub model: ModelKind,
    #[serde(default)]
    pub rf: RfHyperparams,
    #[serde(default)]
    pub mlp: MlpHyperparams,
    /// Share of EXPERIMENT samples held out. Unset means 0.2 when the
    /// dataset has experiments and no validation set otherwise.
    #[serde(default)]
    pub val_fraction: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Minimum validation R^2 per target name; a miss exits with status 1.
    #[serde(default)]
    pub gates: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateDoc {
    pub schema: String,
    pub model: PathBuf,
    pub dataset: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateDoc {
    pub schema: String,
    pub scenario: ScenarioConfig,
    /// Required when the scenario's kinetics mode is SURROGATE.
    #[serde(default)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareGates {
    pub min_outlet_r2: f64,
    pub max_volatile_rel_l2: f64,
    pub min_cost_ratio: f64,
    /// SURROGATE must finish in less wall time than ORACLE.
    pub require_speedup: bool,
}

impl Default for CompareGates {
    fn default() -> Self {
        Self { min_outlet_r2: 0.95, max_volatile_rel_l2: 0.1, min_cost_ratio: 10.0, require_speedup: true }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareDoc {
    pub schema: String,
    pub scenario: ScenarioConfig,
    pub model: PathBuf,
    #[serde(default)]
    pub gates: CompareGates,
}

/// Reads `path` as a `T`, checking its schema tag against `expected`.
pub fn load<T: DeserializeOwned>(path: &Path, expected: &str) -> Result<T, UsageError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| UsageError(format!("config {} is not valid JSON: {e}", path.display())))?;
    match value.get("schema").and_then(|s| s.as_str()) {
        Some(s) if s == expected => {}
        Some(s) => return Err(UsageError(format!("config schema `{s}` does not match `{expected}`"))),
        None => return Err(UsageError(format!("config is missing the `schema` field (expected `{expected}`)"))),
    }
    serde_json::from_value(value).map_err(|e| UsageError(format!("config {}: {e}", path.display())))
}

/// Resolves `p` against the directory holding the config file.
pub fn relative_to(config: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        return p.to_path_buf();
    }
    config.parent().map_or_else(|| p.to_path_buf(), |dir| dir.join(p))
}

/// Mechanism sources are `builtin:<name>` or a path relative to the config.
pub fn resolve_mechanism(config: &Path, source: &str) -> String {
    if source.starts_with("builtin:") {
        source.to_string()
    } else {
        relative_to(config, Path::new(source)).to_string_lossy().into_owned()
    }
}

pub fn require_file(p: &Path, what: &str) -> Result<(), UsageError> {
    if p.is_file() {
        Ok(())
    } else {
        Err(UsageError(format!("{what} {} does not exist", p.display())))
    }
}
