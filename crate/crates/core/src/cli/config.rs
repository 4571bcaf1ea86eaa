use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CliError;
use crate::hyperopt::ParamSpace;
use crate::ingest::IngestConfig;
use crate::regressors::ModelConfig;

fn default_seed() -> u64 {
    42
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StatsOptions {
    /// Fixed KDE bandwidth in dB; Scott's rule when absent.
    pub kde_bandwidth: Option<f64>,
    pub grid_points: usize,
    pub distance_bin_m: f64,
}

impl Default for StatsOptions {
    fn default() -> Self {
        Self {
            kde_bandwidth: None,
            grid_points: crate::stats::DEFAULT_GRID_POINTS,
            distance_bin_m: crate::stats::DEFAULT_DISTANCE_BIN_M,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImportanceOptions {
    /// Model whose permutation importance orders the feature sweep.
    pub model: Option<String>,
    pub n_repeats: usize,
}

impl Default for ImportanceOptions {
    fn default() -> Self {
        Self {
            model: None,
            n_repeats: 5,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepOptions {
    pub models: Vec<String>,
    pub sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperoptOptions {
    pub n_iter: usize,
    /// Per-model search spaces; built-in spaces otherwise.
    pub spaces: BTreeMap<String, ParamSpace>,
}

impl Default for HyperoptOptions {
    fn default() -> Self {
        Self {
            n_iter: 100,
            spaces: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportOptions {
    /// Runs the report must contain; missing ones make the report partial.
    pub expected: Vec<String>,
}

/// Run configuration file. Relative paths are resolved against the directory
/// holding the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub ingest: Option<IngestConfig>,
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    #[serde(default)]
    pub tbs_table: Option<PathBuf>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub models: BTreeMap<String, ModelConfig>,
    #[serde(default)]
    pub stats: StatsOptions,
    #[serde(default)]
    pub importance: ImportanceOptions,
    #[serde(default)]
    pub sweeps: SweepOptions,
    #[serde(default)]
    pub hyperopt: HyperoptOptions,
    #[serde(default)]
    pub report: ReportOptions,
}

/// A parsed configuration with the digest of its bytes.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub sha256: String,
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        let mut config: RunConfig = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        resolve(base, &mut config.output_dir);
        if let Some(p) = config.dataset.as_mut() {
            resolve(base, p);
        }
        if let Some(p) = config.tbs_table.as_mut() {
            resolve(base, p);
        }
        if let Some(ing) = config.ingest.as_mut() {
            ing.traces.iter_mut().for_each(|t| resolve(base, t));
            resolve(base, &mut ing.gps);
            if let Some(p) = ing.polygons.as_mut() {
                resolve(base, p);
            }
        }
        Ok(Self {
            config,
            sha256: hex::encode(Sha256::digest(&bytes)),
        })
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.config
            .dataset
            .clone()
            .unwrap_or_else(|| self.config.output_dir.join("dataset.csv"))
    }

    /// Checks that every input file named by the ingest section exists.
    pub fn validate_ingest(&self) -> Result<&IngestConfig, CliError> {
        let ing = self
            .config
            .ingest
            .as_ref()
            .ok_or_else(|| CliError::Usage("config has no `ingest` section".into()))?;
        let files = ing.traces.iter().chain(std::iter::once(&ing.gps)).chain(ing.polygons.iter());
        for f in files {
            if !f.is_file() {
                return Err(CliError::Usage(format!("input file {} does not exist", f.display())));
            }
        }
        Ok(ing)
    }
}
