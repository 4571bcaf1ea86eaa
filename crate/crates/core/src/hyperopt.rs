//! Seeded random search over model hyperparameters, scored by
//! cross-validated goodput.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::evaluation::{evaluate_model, ModelSpec};
use crate::goodput::TbsTable;
use crate::ingest::Dataset;
use crate::regressors::{ModelConfig, ModelKind};
use crate::seed;

#[derive(Debug, Error)]
pub enum HyperoptError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("all {0} trials failed")]
    AllFailed(usize),
}

/// A sampled parameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Float(f64),
    Text(String),
}

impl ParamValue {
    fn to_json(&self) -> Value {
        match self {
            ParamValue::Int(v) => Value::from(*v),
            ParamValue::Float(v) => Value::from(*v),
            ParamValue::Text(v) => Value::from(v.clone()),
        }
    }

    fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Int(v) => Some(*v as f64),
            ParamValue::Float(v) => Some(*v),
            ParamValue::Text(_) => None,
        }
    }
}

/// Sampling distribution of one parameter. Integer ranges are half-open:
/// `int_uniform {lo: 3, hi: 4}` always yields 3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    Uniform { lo: f64, hi: f64 },
    LogUniform { lo: f64, hi: f64 },
    IntUniform { lo: i64, hi: i64 },
    Choice(Vec<ParamValue>),
}

impl Distribution {
    pub fn validate(&self, name: &str) -> Result<(), HyperoptError> {
        let bad = |why: &str| Err(HyperoptError::Config(format!("parameter {name}: {why}")));
        match self {
            Distribution::Uniform { lo, hi } if !(lo < hi) || !lo.is_finite() || !hi.is_finite() => bad("needs lo < hi"),
            Distribution::LogUniform { lo, hi } if !(*lo > 0.0 && lo < hi && hi.is_finite()) => bad("needs 0 < lo < hi"),
            Distribution::IntUniform { lo, hi } if lo >= hi => bad("needs lo < hi"),
            Distribution::Choice(v) if v.is_empty() => bad("empty choice list"),
            _ => Ok(()),
        }?;
        if name == TAU {
            let inside = |v: f64| v > 0.0 && v < 1.0;
            let ok = match self {
                Distribution::Uniform { lo, hi } | Distribution::LogUniform { lo, hi } => inside(*lo) && *hi <= 1.0,
                Distribution::IntUniform { .. } => false,
                Distribution::Choice(v) => v.iter().all(|p| p.as_f64().is_some_and(inside)),
            };
            if !ok {
                return bad("quantile must lie in (0, 1)");
            }
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut impl Rng) -> ParamValue {
        match self {
            Distribution::Uniform { lo, hi } => ParamValue::Float(rng.gen_range(*lo..*hi)),
            Distribution::LogUniform { lo, hi } => ParamValue::Float(rng.gen_range(lo.ln()..hi.ln()).exp()),
            Distribution::IntUniform { lo, hi } => ParamValue::Int(rng.gen_range(*lo..*hi)),
            Distribution::Choice(v) => v[rng.gen_range(0..v.len())].clone(),
        }
    }
}

pub type ParamSpace = BTreeMap<String, Distribution>;
pub type ParamMap = BTreeMap<String, ParamValue>;

/// Quantile of the pinball loss.
pub const TAU: &str = "tau";
/// Number of hidden layers; widths come from `width_1`, `width_2`, ….
pub const N_LAYERS: &str = "n_layers";

pub fn validate_space(space: &ParamSpace) -> Result<(), HyperoptError> {
    space.iter().try_for_each(|(k, d)| d.validate(k))
}

/// One draw per entry, in name order.
pub fn sample_config(space: &ParamSpace, rng: &mut impl Rng) -> ParamMap {
    space.iter().map(|(k, d)| (k.clone(), d.sample(rng))).collect()
}

fn set_path(obj: &mut Value, path: &str, value: Value) -> Result<(), HyperoptError> {
    let mut cur = obj;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let map = cur
            .as_object_mut()
            .ok_or_else(|| HyperoptError::Config(format!("parameter {path}: not an object at {part}")))?;
        if !map.contains_key(*part) {
            return Err(HyperoptError::Config(format!("unknown parameter {path}")));
        }
        if i + 1 == parts.len() {
            map.insert((*part).to_string(), value);
            return Ok(());
        }
        cur = map.get_mut(*part).expect("checked");
    }
    Ok(())
}

/// Overrides fields of `base` with sampled values. Keys are field paths such
/// as `max_depth` or `adam.learning_rate`; `tau` sets a quantile loss and
/// `n_layers` with `width_k` sets the hidden layers.
pub fn apply_params(base: &ModelConfig, params: &ParamMap) -> Result<ModelConfig, HyperoptError> {
    let mut value = serde_json::to_value(base).map_err(|e| HyperoptError::Config(e.to_string()))?;
    let mut widths: BTreeMap<usize, Value> = BTreeMap::new();
    let mut n_layers = None;
    for (k, v) in params {
        if k == TAU {
            let tau = v.as_f64().ok_or_else(|| HyperoptError::Config("tau must be numeric".into()))?;
            set_path(&mut value, "loss", serde_json::json!({ "quantile": tau }))?;
        } else if k == N_LAYERS {
            n_layers = Some(match v {
                ParamValue::Int(n) if *n >= 0 => *n as usize,
                _ => return Err(HyperoptError::Config("n_layers must be a non-negative integer".into())),
            });
        } else if let Some(idx) = k.strip_prefix("width_").and_then(|s| s.parse::<usize>().ok()) {
            widths.insert(idx, v.to_json());
        } else {
            set_path(&mut value, k, v.to_json())?;
        }
    }
    if let Some(n) = n_layers {
        let hidden = (1..=n)
            .map(|i| {
                widths
                    .get(&i)
                    .cloned()
                    .ok_or_else(|| HyperoptError::Config(format!("n_layers = {n} but width_{i} is not sampled")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        set_path(&mut value, "hidden", Value::Array(hidden))?;
    } else if !widths.is_empty() {
        return Err(HyperoptError::Config("width_k parameters need n_layers".into()));
    }
    serde_json::from_value(value).map_err(|e| HyperoptError::Config(format!("invalid sampled configuration: {e}")))
}

fn uniform(lo: f64, hi: f64) -> Distribution {
    Distribution::Uniform { lo, hi }
}

fn log_uniform(lo: f64, hi: f64) -> Distribution {
    Distribution::LogUniform { lo, hi }
}

/// Integers `lo..=hi`.
fn int_inclusive(lo: i64, hi: i64) -> Distribution {
    Distribution::IntUniform { lo, hi: hi + 1 }
}

/// Built-in search space for a model family with `d` features.
pub fn default_space(kind: ModelKind, d: usize) -> ParamSpace {
    let mut s = ParamSpace::new();
    s.insert(TAU.into(), uniform(0.05, 0.5));
    match kind {
        ModelKind::Linear => {
            s.insert("sgd.learning_rate".into(), log_uniform(1e-3, 0.3));
            s.insert("sgd.lr_decay".into(), uniform(0.0, 0.5));
            s.insert("sgd.epochs".into(), int_inclusive(10, 100));
        }
        ModelKind::Gbt => {
            s.insert("n_rounds".into(), int_inclusive(50, 500));
            s.insert("learning_rate".into(), log_uniform(0.01, 0.3));
            s.insert("max_depth".into(), int_inclusive(2, 8));
            s.insert("subsample".into(), uniform(0.5, 1.0));
        }
        ModelKind::Qrf => {
            s.insert("n_trees".into(), int_inclusive(50, 300));
            s.insert("max_depth".into(), int_inclusive(4, 20));
            s.insert("min_leaf".into(), int_inclusive(1, 50));
            s.insert("mtry".into(), int_inclusive(1, d.max(1) as i64));
        }
        ModelKind::Mlp => {
            s.insert(N_LAYERS.into(), int_inclusive(1, 3));
            for i in 1..=3 {
                s.insert(
                    format!("width_{i}"),
                    Distribution::Choice([16, 32, 64, 128].into_iter().map(ParamValue::Int).collect()),
                );
            }
            s.insert(
                "activation".into(),
                Distribution::Choice(
                    ["relu", "tanh", "sigmoid"]
                        .into_iter()
                        .map(|a| ParamValue::Text(a.into()))
                        .collect(),
                ),
            );
            s.insert("l1".into(), log_uniform(1e-6, 1e-2));
            s.insert("l2".into(), log_uniform(1e-6, 1e-2));
            s.insert("adam.learning_rate".into(), log_uniform(1e-4, 1e-2));
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub params: ParamMap,
    pub config: Option<ModelConfig>,
    /// `None` when the trial failed.
    pub score_bps: Option<f64>,
    pub error: Option<String>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: TrialResult,
    pub trials: Vec<TrialResult>,
}

pub fn trial_seed(master: u64, trial: usize) -> u64 {
    seed::substream(master, "hyperopt-trial", trial as u64)
}

fn run_trial(
    dataset: &Dataset,
    base: &ModelConfig,
    space: &ParamSpace,
    table: &TbsTable,
    master_seed: u64,
    trial: usize,
) -> TrialResult {
    let params = sample_config(space, &mut seed::rng(master_seed, "hyperopt-sample", trial as u64));
    let seed = trial_seed(master_seed, trial);
    let outcome = apply_params(base, &params).map_err(|e| e.to_string()).and_then(|config| {
        evaluate_model(dataset, &ModelSpec::Model(config.clone()), table, seed)
            .map(|r| (config, r.aggregate_bps))
            .map_err(|e| e.to_string())
    });
    match outcome {
        Ok((config, score)) => TrialResult {
            trial,
            params,
            config: Some(config),
            score_bps: Some(score),
            error: None,
            seed,
        },
        Err(e) => {
            log::warn!("trial {trial} failed: {e}");
            TrialResult {
                trial,
                params,
                config: None,
                score_bps: None,
                error: Some(e),
                seed,
            }
        }
    }
}

/// Runs `n_iter` trials. Each trial draws its parameters and its evaluation
/// seed from its own substream, so the log does not depend on scheduling.
/// The best trial is the highest score, earliest on ties.
pub fn random_search(
    dataset: &Dataset,
    base: &ModelConfig,
    space: &ParamSpace,
    n_iter: usize,
    table: &TbsTable,
    master_seed: u64,
) -> Result<SearchResult, HyperoptError> {
    if n_iter < 1 {
        return Err(HyperoptError::Config("n_iter must be at least 1".into()));
    }
    validate_space(space)?;
    let trials: Vec<TrialResult> = (0..n_iter)
        .into_par_iter()
        .map(|t| run_trial(dataset, base, space, table, master_seed, t))
        .collect();
    let best = trials
        .iter()
        .filter(|t| t.score_bps.is_some())
        .fold(None::<&TrialResult>, |best, t| match best {
            Some(b) if b.score_bps >= t.score_bps => Some(b),
            _ => Some(t),
        })
        .cloned()
        .ok_or(HyperoptError::AllFailed(n_iter))?;
    Ok(SearchResult { best, trials })
}

/// Writes the log as `trial,params-json,score_bps,seed`; failed trials have
/// `NA` as score.
pub fn write_trial_log<W: Write>(trials: &[TrialResult], writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["trial", "params-json", "score_bps", "seed"])?;
    for t in trials {
        w.write_record([
            t.trial.to_string(),
            serde_json::to_string(&t.params).expect("params serialize"),
            t.score_bps.map_or_else(|| "NA".into(), |s| s.to_string()),
            t.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
