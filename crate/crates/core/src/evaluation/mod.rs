//! Leave-one-round-out evaluation of MCS predictors scored by goodput.

mod correlation;
mod folds;
mod importance;
mod sweeps;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::goodput::{mean_goodput, GoodputError, GoodputReport, TbsTable};
use crate::ingest::Dataset;
use crate::regressors::{FeatureMatrix, Matrix, ModelConfig, ModelError, TrainedModel};
use crate::seed;

pub use correlation::{pearson, pearson_correlation, FeatureCorrelation};
pub use folds::{logo_folds, CvFold};
pub use importance::{permutation_importance, permutation_importance_with, shuffle_column, FeatureImportance};
pub use sweeps::{feature_count_sweep, training_size_sweep, SIZE_SWEEP_REPEATS};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("fold for round {round} failed: {source}")]
    Fold { round: u32, source: ModelError },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Goodput(#[from] GoodputError),
}

impl EvalError {
    /// True for failures that happened while training or predicting.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            EvalError::Fold { .. } | EvalError::Model(ModelError::Numerical(_) | ModelError::Diverged { .. })
        )
    }
}

/// Inference half of a trained predictor.
pub trait Predict: Send + Sync {
    fn predict(&self, x: &Matrix) -> Result<Vec<f64>, ModelError>;
}

impl Predict for TrainedModel {
    fn predict(&self, x: &Matrix) -> Result<Vec<f64>, ModelError> {
        TrainedModel::predict(self, x)
    }
}

/// Anything that can be trained on one fold's training split.
pub trait Learner: Sync {
    fn label(&self) -> String;
    fn fit(&self, train: &FeatureMatrix, seed: u64) -> Result<Box<dyn Predict>, ModelError>;
}

impl Learner for ModelConfig {
    fn label(&self) -> String {
        format!("{}-{}", self.kind(), self.loss().label())
    }

    fn fit(&self, train: &FeatureMatrix, seed: u64) -> Result<Box<dyn Predict>, ModelError> {
        Ok(Box::new(ModelConfig::fit(self, train, seed)?))
    }
}

/// What to evaluate: a trainable model or one of the reference policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSpec {
    Model(ModelConfig),
    /// Predicts the true target of every sample.
    Oracle,
    FixedMcs(u8),
}

impl ModelSpec {
    pub fn label(&self) -> String {
        match self {
            ModelSpec::Model(c) => Learner::label(c),
            ModelSpec::Oracle => "oracle".into(),
            ModelSpec::FixedMcs(m) => format!("fixed-mcs-{m}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
    pub round: u32,
    pub n_train: usize,
    pub n_test: usize,
    pub goodput_bps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub mean: f64,
    pub sdom: f64,
}

/// One line of a sweep plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub series: String,
    pub points: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub seed: u64,
    pub per_fold: Vec<FoldScore>,
    /// Unweighted mean of the per-fold goodputs.
    pub aggregate_bps: f64,
    /// Pooled out-of-fold predictions scored on the whole dataset, with the
    /// oracle and best fixed MCS for context.
    pub baseline: GoodputReport,
    #[serde(default)]
    pub importance: Vec<FeatureImportance>,
    #[serde(default)]
    pub correlation: Vec<FeatureCorrelation>,
    #[serde(default)]
    pub curves: Vec<Curve>,
}

pub fn fold_seed(master: u64, round: u32) -> u64 {
    seed::substream(master, "fold", u64::from(round))
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation divided by `sqrt(n)`; 0 for fewer than 2 values.
pub(crate) fn sdom(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

fn fold_predictions(
    dataset: &Dataset,
    fold: &CvFold,
    learner: &dyn Learner,
    master_seed: u64,
) -> Result<Vec<f64>, EvalError> {
    let fail = |source| EvalError::Fold {
        round: fold.test_round,
        source,
    };
    let train = dataset.feature_matrix(&fold.train_indices).map_err(fail)?;
    let model = learner.fit(&train, fold_seed(master_seed, fold.test_round)).map_err(fail)?;
    model.predict(&dataset.matrix(&fold.test_indices)).map_err(fail)
}

fn assemble(
    label: String,
    dataset: &Dataset,
    folds: &[CvFold],
    predictions: Vec<Vec<f64>>,
    table: &TbsTable,
    seed: u64,
) -> Result<EvalReport, EvalError> {
    let mut pooled = vec![f64::NAN; dataset.len()];
    let mut per_fold = Vec::with_capacity(folds.len());
    for (fold, preds) in folds.iter().zip(&predictions) {
        let targets = dataset.targets_of(&fold.test_indices);
        per_fold.push(FoldScore {
            round: fold.test_round,
            n_train: fold.train_indices.len(),
            n_test: fold.test_indices.len(),
            goodput_bps: mean_goodput(preds, &targets, table)?,
        });
        for (&i, &p) in fold.test_indices.iter().zip(preds) {
            pooled[i] = p;
        }
    }
    let mut baseline = GoodputReport::new(&pooled, &dataset.targets(), table)?;
    baseline.per_sample_bps.clear();
    let scores: Vec<f64> = per_fold.iter().map(|f| f.goodput_bps).collect();
    Ok(EvalReport {
        model: label,
        seed,
        aggregate_bps: mean(&scores),
        per_fold,
        baseline,
        importance: Vec::new(),
        correlation: Vec::new(),
        curves: Vec::new(),
    })
}

/// Cross-validates any learner. Folds run in parallel; each fold trains
/// with its own seed derived from the round id.
pub fn evaluate_learner(
    dataset: &Dataset,
    learner: &dyn Learner,
    table: &TbsTable,
    seed: u64,
) -> Result<EvalReport, EvalError> {
    let folds = logo_folds(dataset)?;
    let predictions = folds
        .par_iter()
        .map(|f| fold_predictions(dataset, f, learner, seed))
        .collect::<Result<Vec<_>, _>>()?;
    assemble(learner.label(), dataset, &folds, predictions, table, seed)
}

pub fn evaluate_model(dataset: &Dataset, spec: &ModelSpec, table: &TbsTable, seed: u64) -> Result<EvalReport, EvalError> {
    match spec {
        ModelSpec::Model(config) => evaluate_learner(dataset, config, table, seed),
        ModelSpec::Oracle | ModelSpec::FixedMcs(_) => {
            let folds = logo_folds(dataset)?;
            let predictions = folds
                .iter()
                .map(|f| match spec {
                    ModelSpec::FixedMcs(m) => vec![f64::from(*m); f.test_indices.len()],
                    _ => dataset.targets_of(&f.test_indices).into_iter().map(f64::from).collect(),
                })
                .collect();
            if let ModelSpec::FixedMcs(m) = spec {
                table.tbs(i64::from(*m))?;
            }
            assemble(spec.label(), dataset, &folds, predictions, table, seed)
        }
    }
}

/// Writes curves as `x,series,mean,sdom` rows.
pub fn write_curves_csv<W: Write>(curves: &[Curve], writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["x", "series", "mean", "sdom"])?;
    for c in curves {
        for p in &c.points {
            w.write_record([p.x.to_string(), c.series.clone(), p.mean.to_string(), p.sdom.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
