use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fold_seed, logo_folds, mean, EvalError, Learner};
use crate::goodput::{mean_goodput, TbsTable};
use crate::ingest::Dataset;
use crate::regressors::ModelConfig;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    /// Mean goodput lost when the feature is shuffled in the test split.
    pub delta_bps: f64,
    /// Standard deviation of the individual fold × repeat losses.
    pub std_bps: f64,
}

pub fn shuffle_column(column: &mut [f64], rng: &mut ChaCha8Rng) {
    column.shuffle(rng);
}

/// Permutation importance of every feature, most important first.
pub fn permutation_importance(
    dataset: &Dataset,
    config: &ModelConfig,
    table: &TbsTable,
    n_repeats: usize,
    seed: u64,
) -> Result<Vec<FeatureImportance>, EvalError> {
    permutation_importance_with(dataset, config, table, n_repeats, seed, shuffle_column)
}

/// As [`permutation_importance`] with a custom column permutation. Only test
/// rows are ever permuted; models are trained once per fold.
pub fn permutation_importance_with(
    dataset: &Dataset,
    learner: &dyn Learner,
    table: &TbsTable,
    n_repeats: usize,
    seed: u64,
    permute: fn(&mut [f64], &mut ChaCha8Rng),
) -> Result<Vec<FeatureImportance>, EvalError> {
    if n_repeats < 1 {
        return Err(EvalError::Config("permutation importance needs at least one repeat".into()));
    }
    let folds = logo_folds(dataset)?;
    let d = dataset.n_features();
    // per fold: deltas[feature][repeat]
    let per_fold: Vec<Vec<Vec<f64>>> = folds
        .par_iter()
        .map(|fold| {
            let fail = |source| EvalError::Fold {
                round: fold.test_round,
                source,
            };
            let fs = fold_seed(seed, fold.test_round);
            let train = dataset.feature_matrix(&fold.train_indices).map_err(fail)?;
            let model = learner.fit(&train, fs).map_err(fail)?;
            let x = dataset.matrix(&fold.test_indices);
            let targets = dataset.targets_of(&fold.test_indices);
            let base = mean_goodput(&model.predict(&x).map_err(fail)?, &targets, table)?;
            (0..d)
                .map(|j| {
                    (0..n_repeats)
                        .map(|r| {
                            let mut column = x.column(j);
                            let mut rng = seed::rng(fs, "permute", (j * n_repeats + r) as u64);
                            permute(&mut column, &mut rng);
                            let mut shuffled = x.clone();
                            for (i, v) in column.into_iter().enumerate() {
                                shuffled.set(i, j, v);
                            }
                            let preds = model.predict(&shuffled).map_err(fail)?;
                            Ok(base - mean_goodput(&preds, &targets, table)?)
                        })
                        .collect::<Result<Vec<f64>, EvalError>>()
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut out: Vec<FeatureImportance> = (0..d)
        .map(|j| {
            let fold_means: Vec<f64> = per_fold.iter().map(|f| mean(&f[j])).collect();
            let all: Vec<f64> = per_fold.iter().flat_map(|f| f[j].iter().copied()).collect();
            let m = mean(&all);
            let std = if all.len() > 1 {
                (all.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (all.len() - 1) as f64).sqrt()
            } else {
                0.0
            };
            FeatureImportance {
                feature: dataset.feature_names[j].clone(),
                delta_bps: mean(&fold_means),
                std_bps: std,
            }
        })
        .collect();
    out.sort_by(|a, b| b.delta_bps.total_cmp(&a.delta_bps));
    Ok(out)
}
