use std::collections::BTreeSet;

use rand::seq::index;
use rayon::prelude::*;

use super::{evaluate_learner, fold_seed, logo_folds, mean, sdom, Curve, CurvePoint, EvalError, Learner};
use crate::goodput::{mean_goodput, TbsTable};
use crate::ingest::Dataset;
use crate::seed;

/// Random training subsets drawn per fold and size.
pub const SIZE_SWEEP_REPEATS: usize = 5;

/// Goodput when training on the top-N features of `order`, N = 1..=d. One
/// curve per learner; error bars are the SDOM over folds.
pub fn feature_count_sweep(
    dataset: &Dataset,
    learners: &[&dyn Learner],
    order: &[String],
    table: &TbsTable,
    seed: u64,
) -> Result<Vec<Curve>, EvalError> {
    if order.is_empty() {
        return Err(EvalError::Config("empty feature order".into()));
    }
    let wanted: BTreeSet<&str> = order.iter().map(String::as_str).collect();
    let have: BTreeSet<&str> = dataset.feature_names.iter().map(String::as_str).collect();
    if wanted != have || wanted.len() != order.len() {
        return Err(EvalError::Config(
            "feature order must list every dataset feature exactly once".into(),
        ));
    }
    learners
        .iter()
        .map(|learner| {
            let points = (1..=order.len())
                .map(|n| {
                    let subset = dataset.select_features(&order[..n])?;
                    let report = evaluate_learner(&subset, *learner, table, seed)?;
                    let scores: Vec<f64> = report.per_fold.iter().map(|f| f.goodput_bps).collect();
                    Ok(CurvePoint {
                        x: n as f64,
                        mean: report.aggregate_bps,
                        sdom: sdom(&scores),
                    })
                })
                .collect::<Result<Vec<_>, EvalError>>()?;
            Ok(Curve {
                series: learner.label(),
                points,
            })
        })
        .collect()
}

/// Goodput when each fold's training split is subsampled without replacement
/// to each size. Mean and SDOM are taken over folds × repeats.
pub fn training_size_sweep(
    dataset: &Dataset,
    learners: &[&dyn Learner],
    sizes: &[usize],
    table: &TbsTable,
    seed: u64,
) -> Result<Vec<Curve>, EvalError> {
    let folds = logo_folds(dataset)?;
    let available = folds.iter().map(|f| f.train_indices.len()).min().unwrap_or(0);
    if let Some(bad) = sizes.iter().find(|&&s| s == 0 || s > available) {
        return Err(EvalError::Config(format!(
            "training size {bad} outside 1..={available} (smallest fold training split)"
        )));
    }
    learners
        .iter()
        .map(|learner| {
            let points = sizes
                .iter()
                .map(|&size| {
                    let jobs: Vec<(usize, usize)> = (0..folds.len())
                        .flat_map(|f| (0..SIZE_SWEEP_REPEATS).map(move |r| (f, r)))
                        .collect();
                    let scores = jobs
                        .par_iter()
                        .map(|&(f, r)| {
                            let fold = &folds[f];
                            let fs = fold_seed(seed, fold.test_round);
                            let fail = |source| EvalError::Fold {
                                round: fold.test_round,
                                source,
                            };
                            let rows: Vec<usize> = if size == fold.train_indices.len() {
                                fold.train_indices.clone()
                            } else {
                                let mut rng = seed::rng(fs, "subsample", (size * SIZE_SWEEP_REPEATS + r) as u64);
                                let mut rows: Vec<usize> = index::sample(&mut rng, fold.train_indices.len(), size)
                                    .into_iter()
                                    .map(|k| fold.train_indices[k])
                                    .collect();
                                rows.sort_unstable();
                                rows
                            };
                            let model = learner.fit(&dataset.feature_matrix(&rows).map_err(fail)?, fs).map_err(fail)?;
                            let preds = model.predict(&dataset.matrix(&fold.test_indices)).map_err(fail)?;
                            Ok(mean_goodput(&preds, &dataset.targets_of(&fold.test_indices), table)?)
                        })
                        .collect::<Result<Vec<f64>, EvalError>>()?;
                    Ok(CurvePoint {
                        x: size as f64,
                        mean: mean(&scores),
                        sdom: sdom(&scores),
                    })
                })
                .collect::<Result<Vec<_>, EvalError>>()?;
            Ok(Curve {
                series: learner.label(),
                points,
            })
        })
        .collect()
}
