//! Gradient-boosted regression trees with loss-optimal leaf values.

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow_tree, BinnedMatrix, Tree, TreeParams};
use super::{FeatureMatrix, LossMode, ModelError};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbtParams {
    pub loss: LossMode,
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Fraction of rows drawn without replacement for each round.
    pub subsample: f64,
    pub max_bins: usize,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            loss: LossMode::Quantile(0.2),
            n_rounds: 200,
            learning_rate: 0.1,
            max_depth: 4,
            min_leaf: 10,
            subsample: 1.0,
            max_bins: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub loss: LossMode,
    pub base: f64,
    pub trees: Vec<Tree>,
    /// Already scaled by the learning rate.
    pub leaf_values: Vec<Vec<f64>>,
    /// Mean training loss before the first round and after each round.
    pub train_loss: Vec<f64>,
}

impl GbtModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.base
            + self
                .trees
                .iter()
                .zip(&self.leaf_values)
                .map(|(t, v)| v[t.leaf_of(x)])
                .sum::<f64>()
    }
}

pub fn fit_gbt(data: &FeatureMatrix, params: &GbtParams, seed: u64) -> Result<GbtModel, ModelError> {
    params
        .loss
        .validate()
        .map_err(|e| ModelError::Config(e.to_string()))?;
    if !(params.learning_rate > 0.0 && params.learning_rate <= 1.0) {
        return Err(ModelError::Config(format!("learning rate {} outside (0, 1]", params.learning_rate)));
    }
    if !(params.subsample > 0.0 && params.subsample <= 1.0) {
        return Err(ModelError::Config(format!("subsample {} outside (0, 1]", params.subsample)));
    }
    if params.min_leaf == 0 {
        return Err(ModelError::Config("min_leaf must be at least 1".into()));
    }
    let n = data.n();
    let loss = params.loss;
    let base = loss.optimal_constant(&mut data.y.clone());
    let mut fitted = vec![base; n];
    let mut model = GbtModel {
        loss,
        base,
        trees: Vec::with_capacity(params.n_rounds),
        leaf_values: Vec::with_capacity(params.n_rounds),
        train_loss: vec![loss.mean_loss(&data.y, &fitted)],
    };
    if params.n_rounds == 0 {
        return Ok(model);
    }
    let binned = BinnedMatrix::build(&data.x, params.max_bins);
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_leaf: params.min_leaf as f64,
        mtry: 0,
    };
    let n_sub = ((params.subsample * n as f64).floor() as usize).clamp(1, n);
    let mut gradient = vec![0.0; n];

    for round in 0..params.n_rounds {
        let mut rng = seed::rng(seed, "gbt-round", round as u64);
        for ((g, &y), &f) in gradient.iter_mut().zip(&data.y).zip(&fitted) {
            *g = loss.negative_gradient(y, f);
        }
        let rows: Vec<u32> = if n_sub == n {
            (0..n as u32).collect()
        } else {
            let mut r: Vec<u32> = index::sample(&mut rng, n, n_sub).into_iter().map(|i| i as u32).collect();
            r.sort_unstable();
            r
        };
        let grown = grow_tree(&binned, rows, &gradient, None, &tree_params, &mut rng);
        let values: Vec<f64> = grown
            .leaf_rows
            .iter()
            .map(|rows| {
                let mut resid: Vec<f64> = rows.iter().map(|&r| data.y[r as usize] - fitted[r as usize]).collect();
                params.learning_rate * loss.optimal_constant(&mut resid)
            })
            .collect();
        let tree = grown.tree;
        let updates: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| values[tree.leaf_of_binned(&binned, i)])
            .collect();
        for (f, u) in fitted.iter_mut().zip(&updates) {
            *f += u;
        }
        let l = loss.mean_loss(&data.y, &fitted);
        if !l.is_finite() {
            return Err(ModelError::Diverged {
                epoch: round,
                last_stable: round.checked_sub(1),
            });
        }
        model.train_loss.push(l);
        model.trees.push(tree);
        model.leaf_values.push(values);
    }
    Ok(model)
}
