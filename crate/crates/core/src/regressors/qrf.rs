//! Quantile regression forest. Leaves keep every training target that fell
//! into them, so any conditional quantile can be read off after training.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::sorted_weighted_quantile;
use super::tree::{grow_tree, BinnedMatrix, Tree, TreeParams};
use super::{FeatureMatrix, LossMode, ModelError};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QrfParams {
    pub loss: LossMode,
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features tried per split; `None` means `ceil(d / 3)`.
    pub mtry: Option<usize>,
    pub bootstrap: bool,
    pub max_bins: usize,
}

impl Default for QrfParams {
    fn default() -> Self {
        Self {
            loss: LossMode::Quantile(0.2),
            n_trees: 100,
            max_depth: 12,
            min_leaf: 5,
            mtry: None,
            bootstrap: true,
            max_bins: 256,
        }
    }
}

/// Target multiset of one leaf as `(value index, count)` pairs sorted by value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    pub entries: Vec<(u32, u32)>,
    pub total: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QrfModel {
    pub loss: LossMode,
    /// Sorted distinct training targets.
    pub values: Vec<f64>,
    pub trees: Vec<Tree>,
    pub leaves: Vec<Vec<Leaf>>,
}

const DENSE_LIMIT: usize = 1024;

pub fn fit_qrf(data: &FeatureMatrix, params: &QrfParams, seed: u64) -> Result<QrfModel, ModelError> {
    params.loss.validate()?;
    let (n, d) = (data.n(), data.d());
    let mtry = params.mtry.unwrap_or_else(|| d.div_ceil(3));
    if mtry == 0 || mtry > d {
        return Err(ModelError::Config(format!("mtry {mtry} must lie in 1..={d}")));
    }
    if params.n_trees == 0 {
        return Err(ModelError::Config("a forest needs at least one tree".into()));
    }
    if params.min_leaf == 0 || n < params.min_leaf {
        return Err(ModelError::Contract(format!(
            "{n} rows cannot satisfy min_leaf {}",
            params.min_leaf
        )));
    }
    let mut values = data.y.clone();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let value_idx: Vec<u32> = data
        .y
        .iter()
        .map(|y| values.partition_point(|v| v < y) as u32)
        .collect();
    let binned = BinnedMatrix::build(&data.x, params.max_bins);
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_leaf: params.min_leaf as f64,
        mtry,
    };

    let grown: Vec<(Tree, Vec<Leaf>)> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed::rng(seed, "qrf-tree", t as u64);
            let (rows, weights) = if params.bootstrap {
                let mut counts = vec![0.0f64; n];
                for _ in 0..n {
                    counts[rng.gen_range(0..n)] += 1.0;
                }
                let rows: Vec<u32> = (0..n as u32).filter(|&i| counts[i as usize] > 0.0).collect();
                (rows, Some(counts))
            } else {
                ((0..n as u32).collect(), None)
            };
            let g = grow_tree(&binned, rows, &data.y, weights.as_deref(), &tree_params, &mut rng);
            let leaves = g
                .leaf_rows
                .iter()
                .map(|rows| {
                    let mut idx: Vec<(u32, u32)> = rows
                        .iter()
                        .map(|&r| {
                            let c = weights.as_ref().map_or(1, |w| w[r as usize] as u32);
                            (value_idx[r as usize], c)
                        })
                        .collect();
                    idx.sort_unstable();
                    let mut entries: Vec<(u32, u32)> = Vec::new();
                    for (v, c) in idx {
                        match entries.last_mut() {
                            Some(last) if last.0 == v => last.1 += c,
                            _ => entries.push((v, c)),
                        }
                    }
                    let total = entries.iter().map(|e| e.1).sum();
                    Leaf { entries, total }
                })
                .collect();
            (g.tree, leaves)
        })
        .collect();
    let (trees, leaves) = grown.into_iter().unzip();
    Ok(QrfModel {
        loss: params.loss,
        values,
        trees,
        leaves,
    })
}

impl QrfModel {
    fn matched<'a>(&'a self, x: &'a [f64]) -> impl Iterator<Item = &'a Leaf> + 'a {
        self.trees
            .iter()
            .zip(&self.leaves)
            .map(move |(t, l)| &l[t.leaf_of(x)])
    }

    /// Weighted target distribution at `x` as `(value, weight)` sorted by value.
    pub fn distribution(&self, x: &[f64]) -> Vec<(f64, f64)> {
        let per_tree = 1.0 / self.trees.len() as f64;
        if self.values.len() <= DENSE_LIMIT {
            let mut w = vec![0.0; self.values.len()];
            for leaf in self.matched(x) {
                let share = per_tree / f64::from(leaf.total);
                for &(v, c) in &leaf.entries {
                    w[v as usize] += share * f64::from(c);
                }
            }
            self.values.iter().copied().zip(w).filter(|p| p.1 > 0.0).collect()
        } else {
            let mut pairs: Vec<(u32, f64)> = Vec::new();
            for leaf in self.matched(x) {
                let share = per_tree / f64::from(leaf.total);
                pairs.extend(leaf.entries.iter().map(|&(v, c)| (v, share * f64::from(c))));
            }
            pairs.sort_by_key(|p| p.0);
            let mut out: Vec<(f64, f64)> = Vec::new();
            let mut last = u32::MAX;
            for (v, w) in pairs {
                if v == last {
                    out.last_mut().expect("non-empty").1 += w;
                } else {
                    out.push((self.values[v as usize], w));
                    last = v;
                }
            }
            out
        }
    }

    pub fn predict_quantile(&self, x: &[f64], tau: f64) -> Result<f64, ModelError> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(ModelError::Domain(format!("quantile {tau} outside [0, 1]")));
        }
        sorted_weighted_quantile(&self.distribution(x), tau)
            .ok_or_else(|| ModelError::Contract("empty forest leaf".into()))
    }

    /// Average of the matched leaf means.
    pub fn predict_mean(&self, x: &[f64]) -> f64 {
        self.matched(x)
            .map(|leaf| {
                leaf.entries
                    .iter()
                    .map(|&(v, c)| self.values[v as usize] * f64::from(c))
                    .sum::<f64>()
                    / f64::from(leaf.total)
            })
            .sum::<f64>()
            / self.trees.len() as f64
    }

    /// Prediction under the training loss: the τ-quantile, the median for
    /// absolute error, or the mean for squared error.
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        match self.loss.target_quantile() {
            Some(tau) => self.predict_quantile(x, tau).unwrap_or(f64::NAN),
            None => self.predict_mean(x),
        }
    }
}
