use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{FeatureMatrix, LossMode, ModelError};
use crate::seed;

/// `y = intercept + coef · x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coef: Vec<f64>,
    pub intercept: f64,
    /// Mean training loss after each SGD epoch (empty for OLS).
    #[serde(default)]
    pub epoch_loss: Vec<f64>,
}

impl LinearModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.intercept + self.coef.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }
}

const RIDGE_JITTER: f64 = 1e-9;

/// Ordinary least squares through the normal equations on centered data.
/// A rank-deficient Gram matrix gets a relative ridge of 1e-9.
pub fn fit_linear_ols(data: &FeatureMatrix) -> Result<LinearModel, ModelError> {
    let (n, d) = (data.n(), data.d());
    if n <= d {
        return Err(ModelError::Contract(format!("OLS needs more rows ({n}) than features ({d})")));
    }
    let x_mean: Vec<f64> = (0..d).map(|j| data.x.column(j).iter().sum::<f64>() / n as f64).collect();
    let y_mean = data.y.iter().sum::<f64>() / n as f64;

    let mut gram = DMatrix::<f64>::zeros(d, d);
    let mut rhs = DVector::<f64>::zeros(d);
    let mut centered = vec![0.0; d];
    for (row, &y) in data.x.rows().zip(&data.y) {
        for j in 0..d {
            centered[j] = row[j] - x_mean[j];
        }
        let yc = y - y_mean;
        for a in 0..d {
            rhs[a] += centered[a] * yc;
            for b in a..d {
                gram[(a, b)] += centered[a] * centered[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }

    let solution = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => {
            let scale = (gram.trace() / d as f64).max(1.0);
            let mut ridged = gram.clone();
            for a in 0..d {
                ridged[(a, a)] += RIDGE_JITTER * scale;
            }
            match ridged.cholesky() {
                Some(ch) => ch.solve(&rhs),
                None => {
                    let bad: Vec<String> = (0..d)
                        .filter(|&a| !(gram[(a, a)] > 0.0) || !gram[(a, a)].is_finite())
                        .map(|a| format!("column {a}"))
                        .collect();
                    return Err(ModelError::Numerical(format!(
                        "rank-deficient design, degenerate: {}",
                        if bad.is_empty() { "collinear columns".to_string() } else { bad.join(", ") }
                    )));
                }
            }
        }
    };
    let coef: Vec<f64> = solution.iter().copied().collect();
    if coef.iter().any(|c| !c.is_finite()) {
        return Err(ModelError::Numerical("non-finite OLS coefficients".into()));
    }
    let intercept = y_mean - coef.iter().zip(&x_mean).map(|(c, m)| c * m).sum::<f64>();
    Ok(LinearModel {
        coef,
        intercept,
        epoch_loss: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgdParams {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Epoch `e` uses `learning_rate / (1 + lr_decay * e)`.
    pub lr_decay: f64,
    pub batch_size: usize,
}

impl Default for SgdParams {
    fn default() -> Self {
        Self {
            epochs: 30,
            learning_rate: 0.05,
            lr_decay: 0.1,
            batch_size: 32,
        }
    }
}

/// Minimizes the mean loss (pinball for quantile regression) by mini-batch
/// subgradient descent. Expects standardized features; starts from zero
/// slopes and the loss-optimal constant intercept.
pub fn fit_linear_sgd_quantile(
    data: &FeatureMatrix,
    loss: LossMode,
    params: &SgdParams,
    seed: u64,
) -> Result<LinearModel, ModelError> {
    loss.validate()?;
    if params.batch_size == 0 || !(params.learning_rate > 0.0) || params.lr_decay < 0.0 {
        return Err(ModelError::Config(format!("invalid SGD parameters {params:?}")));
    }
    let (n, d) = (data.n(), data.d());
    let mut model = LinearModel {
        coef: vec![0.0; d],
        intercept: loss.optimal_constant(&mut data.y.clone()),
        epoch_loss: Vec::with_capacity(params.epochs),
    };
    let mut order: Vec<usize> = (0..n).collect();
    let mut grad_w = vec![0.0; d];
    let mut last_stable = None;
    for epoch in 0..params.epochs {
        let mut rng = seed::rng(seed, "sgd-epoch", epoch as u64);
        order.shuffle(&mut rng);
        let lr = params.learning_rate / (1.0 + params.lr_decay * epoch as f64);
        for batch in order.chunks(params.batch_size) {
            grad_w.iter_mut().for_each(|g| *g = 0.0);
            let mut grad_b = 0.0;
            for &i in batch {
                let row = data.x.row(i);
                let g = loss.derivative(data.y[i], model.predict_row(row));
                grad_b += g;
                for (gw, v) in grad_w.iter_mut().zip(row) {
                    *gw += g * v;
                }
            }
            let scale = lr / batch.len() as f64;
            model.intercept -= scale * grad_b;
            for (w, g) in model.coef.iter_mut().zip(&grad_w) {
                *w -= scale * g;
            }
        }
        let mean_loss = data
            .x
            .rows()
            .zip(&data.y)
            .map(|(r, &y)| loss.loss(y, model.predict_row(r)))
            .sum::<f64>()
            / n as f64;
        if !mean_loss.is_finite() {
            return Err(ModelError::Diverged { epoch, last_stable });
        }
        model.epoch_loss.push(mean_loss);
        last_stable = Some(epoch);
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regressors::{quantile_of, Matrix};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fm(rows: Vec<Vec<f64>>, y: Vec<f64>) -> FeatureMatrix {
        FeatureMatrix::new(Matrix::from_rows(&rows).unwrap(), y).unwrap()
    }

    #[test]
    fn ols_recovers_exact_linear_relation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows: Vec<Vec<f64>> = (0..40).map(|_| (0..3).map(|_| rng.gen_range(-5.0..5.0)).collect()).collect();
        let y = rows.iter().map(|r| 1.5 + 2.0 * r[0] - 3.0 * r[1] + 0.25 * r[2]).collect();
        let m = fit_linear_ols(&fm(rows, y)).unwrap();
        for (c, e) in m.coef.iter().zip([2.0, -3.0, 0.25]) {
            assert!((c - e).abs() < 1e-8, "{c} vs {e}");
        }
        assert!((m.intercept - 1.5).abs() < 1e-8);
    }

    #[test]
    fn ols_constant_target() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![f64::from(i), f64::from(i * i)]).collect();
        let m = fit_linear_ols(&fm(rows, vec![4.0; 10])).unwrap();
        assert!((m.intercept - 4.0).abs() < 1e-10);
        assert!(m.coef.iter().all(|c| c.abs() < 1e-10));
    }

    #[test]
    fn ols_residuals_are_orthogonal_to_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows: Vec<Vec<f64>> = (0..50).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let y: Vec<f64> = (0..50).map(|_| rng.gen_range(0.0..19.0)).collect();
        let data = fm(rows.clone(), y.clone());
        let m = fit_linear_ols(&data).unwrap();
        let resid: Vec<f64> = rows.iter().zip(&y).map(|(r, y)| y - m.predict_row(r)).collect();
        assert!(resid.iter().sum::<f64>().abs() < 1e-6);
        for j in 0..3 {
            let dot: f64 = rows.iter().zip(&resid).map(|(r, e)| r[j] * e).sum();
            assert!(dot.abs() < 1e-6, "column {j}: {dot}");
        }
    }

    #[test]
    fn ols_tolerates_constant_column_and_rejects_small_n() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![f64::from(i), 7.0]).collect();
        let y = (0..10).map(|i| 2.0 * f64::from(i)).collect();
        let m = fit_linear_ols(&fm(rows, y)).unwrap();
        assert!((m.coef[0] - 2.0).abs() < 1e-6);
        assert!(m.coef[1].abs() < 1e-6);
        assert!(fit_linear_ols(&fm(vec![vec![1.0], vec![2.0]], vec![1.0, 2.0])).is_ok());
        assert!(fit_linear_ols(&fm(vec![vec![1.0]], vec![1.0])).is_err());
    }

    fn intercept_only(y: Vec<f64>, tau: f64, params: &SgdParams) -> f64 {
        let rows = vec![vec![0.0]; y.len()];
        fit_linear_sgd_quantile(&fm(rows, y), LossMode::Quantile(tau), params, 9)
            .unwrap()
            .intercept
    }

    #[test]
    fn sgd_intercept_converges_to_median() {
        let params = SgdParams {
            epochs: 3000,
            learning_rate: 0.1,
            lr_decay: 0.01,
            batch_size: 32,
        };
        let b = intercept_only(vec![1.0, 2.0, 9.0], 0.5, &params);
        assert!((b - 2.0).abs() <= 0.25, "{b}");
    }

    #[test]
    fn sgd_intercept_converges_to_upper_decile() {
        let params = SgdParams {
            epochs: 3000,
            learning_rate: 0.1,
            lr_decay: 0.01,
            batch_size: 32,
        };
        let y: Vec<f64> = (0..10).map(f64::from).collect();
        let expected = quantile_of(&mut y.clone(), 0.9);
        let b = intercept_only(y, 0.9, &params);
        assert!((b - expected).abs() <= 0.5, "{b} vs {expected}");
    }

    #[test]
    fn zero_epochs_leaves_initial_parameters() {
        let params = SgdParams {
            epochs: 0,
            ..SgdParams::default()
        };
        let m = fit_linear_sgd_quantile(&fm(vec![vec![1.0], vec![2.0]], vec![3.0, 4.0]), LossMode::Quantile(0.3), &params, 1).unwrap();
        assert_eq!(m.coef, vec![0.0]);
        assert_eq!(m.intercept, 3.0);
    }

    #[test]
    fn divergence_is_reported() {
        let params = SgdParams {
            epochs: 50,
            learning_rate: 1e300,
            lr_decay: 0.0,
            batch_size: 1,
        };
        let err = fit_linear_sgd_quantile(&fm(vec![vec![1e300], vec![-1e300]], vec![1.0, 2.0]), LossMode::Mse, &params, 1).unwrap_err();
        assert!(matches!(err, ModelError::Diverged { .. }));
    }
}
