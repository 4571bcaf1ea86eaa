use std::fmt;

use serde::{Deserialize, Serialize};

use super::ModelError;

/// Training objective. Serialized as `{"quantile": tau}`, `"mse"` or `"mae"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossMode {
    Quantile(f64),
    Mse,
    Mae,
}

impl fmt::Display for LossMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossMode::Quantile(tau) => write!(f, "quantile({tau})"),
            LossMode::Mse => f.write_str("mse"),
            LossMode::Mae => f.write_str("mae"),
        }
    }
}

fn check_tau(tau: f64) -> Result<(), ModelError> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(ModelError::Domain(format!("quantile {tau} outside (0, 1)")))
    }
}

/// Pinball loss of predicting `y_hat` for `y` at quantile `tau`.
pub fn pinball_loss(y: f64, y_hat: f64, tau: f64) -> Result<f64, ModelError> {
    check_tau(tau)?;
    Ok(pinball(y, y_hat, tau))
}

#[inline]
pub(crate) fn pinball(y: f64, y_hat: f64, tau: f64) -> f64 {
    if y >= y_hat {
        tau * (y - y_hat)
    } else {
        (1.0 - tau) * (y_hat - y)
    }
}

const CDF_SLACK: f64 = 1e-12;

/// Smallest value whose cumulative normalized weight reaches `tau`.
pub fn weighted_quantile(values: &[f64], weights: &[f64], tau: f64) -> Result<f64, ModelError> {
    if values.is_empty() {
        return Err(ModelError::Contract("weighted quantile of an empty set".into()));
    }
    if values.len() != weights.len() {
        return Err(ModelError::Contract("values and weights differ in length".into()));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(ModelError::Domain(format!("quantile {tau} outside [0, 1]")));
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(ModelError::Contract("weights must be finite and non-negative".into()));
    }
    let mut pairs: Vec<(f64, f64)> = values.iter().copied().zip(weights.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    sorted_weighted_quantile(&pairs, tau).ok_or_else(|| ModelError::Contract("weights sum to zero".into()))
}

/// `pairs` sorted by value. `None` when total weight is zero.
pub(crate) fn sorted_weighted_quantile(pairs: &[(f64, f64)], tau: f64) -> Option<f64> {
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    if !(total > 0.0) {
        return None;
    }
    let goal = tau * total * (1.0 - CDF_SLACK);
    let mut cum = 0.0;
    for &(v, w) in pairs {
        cum += w;
        if w > 0.0 && cum >= goal {
            return Some(v);
        }
    }
    pairs.iter().rev().find(|p| p.1 > 0.0).map(|p| p.0)
}

/// Unweighted step quantile; reorders `values`.
pub fn quantile_of(values: &mut [f64], tau: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of an empty set");
    let n = values.len();
    let k = ((tau * n as f64 * (1.0 - CDF_SLACK)).ceil() as usize).clamp(1, n);
    *values.select_nth_unstable_by(k - 1, f64::total_cmp).1
}

impl LossMode {
    pub fn validate(&self) -> Result<(), ModelError> {
        match *self {
            LossMode::Quantile(tau) => check_tau(tau),
            _ => Ok(()),
        }
    }

    /// Short column label: `quantile`, `mse` or `mae`.
    pub fn label(&self) -> &'static str {
        match self {
            LossMode::Quantile(_) => "quantile",
            LossMode::Mse => "mse",
            LossMode::Mae => "mae",
        }
    }

    /// Quantile whose estimate minimizes this loss; `None` for the mean.
    pub fn target_quantile(&self) -> Option<f64> {
        match *self {
            LossMode::Quantile(tau) => Some(tau),
            LossMode::Mae => Some(0.5),
            LossMode::Mse => None,
        }
    }

    pub fn loss(&self, y: f64, y_hat: f64) -> f64 {
        match *self {
            LossMode::Quantile(tau) => pinball(y, y_hat, tau),
            LossMode::Mse => (y - y_hat).powi(2),
            LossMode::Mae => (y - y_hat).abs(),
        }
    }

    pub fn mean_loss(&self, y: &[f64], y_hat: &[f64]) -> f64 {
        y.iter().zip(y_hat).map(|(&a, &b)| self.loss(a, b)).sum::<f64>() / y.len() as f64
    }

    /// d loss / d y_hat. At the kink the `y < y_hat` branch is used.
    pub fn derivative(&self, y: f64, y_hat: f64) -> f64 {
        match *self {
            LossMode::Quantile(tau) => {
                if y > y_hat {
                    -tau
                } else {
                    1.0 - tau
                }
            }
            LossMode::Mse => 2.0 * (y_hat - y),
            LossMode::Mae => {
                if y > y_hat {
                    -1.0
                } else {
                    1.0
                }
            }
        }
    }

    /// Pseudo-residual fitted by each boosting round.
    pub fn negative_gradient(&self, y: f64, y_hat: f64) -> f64 {
        match *self {
            LossMode::Quantile(tau) => {
                if y >= y_hat {
                    tau
                } else {
                    -(1.0 - tau)
                }
            }
            LossMode::Mse => y - y_hat,
            LossMode::Mae => {
                if y > y_hat {
                    1.0
                } else if y < y_hat {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Constant minimizing the summed loss over `values`; reorders them.
    pub fn optimal_constant(&self, values: &mut [f64]) -> f64 {
        match self.target_quantile() {
            Some(tau) => quantile_of(values, tau),
            None => values.iter().sum::<f64>() / values.len() as f64,
        }
    }
}
