//! Regression models for MCS prediction with pinball, squared and absolute
//! error objectives.

mod gbt;
mod linear;
mod loss;
mod matrix;
mod mlp;
mod model;
mod qrf;
mod tree;

use thiserror::Error;

pub use gbt::{fit_gbt, GbtModel, GbtParams};
pub use linear::{fit_linear_ols, fit_linear_sgd_quantile, LinearModel, SgdParams};
pub use loss::{pinball_loss, quantile_of, weighted_quantile, LossMode};
pub use matrix::{FeatureMatrix, Matrix, Standardizer};
pub use mlp::{fit_mlp, Activation, AdamParams, Mlp, MlpParams};
pub use model::{LinearParams, ModelConfig, ModelKind, ModelParams, TrainedModel, MODEL_FORMAT_VERSION};
pub use qrf::{fit_qrf, QrfModel, QrfParams};
pub use tree::{BinnedMatrix, Node, Tree, TreeParams};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("training diverged at epoch {epoch} (last stable epoch: {last_stable:?})")]
    Diverged { epoch: usize, last_stable: Option<usize> },
    #[error("model artifact: {0}")]
    Artifact(String),
}
