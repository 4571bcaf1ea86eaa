//! Uniform configuration, training, inference and persistence for all model
//! families.

use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    fit_gbt, fit_linear_ols, fit_linear_sgd_quantile, fit_mlp, fit_qrf, FeatureMatrix, GbtModel, GbtParams,
    LinearModel, LossMode, Matrix, Mlp, MlpParams, ModelError, QrfModel, QrfParams, SgdParams, Standardizer,
};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearParams {
    pub loss: LossMode,
    /// Used for quantile and absolute-error losses; squared error is solved
    /// in closed form.
    pub sgd: SgdParams,
}

impl Default for LinearParams {
    fn default() -> Self {
        Self {
            loss: LossMode::Quantile(0.2),
            sgd: SgdParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Linear,
    Qrf,
    Gbt,
    Mlp,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Linear, ModelKind::Qrf, ModelKind::Gbt, ModelKind::Mlp];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Linear => "linear",
            ModelKind::Qrf => "qrf",
            ModelKind::Gbt => "gbt",
            ModelKind::Mlp => "mlp",
        }
    }

    pub fn default_config(self) -> ModelConfig {
        match self {
            ModelKind::Linear => ModelConfig::Linear(LinearParams::default()),
            ModelKind::Qrf => ModelConfig::Qrf(QrfParams::default()),
            ModelKind::Gbt => ModelConfig::Gbt(GbtParams::default()),
            ModelKind::Mlp => ModelConfig::Mlp(MlpParams::default()),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| ModelError::Config(format!("unknown model kind {s:?}")))
    }
}

/// Hyperparameters of one model, tagged by `"kind"` in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelConfig {
    Linear(LinearParams),
    Qrf(QrfParams),
    Gbt(GbtParams),
    Mlp(MlpParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelParams {
    Linear(LinearModel),
    Qrf(QrfModel),
    Gbt(GbtModel),
    Mlp(Mlp),
}

impl ModelConfig {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelConfig::Linear(_) => ModelKind::Linear,
            ModelConfig::Qrf(_) => ModelKind::Qrf,
            ModelConfig::Gbt(_) => ModelKind::Gbt,
            ModelConfig::Mlp(_) => ModelKind::Mlp,
        }
    }

    pub fn loss(&self) -> LossMode {
        match self {
            ModelConfig::Linear(p) => p.loss,
            ModelConfig::Qrf(p) => p.loss,
            ModelConfig::Gbt(p) => p.loss,
            ModelConfig::Mlp(p) => p.loss,
        }
    }

    pub fn with_loss(mut self, loss: LossMode) -> Self {
        match &mut self {
            ModelConfig::Linear(p) => p.loss = loss,
            ModelConfig::Qrf(p) => p.loss = loss,
            ModelConfig::Gbt(p) => p.loss = loss,
            ModelConfig::Mlp(p) => p.loss = loss,
        }
        self
    }

    fn needs_standardization(&self) -> bool {
        match self {
            ModelConfig::Linear(p) => p.loss != LossMode::Mse,
            ModelConfig::Mlp(_) => true,
            _ => false,
        }
    }

    /// Trains on `data`. Standardization statistics come from `data` alone.
    pub fn fit(&self, data: &FeatureMatrix, seed: u64) -> Result<TrainedModel, ModelError> {
        self.loss().validate()?;
        let standardizer = self.needs_standardization().then(|| Standardizer::fit(&data.x));
        let scaled;
        let train = match &standardizer {
            Some(s) => {
                scaled = FeatureMatrix::new(s.transform(&data.x), data.y.clone())?;
                &scaled
            }
            None => data,
        };
        let params = match self {
            // too few rows to identify the slopes: best constant
            ModelConfig::Linear(p) if p.loss == LossMode::Mse && train.n() <= train.d() => {
                log::warn!("{} rows for {} features; fitting a constant", train.n(), train.d());
                ModelParams::Linear(LinearModel {
                    coef: vec![0.0; train.d()],
                    intercept: LossMode::Mse.optimal_constant(&mut train.y.clone()),
                    epoch_loss: Vec::new(),
                })
            }
            ModelConfig::Linear(p) if p.loss == LossMode::Mse => ModelParams::Linear(fit_linear_ols(train)?),
            ModelConfig::Linear(p) => ModelParams::Linear(fit_linear_sgd_quantile(train, p.loss, &p.sgd, seed)?),
            // feature-subset sweeps can leave fewer features than a tuned mtry
            ModelConfig::Qrf(p) => {
                let p = QrfParams {
                    min_leaf: p.min_leaf.min(train.n()),
                    mtry: p.mtry.map(|m| m.min(train.d())),
                    ..p.clone()
                };
                ModelParams::Qrf(fit_qrf(train, &p, seed)?)
            }
            ModelConfig::Gbt(p) => ModelParams::Gbt(fit_gbt(train, p, seed)?),
            ModelConfig::Mlp(p) => ModelParams::Mlp(fit_mlp(train, p, seed)?),
        };
        Ok(TrainedModel {
            version: MODEL_FORMAT_VERSION,
            config: self.clone(),
            standardizer,
            seed,
            n_features: data.d(),
            params,
        })
    }
}

/// A fitted model with everything needed for inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub version: u32,
    pub config: ModelConfig,
    pub standardizer: Option<Standardizer>,
    pub seed: u64,
    pub n_features: usize,
    pub params: ModelParams,
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        self.config.kind()
    }

    pub fn loss(&self) -> LossMode {
        self.config.loss()
    }

    fn predict_scaled(&self, z: &[f64]) -> f64 {
        match &self.params {
            ModelParams::Linear(m) => m.predict_row(z),
            ModelParams::Qrf(m) => m.predict_row(z),
            ModelParams::Gbt(m) => m.predict_row(z),
            ModelParams::Mlp(m) => m.predict_row(z),
        }
    }

    pub fn predict_row(&self, x: &[f64]) -> Result<f64, ModelError> {
        if x.len() != self.n_features {
            return Err(ModelError::Contract(format!(
                "model expects {} features, got {}",
                self.n_features,
                x.len()
            )));
        }
        Ok(match &self.standardizer {
            Some(s) => {
                let mut z = vec![0.0; x.len()];
                s.transform_row(x, &mut z);
                self.predict_scaled(&z)
            }
            None => self.predict_scaled(x),
        })
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>, ModelError> {
        if x.n_cols() != self.n_features {
            return Err(ModelError::Contract(format!(
                "model expects {} features, got {}",
                self.n_features,
                x.n_cols()
            )));
        }
        (0..x.n_rows())
            .into_par_iter()
            .map(|i| self.predict_row(x.row(i)))
            .collect()
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        serde_json::to_string(self).map_err(|e| ModelError::Artifact(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ModelError::Artifact(e.to_string()))?;
        match value.get("version").and_then(serde_json::Value::as_u64) {
            Some(v) if v == u64::from(MODEL_FORMAT_VERSION) => {}
            Some(v) => return Err(ModelError::Artifact(format!("unsupported model format version {v}"))),
            None => return Err(ModelError::Artifact("model file lacks a version field".into())),
        }
        serde_json::from_value(value).map_err(|e| ModelError::Artifact(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json()?).map_err(|e| ModelError::Artifact(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|e| ModelError::Artifact(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
