//! Offline MCS link adaptation for LTE sidelink drive-test traces.
//!
//! The crate turns per-millisecond MCS-sweep traces into supervised samples
//! (`ingest`), trains regressors that predict the highest decodable MCS
//! (`regressors`), and scores those predictions as achievable goodput against
//! oracle and fixed-MCS baselines (`goodput`, `evaluation`). `stats` computes
//! descriptive statistics of the collected data and `hyperopt` runs a seeded
//! random search over model hyperparameters.

pub mod cli;
pub mod evaluation;
pub mod goodput;
pub mod hyperopt;
pub mod ingest;
pub mod regressors;
pub mod seed;
pub mod stats;

pub use evaluation::{evaluate_model, EvalReport, ModelSpec};
pub use goodput::{GoodputReport, TbsTable};
pub use ingest::{Area, Dataset, PacketRecord, Sample, SweepSample};
pub use regressors::{FeatureMatrix, LossMode, Matrix, ModelConfig, TrainedModel};
