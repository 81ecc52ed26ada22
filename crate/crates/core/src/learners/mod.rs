//! Off-policy learners for the 1-slot task: Regression, IPS, DRO and POEM over
//! linear scorers, with a seeded train/validate/test split and
//! hyper-parameter selection on validation IPS.
//!
//! Every learner sees the same prepared data: kept impressions featurized
//! once, with the logged product always at candidate index 0.

mod benchmark;
mod data;
mod grid;
mod objectives;
mod optimizer;
mod select;
mod split;
mod train;

use thiserror::Error;

use crate::estimators::EstimatorError;
use crate::kv::KvError;
use crate::policies::PolicyError;

pub use benchmark::{benchmark_tsv, run_benchmark, BenchmarkConfig, BenchmarkReport};
pub use data::{Example, PreparedLog};
pub use grid::{HyperGrid, Hyperparams};
pub use objectives::{
    dro_values, ips_values, oaa_weights, OaaObjective, PoemObjective, PoemStats,
    RegressionObjective,
};
pub use select::{
    reference_row, select_and_evaluate, select_candidate, BenchmarkRow, TrainedPolicyReport,
};
pub use split::{split_log, LogSplit, EVEN_SPLIT};
pub use train::{
    dro_training_weights, ips_training_weights, reward_predictions, train_dro, train_ips,
    train_poem, train_regression, Candidate, POEM_BATCH,
};

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("split ratios must be non-negative and sum to 1, got {0:?}")]
    Ratios([f64; 3]),
    #[error("empty training log")]
    EmptyTrain,
    #[error("empty validation log")]
    EmptyValidation,
    #[error("no clicked impressions in the training log")]
    NoRewards,
    #[error("learners need 1-slot impressions; exID {ex_id} has {slots} slots")]
    MultiSlot { ex_id: u64, slots: usize },
    #[error("exID {ex_id} has non-positive propensity {propensity}")]
    Propensity { ex_id: u64, propensity: f64 },
    #[error("invalid hyper-parameter grid: {0}")]
    Grid(String),
    #[error("reward predictions cover {found} impressions, training log has {expected}")]
    Predictions { expected: usize, found: usize },
    #[error("no grid point produced usable weights")]
    NoCandidates,
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Kv(#[from] KvError),
}

#[cfg(test)]
mod tests;
