//! Counterfactual estimators corrected for sub-sampled unclicked impressions:
//! `N̂`, IPS, the control variate `Ĉ`, SNIPS, their normal-approximation
//! intervals, and the ε-mixture diagnostic sweep.

mod accumulator;
mod evaluate;
mod output;
mod report;

use thiserror::Error;

use crate::policies::PolicyError;

pub use accumulator::EstimatorAccumulator;
pub use evaluate::{
    accumulate_mixture, default_epsilon_grid, diagnostic_sweep, evaluate_policy,
    logged_probabilities, propensity_stats, sweep_rows, LoggedProbability, PropensityStats,
    SweepRow, SHARD_SIZE,
};
pub use output::{
    jsonl, propensity_tsv, report_cells, reports_tsv, sweep_tsv, tsv_number, LabelledReport,
    REPORT_COLUMNS, TSV_DIGITS,
};
pub use report::{EstimateReport, Interval, Z_99};

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("keep probability {0} outside (0, 1]")]
    KeepProb(f64),
    #[error("cannot merge accumulators with keep probabilities {0} and {1}")]
    KeepMismatch(f64, f64),
    #[error("importance weight {0} is not a finite non-negative number")]
    Weight(f64),
    #[error("epsilon {0} outside [0, 1]")]
    Epsilon(f64),
    #[error("empty log")]
    Empty,
    #[error("need at least 2 kept impressions, have {kept}")]
    InsufficientData { kept: u64 },
    #[error("no overlap: the policy puts zero mass on every logged action")]
    NoOverlap,
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

#[cfg(test)]
mod tests;
