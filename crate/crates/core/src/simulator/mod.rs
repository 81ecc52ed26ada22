//! Synthetic banner world: Plackett-Luce logging, position-biased clicks,
//! sub-sampling of unclicked impressions, and an exact enumeration oracle.

mod arms;
mod config;
mod generate;
mod model;
mod oracle;
mod plackett_luce;

use thiserror::Error;

use crate::logformat::LogError;
use crate::policies::PolicyError;

pub use arms::{FixedArmWorld, ARM_FEATURE};
pub use config::{ConfigError, WorldConfig, FIRST_PRODUCT_CATEGORICAL};
pub use generate::{
    generate_log, subsample, FnSink, GenerationSummary, ImpressionSink, World,
};
pub use model::{
    expected_reward, logging_scores, sample_clicks, sample_context, ClickModel, ContextSample,
    GroundTruthModel,
};
pub use oracle::{context_value, true_policy_value, ENUMERATION_CAP};
pub use plackett_luce::{
    check_ranking, for_each_ranking, propensity_of, sample_ranking, RankingError,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ranking(#[from] RankingError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("writing impression: {0}")]
    Sink(#[from] LogError),
    #[error("context has {count} rankings, above the enumeration cap of {ENUMERATION_CAP}")]
    EnumerationCap { count: f64 },
    #[error("no contexts to evaluate")]
    NoContexts,
}
