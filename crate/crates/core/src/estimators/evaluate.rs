use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::accumulator::EstimatorAccumulator;
use super::report::EstimateReport;
use super::EstimatorError;
use crate::logformat::ImpressionRecord;
use crate::policies::{mixture_probability, support_size, Policy};

/// Records per shard. Shards are accumulated independently and merged in log
/// order, so results do not depend on how many threads run.
pub const SHARD_SIZE: usize = 4096;

fn merge_in_order(
    shards: Vec<EstimatorAccumulator>,
    keep_prob: f64,
) -> Result<EstimatorAccumulator, EstimatorError> {
    let mut total = EstimatorAccumulator::new(keep_prob)?;
    for s in &shards {
        total.merge(s)?;
    }
    Ok(total)
}

/// Accumulates `policy` over a whole log.
pub fn evaluate_policy(
    log: &[ImpressionRecord],
    policy: &dyn Policy,
    keep_prob: f64,
) -> Result<EstimatorAccumulator, EstimatorError> {
    EstimatorAccumulator::new(keep_prob)?;
    let shards = log
        .par_chunks(SHARD_SIZE)
        .map(|chunk| {
            let mut acc = EstimatorAccumulator::new(keep_prob)?;
            for r in chunk {
                acc.accumulate(r, policy)?;
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>, EstimatorError>>()?;
    merge_in_order(shards, keep_prob)
}

/// What the ε sweep needs from one kept impression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoggedProbability {
    pub propensity: f64,
    pub clicked: bool,
    /// `π₀(y|x)` recomputed by the logging replica.
    pub logging: f64,
    /// `1/|Y|`.
    pub uniform: f64,
}

pub fn logged_probabilities(
    log: &[ImpressionRecord],
    logging_replica: &dyn Policy,
) -> Result<Vec<LoggedProbability>, EstimatorError> {
    log.par_iter()
        .map(|r| {
            Ok(LoggedProbability {
                propensity: r.propensity,
                clicked: r.was_ad_clicked,
                logging: logging_replica.probability(r, &r.logged_ranking())?,
                uniform: 1.0 / support_size(r),
            })
        })
        .collect()
}

/// Accumulates `π_ε` from precomputed probabilities. Produces the same bits
/// as [`evaluate_policy`] with an `EpsilonMixturePolicy` over the replica.
pub fn accumulate_mixture(
    rows: &[LoggedProbability],
    epsilon: f64,
    keep_prob: f64,
) -> Result<EstimatorAccumulator, EstimatorError> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(EstimatorError::Epsilon(epsilon));
    }
    EstimatorAccumulator::new(keep_prob)?;
    let shards = rows
        .par_chunks(SHARD_SIZE)
        .map(|chunk| {
            let mut acc = EstimatorAccumulator::new(keep_prob)?;
            for r in chunk {
                let p = mixture_probability(epsilon, r.uniform, r.logging);
                acc.add(p / r.propensity, r.clicked)?;
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>, EstimatorError>>()?;
    merge_in_order(shards, keep_prob)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub report: EstimateReport,
}

/// `{0, 2^-10, 2^-9, ..., 2^-1, 1}`.
pub fn default_epsilon_grid() -> Vec<f64> {
    std::iter::once(0.0)
        .chain((1..=10).rev().map(|e| 2f64.powi(-e)))
        .chain(std::iter::once(1.0))
        .collect()
}

/// One report per `ε`, evaluating `π_ε` against the logging replica.
pub fn diagnostic_sweep(
    log: &[ImpressionRecord],
    logging_replica: &dyn Policy,
    eps_grid: &[f64],
    keep_prob: f64,
    z: f64,
) -> Result<Vec<SweepRow>, EstimatorError> {
    let rows = logged_probabilities(log, logging_replica)?;
    sweep_rows(&rows, eps_grid, keep_prob, z)
}

pub fn sweep_rows(
    rows: &[LoggedProbability],
    eps_grid: &[f64],
    keep_prob: f64,
    z: f64,
) -> Result<Vec<SweepRow>, EstimatorError> {
    eps_grid
        .iter()
        .map(|&epsilon| {
            Ok(SweepRow {
                epsilon,
                report: accumulate_mixture(rows, epsilon, keep_prob)?.report(z)?,
            })
        })
        .collect()
}

/// Inverse-propensity statistics of one banner size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityStats {
    pub slots: usize,
    /// Kept impressions.
    pub impressions: u64,
    pub n_hat: f64,
    pub avg_inv_propensity: f64,
    pub max_inv_propensity: f64,
}

/// Per slot count: kept impressions, `N̂`, and the mean and max of `1/q` over
/// kept impressions.
pub fn propensity_stats<'a, I>(log: I, keep_prob: f64) -> Vec<PropensityStats>
where
    I: IntoIterator<Item = &'a ImpressionRecord>,
{
    #[derive(Default)]
    struct Slice {
        kept: u64,
        clicked: u64,
        inv: crate::numeric::CompensatedSum,
        max: f64,
    }
    let mut slices: BTreeMap<usize, Slice> = BTreeMap::new();
    for r in log {
        let s = slices.entry(r.nb_slots).or_default();
        let inv = 1.0 / r.propensity;
        s.kept += 1;
        s.clicked += u64::from(r.was_ad_clicked);
        s.inv.add(inv);
        s.max = s.max.max(inv);
    }
    slices
        .into_iter()
        .map(|(slots, s)| PropensityStats {
            slots,
            impressions: s.kept,
            n_hat: s.clicked as f64 + (s.kept - s.clicked) as f64 / keep_prob,
            avg_inv_propensity: s.inv.value() / s.kept as f64,
            max_inv_propensity: s.max,
        })
        .collect()
}
