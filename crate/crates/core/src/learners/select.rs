use rayon::prelude::*;
use serde::Serialize;

use super::data::PreparedLog;
use super::grid::Hyperparams;
use super::train::Candidate;
use super::LearnerError;
use crate::estimators::{evaluate_policy, EstimateReport, EstimatorError};
use crate::logformat::ImpressionRecord;
use crate::policies::{LinearRankingPolicy, Policy, PolicyMode};

/// A learned policy with its selection score and test-set estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedPolicyReport {
    pub method: String,
    pub policy: LinearRankingPolicy,
    pub hyperparams: Hyperparams,
    pub validation_ips: f64,
    pub test_report: EstimateReport,
}

/// Index and validation IPS of the best candidate; ties go to the earlier one.
pub fn select_candidate(
    candidates: &[Candidate],
    mode: PolicyMode,
    validation: &PreparedLog,
) -> Result<(usize, f64), LearnerError> {
    if validation.kept() == 0 {
        return Err(LearnerError::EmptyValidation);
    }
    let dim = validation.dimension();
    let scores: Vec<f64> = candidates
        .par_iter()
        .map_init(
            || vec![0.0; dim],
            |w, c| {
                for &(i, x) in &c.weights {
                    w[i as usize] = x;
                }
                let s = validation.ips(w, mode);
                for &(i, _) in &c.weights {
                    w[i as usize] = 0.0;
                }
                s
            },
        )
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        if s.is_nan() {
            continue;
        }
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.ok_or(LearnerError::NoCandidates)
}

pub(crate) fn candidate_policy(
    method: &str,
    candidate: &Candidate,
    mode: PolicyMode,
    validation: &PreparedLog,
) -> Result<LinearRankingPolicy, LearnerError> {
    Ok(LinearRankingPolicy::from_sparse(
        method,
        validation.featurizer().clone(),
        &candidate.weights,
        1.0,
        mode,
    )?)
}

/// Picks the candidate with the highest validation IPS and estimates it on
/// the test log.
pub fn select_and_evaluate(
    method: &str,
    candidates: &[Candidate],
    mode: PolicyMode,
    validation: &PreparedLog,
    test: &[ImpressionRecord],
    z: f64,
) -> Result<TrainedPolicyReport, LearnerError> {
    let (index, validation_ips) = select_candidate(candidates, mode, validation)?;
    let candidate = &candidates[index];
    let policy = candidate_policy(method, candidate, mode, validation)?;
    let test_report = evaluate_policy(test, &policy, validation.keep_prob())?.report(z)?;
    Ok(TrainedPolicyReport {
        method: method.to_string(),
        policy,
        hyperparams: candidate.hyperparams,
        validation_ips,
        test_report,
    })
}

/// One line of a learner comparison. The report is absent when the test
/// split cannot support it, for example when a deterministic policy never
/// agrees with the logged action.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkRow {
    pub method: String,
    pub hyperparams: String,
    pub validation_ips: Option<f64>,
    pub report: Option<EstimateReport>,
    pub note: Option<String>,
}

pub(crate) fn test_row(
    method: &str,
    hyperparams: String,
    validation_ips: Option<f64>,
    policy: &dyn Policy,
    test: &[ImpressionRecord],
    keep_prob: f64,
    z: f64,
) -> Result<BenchmarkRow, LearnerError> {
    let (report, note) = match evaluate_policy(test, policy, keep_prob).and_then(|a| a.report(z)) {
        Ok(r) => (Some(r), None),
        Err(e @ (EstimatorError::NoOverlap | EstimatorError::InsufficientData { .. })) => {
            (None, Some(e.to_string()))
        }
        Err(e) => return Err(e.into()),
    };
    Ok(BenchmarkRow {
        method: method.to_string(),
        hyperparams,
        validation_ips,
        report,
        note,
    })
}

/// Test-set row for a fixed reference policy such as uniform or logging.
pub fn reference_row(
    method: &str,
    policy: &dyn Policy,
    test: &[ImpressionRecord],
    keep_prob: f64,
    z: f64,
) -> Result<BenchmarkRow, LearnerError> {
    test_row(method, "-".into(), None, policy, test, keep_prob, z)
}
