use std::collections::BTreeMap;

use serde::Serialize;

use super::ImpressionRecord;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    /// exID decreased between consecutive records.
    NonMonotoneExId {
        index: usize,
        previous: u64,
        current: u64,
    },
    /// The record breaks one of its own invariants.
    InvalidRecord { index: usize, message: String },
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidationReport {
    pub impressions: usize,
    pub clicked: usize,
    /// Impression count keyed by nbSlots.
    pub per_slot_counts: BTreeMap<usize, usize>,
    pub min_propensity: Option<f64>,
    pub max_propensity: Option<f64>,
    pub mean_propensity: Option<f64>,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks record invariants and exID ordering across a log.
pub fn validate_log<'a, I>(records: I) -> ValidationReport
where
    I: IntoIterator<Item = &'a ImpressionRecord>,
{
    let mut report = ValidationReport::default();
    let mut prev: Option<u64> = None;
    let mut sum_q = 0.0;
    for (index, r) in records.into_iter().enumerate() {
        report.impressions += 1;
        if r.was_ad_clicked {
            report.clicked += 1;
        }
        *report.per_slot_counts.entry(r.nb_slots).or_default() += 1;
        if let Err(e) = r.validate() {
            report.violations.push(Violation::InvalidRecord {
                index,
                message: e.to_string(),
            });
        }
        if let Some(p) = prev {
            if r.ex_id < p {
                report.violations.push(Violation::NonMonotoneExId {
                    index,
                    previous: p,
                    current: r.ex_id,
                });
            }
        }
        prev = Some(r.ex_id);
        let q = r.propensity;
        report.min_propensity = Some(report.min_propensity.map_or(q, |m| m.min(q)));
        report.max_propensity = Some(report.max_propensity.map_or(q, |m| m.max(q)));
        sum_q += q;
    }
    if report.impressions > 0 {
        report.mean_propensity = Some(sum_q / report.impressions as f64);
    }
    report
}
