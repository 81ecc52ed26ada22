//! Table rendering: tab-separated text for people, JSON lines for programs.
//!
//! Click-rate columns are scaled by 10^4. Numbers carry 12 significant
//! digits in TSV and full precision in JSON.

use serde::Serialize;

use super::evaluate::{PropensityStats, SweepRow};
use super::report::EstimateReport;
use crate::numeric::fmt_sig;

pub const TSV_DIGITS: usize = 12;
const CTR_SCALE: f64 = 1e4;

pub const REPORT_COLUMNS: [&str; 9] = [
    "c_hat",
    "c_hat_hw",
    "ips_x1e4",
    "ips_hw_x1e4",
    "snips_x1e4",
    "snips_hw_x1e4",
    "n_hat",
    "kept",
    "clicked",
];

/// A number at [`TSV_DIGITS`] significant digits.
pub fn tsv_number(x: f64) -> String {
    fmt_sig(x, TSV_DIGITS)
}

/// Cells for [`REPORT_COLUMNS`], in order.
pub fn report_cells(r: &EstimateReport) -> Vec<String> {
    vec![
        tsv_number(r.c_hat),
        tsv_number(r.c_hat_half_width()),
        tsv_number(r.ips * CTR_SCALE),
        tsv_number(r.ips_half_width() * CTR_SCALE),
        tsv_number(r.snips * CTR_SCALE),
        tsv_number(r.snips_half_width() * CTR_SCALE),
        tsv_number(r.n_hat),
        r.kept.to_string(),
        r.clicked.to_string(),
    ]
}

/// Header plus one line per labelled report.
pub fn reports_tsv(label_column: &str, rows: &[(String, &EstimateReport)]) -> String {
    let mut out = String::new();
    out.push_str(label_column);
    for c in REPORT_COLUMNS {
        out.push('\t');
        out.push_str(c);
    }
    out.push('\n');
    for (label, r) in rows {
        out.push_str(label);
        for cell in report_cells(r) {
            out.push('\t');
            out.push_str(&cell);
        }
        out.push('\n');
    }
    out
}

pub fn sweep_tsv(rows: &[SweepRow]) -> String {
    let labelled: Vec<(String, &EstimateReport)> =
        rows.iter().map(|r| (tsv_number(r.epsilon), &r.report)).collect();
    reports_tsv("epsilon", &labelled)
}

pub fn propensity_tsv(stats: &[PropensityStats]) -> String {
    let mut out =
        String::from("slots\timpressions\tn_hat\tavg_inv_propensity\tmax_inv_propensity\n");
    for s in stats {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            s.slots,
            s.impressions,
            tsv_number(s.n_hat),
            tsv_number(s.avg_inv_propensity),
            tsv_number(s.max_inv_propensity)
        ));
    }
    out
}

/// One compact JSON object per item, newline-terminated.
pub fn jsonl<T: Serialize>(items: &[T]) -> String {
    items
        .iter()
        .map(|i| serde_json::to_string(i).expect("plain data serializes") + "\n")
        .collect()
}

#[derive(Serialize)]
pub struct LabelledReport<'a> {
    pub label: &'a str,
    #[serde(flatten)]
    pub report: &'a EstimateReport,
}
