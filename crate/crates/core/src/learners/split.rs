use super::LearnerError;
use crate::logformat::ImpressionRecord;
use crate::numeric::mix64;

pub const EVEN_SPLIT: [f64; 3] = [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LogSplit {
    pub train: Vec<ImpressionRecord>,
    pub validate: Vec<ImpressionRecord>,
    pub test: Vec<ImpressionRecord>,
}

/// Uniform in `[0, 1)`, a pure function of `(ex_id, seed)`.
fn coordinate(ex_id: u64, seed: u64) -> f64 {
    (mix64(mix64(seed) ^ ex_id) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Assigns each record to train, validate or test by a seeded hash of its
/// exID, so the partition does not depend on record order.
pub fn split_log(
    log: &[ImpressionRecord],
    ratios: [f64; 3],
    seed: u64,
) -> Result<LogSplit, LearnerError> {
    if ratios.iter().any(|r| r.is_nan() || *r < 0.0) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(LearnerError::Ratios(ratios));
    }
    let first = ratios[0];
    let second = ratios[0] + ratios[1];
    let mut out = LogSplit::default();
    for r in log {
        let u = coordinate(r.ex_id, seed);
        let bucket = if u < first {
            &mut out.train
        } else if u < second {
            &mut out.validate
        } else {
            &mut out.test
        };
        bucket.push(r.clone());
    }
    Ok(out)
}
