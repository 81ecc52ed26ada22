use serde::{Deserialize, Serialize};

/// Two-sided 99% normal quantile.
pub const Z_99: f64 = 2.576;

/// Symmetric interval `center ± half_width`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn around(center: f64, half_width: f64) -> Self {
        Self {
            lower: center - half_width,
            upper: center + half_width,
        }
    }

    pub fn half_width(&self) -> f64 {
        (self.upper - self.lower) / 2.0
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// Estimates for one policy on one log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub n_hat: f64,
    pub ips: f64,
    pub c_hat: f64,
    pub snips: f64,
    pub se_ips: f64,
    pub se_c_hat: f64,
    pub se_snips: f64,
    pub ci_ips: Interval,
    pub ci_c_hat: Interval,
    pub ci_snips: Interval,
    pub kept: u64,
    pub clicked: u64,
    pub z: f64,
}

impl EstimateReport {
    pub fn ips_half_width(&self) -> f64 {
        self.z * self.se_ips
    }

    pub fn c_hat_half_width(&self) -> f64 {
        self.z * self.se_c_hat
    }

    pub fn snips_half_width(&self) -> f64 {
        self.z * self.se_snips
    }
}
