use serde::{Deserialize, Serialize};

use super::report::{EstimateReport, Interval};
use super::EstimatorError;
use crate::logformat::ImpressionRecord;
use crate::numeric::CompensatedSum;
use crate::policies::{importance_weight, Policy};

/// Mergeable sufficient statistics for the sub-sampling-corrected estimators.
///
/// Each kept record contributes `w̃ = (π/q) · v` with `v = 1/Pr(O=1|δ)`,
/// which is 1 for clicked records and `1/keep_prob` otherwise. The `dev`
/// sums track `w̃ - v`, which vanishes for the logging policy and keeps the
/// control variate's interval exactly zero there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorAccumulator {
    keep_prob: f64,
    sum_w: CompensatedSum,
    sum_dw: CompensatedSum,
    sum_w2: CompensatedSum,
    sum_dw2: CompensatedSum,
    sum_dw_w: CompensatedSum,
    sum_dev: CompensatedSum,
    sum_dev2: CompensatedSum,
    sum_dev_v: CompensatedSum,
    clicked: u64,
    unclicked_kept: u64,
}

impl EstimatorAccumulator {
    pub fn new(keep_prob: f64) -> Result<Self, EstimatorError> {
        if !(keep_prob > 0.0 && keep_prob <= 1.0) {
            return Err(EstimatorError::KeepProb(keep_prob));
        }
        Ok(Self {
            keep_prob,
            sum_w: CompensatedSum::default(),
            sum_dw: CompensatedSum::default(),
            sum_w2: CompensatedSum::default(),
            sum_dw2: CompensatedSum::default(),
            sum_dw_w: CompensatedSum::default(),
            sum_dev: CompensatedSum::default(),
            sum_dev2: CompensatedSum::default(),
            sum_dev_v: CompensatedSum::default(),
            clicked: 0,
            unclicked_kept: 0,
        })
    }

    pub fn keep_prob(&self) -> f64 {
        self.keep_prob
    }

    fn inverse_keep(&self, clicked: bool) -> f64 {
        if clicked {
            1.0
        } else {
            1.0 / self.keep_prob
        }
    }

    /// Adds one kept record with importance weight `π(y|x)/q`.
    pub fn add(&mut self, weight: f64, clicked: bool) -> Result<(), EstimatorError> {
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(EstimatorError::Weight(weight));
        }
        let v = self.inverse_keep(clicked);
        let w = weight * v;
        let dev = w - v;
        self.sum_w.add(w);
        self.sum_w2.add(w * w);
        if clicked {
            self.sum_dw.add(w);
            self.sum_dw2.add(w * w);
            self.sum_dw_w.add(w * w);
            self.clicked += 1;
        } else {
            self.unclicked_kept += 1;
        }
        self.sum_dev.add(dev);
        self.sum_dev2.add(dev * dev);
        self.sum_dev_v.add(dev * v);
        Ok(())
    }

    /// Adds a kept impression evaluated under `policy`.
    pub fn accumulate(
        &mut self,
        impression: &ImpressionRecord,
        policy: &dyn Policy,
    ) -> Result<(), EstimatorError> {
        let weight = importance_weight(policy, impression)?;
        self.add(weight, impression.was_ad_clicked)
    }

    pub fn merge(&mut self, other: &Self) -> Result<(), EstimatorError> {
        if self.keep_prob != other.keep_prob {
            return Err(EstimatorError::KeepMismatch(self.keep_prob, other.keep_prob));
        }
        self.sum_w.merge(&other.sum_w);
        self.sum_dw.merge(&other.sum_dw);
        self.sum_w2.merge(&other.sum_w2);
        self.sum_dw2.merge(&other.sum_dw2);
        self.sum_dw_w.merge(&other.sum_dw_w);
        self.sum_dev.merge(&other.sum_dev);
        self.sum_dev2.merge(&other.sum_dev2);
        self.sum_dev_v.merge(&other.sum_dev_v);
        self.clicked += other.clicked;
        self.unclicked_kept += other.unclicked_kept;
        Ok(())
    }

    pub fn clicked(&self) -> u64 {
        self.clicked
    }

    pub fn unclicked_kept(&self) -> u64 {
        self.unclicked_kept
    }

    pub fn kept(&self) -> u64 {
        self.clicked + self.unclicked_kept
    }

    pub fn sum_w(&self) -> f64 {
        self.sum_w.value()
    }

    pub fn sum_dw(&self) -> f64 {
        self.sum_dw.value()
    }

    pub fn sum_w2(&self) -> f64 {
        self.sum_w2.value()
    }

    pub fn sum_dw2(&self) -> f64 {
        self.sum_dw2.value()
    }

    pub fn sum_dw_w(&self) -> f64 {
        self.sum_dw_w.value()
    }

    /// `N̂ = #{δ=1} + #{δ=0 kept} / keep_prob`.
    pub fn n_hat(&self) -> f64 {
        self.clicked as f64 + self.unclicked_kept as f64 / self.keep_prob
    }

    /// `Σ v²`, from the counts.
    fn sum_v2(&self) -> f64 {
        let v = 1.0 / self.keep_prob;
        self.clicked as f64 + self.unclicked_kept as f64 * v * v
    }

    fn require_data(&self) -> Result<f64, EstimatorError> {
        let n = self.n_hat();
        if n > 0.0 {
            Ok(n)
        } else {
            Err(EstimatorError::Empty)
        }
    }

    pub fn ips(&self) -> Result<f64, EstimatorError> {
        Ok(self.sum_dw() / self.require_data()?)
    }

    pub fn control_variate(&self) -> Result<f64, EstimatorError> {
        Ok(self.sum_w() / self.require_data()?)
    }

    pub fn snips(&self) -> Result<f64, EstimatorError> {
        let c = self.control_variate()?;
        if c <= 0.0 {
            return Err(EstimatorError::NoOverlap);
        }
        Ok(self.ips()? / c)
    }

    /// Variance of `ips`, linearizing the ratio `Σ δw̃ / Σ v` so the
    /// randomness of `N̂` is included.
    pub fn ips_variance(&self) -> Result<f64, EstimatorError> {
        let n = self.require_data()?;
        let r = self.sum_dw() / n;
        // Σ δw̃·v = Σ δw̃ since v = 1 wherever δ = 1.
        let ss = self.sum_dw2() - 2.0 * r * self.sum_dw() + r * r * self.sum_v2();
        Ok(ss.max(0.0) / (n * n))
    }

    /// Variance of the control variate, linearized like [`Self::ips_variance`].
    pub fn control_variate_variance(&self) -> Result<f64, EstimatorError> {
        let n = self.require_data()?;
        let shift = self.sum_dev.value() / n;
        let ss = self.sum_dev2.value() - 2.0 * shift * self.sum_dev_v.value()
            + shift * shift * self.sum_v2();
        Ok(ss.max(0.0) / (n * n))
    }

    /// Delta-method variance of `snips` from the paired `(δw̃, w̃)` sums.
    pub fn snips_variance(&self) -> Result<f64, EstimatorError> {
        let n = self.require_data()?;
        let c = self.control_variate()?;
        let s = self.snips()?;
        let ss = self.sum_dw2() - 2.0 * s * self.sum_dw_w() + s * s * self.sum_w2();
        Ok(ss.max(0.0) / (n * n * c * c))
    }

    /// Point estimates with `z`-scaled normal intervals.
    pub fn report(&self, z: f64) -> Result<EstimateReport, EstimatorError> {
        if self.kept() < 2 {
            return Err(EstimatorError::InsufficientData { kept: self.kept() });
        }
        let ips = self.ips()?;
        let c_hat = self.control_variate()?;
        let snips = self.snips()?;
        let se_ips = self.ips_variance()?.sqrt();
        let se_c_hat = self.control_variate_variance()?.sqrt();
        let se_snips = self.snips_variance()?.sqrt();
        Ok(EstimateReport {
            n_hat: self.n_hat(),
            ips,
            c_hat,
            snips,
            se_ips,
            se_c_hat,
            se_snips,
            ci_ips: Interval::around(ips, z * se_ips),
            ci_c_hat: Interval::around(c_hat, z * se_c_hat),
            ci_snips: Interval::around(snips, z * se_snips),
            kept: self.kept(),
            clicked: self.clicked,
            z,
        })
    }
}
