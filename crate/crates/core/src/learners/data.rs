use rayon::prelude::*;

use super::LearnerError;
use crate::logformat::ImpressionRecord;
use crate::policies::{dot, exp_scores, Featurizer, PolicyMode, SparseVec};

/// One kept 1-slot impression, featurized. Candidate 0 is the logged product.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub clicked: bool,
    pub propensity: f64,
    /// `1 / Pr(O=1 | δ)`.
    pub inv_keep: f64,
    pub candidates: Vec<SparseVec>,
}

impl Example {
    pub fn reward(&self) -> f64 {
        if self.clicked {
            1.0
        } else {
            0.0
        }
    }

    pub fn scores(&self, weights: &[f64]) -> Vec<f64> {
        self.candidates.iter().map(|x| dot(weights, x)).collect()
    }

    /// Probability that a linear policy with `weights` picks the logged product.
    pub fn logged_probability(&self, weights: &[f64], mode: PolicyMode) -> f64 {
        let scores = self.scores(weights);
        match mode {
            PolicyMode::Deterministic => {
                let top = scores[0];
                if scores[1..].iter().all(|s| *s <= top) {
                    1.0
                } else {
                    0.0
                }
            }
            PolicyMode::Stochastic => softmax(&scores)[0],
        }
    }
}

/// Plackett-Luce first-slot probabilities at temperature 1.
pub(crate) fn softmax(scores: &[f64]) -> Vec<f64> {
    let e = exp_scores(scores, 1.0);
    let total: f64 = e.iter().sum();
    e.iter().map(|x| x / total).collect()
}

/// A featurized split of a sub-sampled log.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedLog {
    examples: Vec<Example>,
    keep_prob: f64,
    featurizer: Featurizer,
    clicked: usize,
}

impl PreparedLog {
    pub fn new(
        log: &[ImpressionRecord],
        featurizer: &Featurizer,
        keep_prob: f64,
    ) -> Result<Self, LearnerError> {
        if !(keep_prob > 0.0 && keep_prob <= 1.0) {
            return Err(crate::estimators::EstimatorError::KeepProb(keep_prob).into());
        }
        let examples = log
            .par_iter()
            .map(|r| {
                if r.nb_slots != 1 {
                    return Err(LearnerError::MultiSlot {
                        ex_id: r.ex_id,
                        slots: r.nb_slots,
                    });
                }
                if !(r.propensity > 0.0 && r.propensity.is_finite()) {
                    return Err(LearnerError::Propensity {
                        ex_id: r.ex_id,
                        propensity: r.propensity,
                    });
                }
                Ok(Example {
                    clicked: r.was_ad_clicked,
                    propensity: r.propensity,
                    inv_keep: if r.was_ad_clicked { 1.0 } else { 1.0 / keep_prob },
                    candidates: r
                        .candidates
                        .iter()
                        .map(|c| featurizer.featurize(&r.display_features, &c.features))
                        .collect(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::from_examples(examples, keep_prob, featurizer.clone()))
    }

    /// Wraps already featurized examples; indices must lie within
    /// `featurizer.dimension()`.
    pub fn from_examples(examples: Vec<Example>, keep_prob: f64, featurizer: Featurizer) -> Self {
        let clicked = examples.iter().filter(|e| e.clicked).count();
        Self {
            examples,
            keep_prob,
            featurizer,
            clicked,
        }
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn keep_prob(&self) -> f64 {
        self.keep_prob
    }

    pub fn featurizer(&self) -> &Featurizer {
        &self.featurizer
    }

    pub fn dimension(&self) -> usize {
        self.featurizer.dimension()
    }

    pub fn kept(&self) -> usize {
        self.examples.len()
    }

    pub fn clicked(&self) -> usize {
        self.clicked
    }

    pub fn n_hat(&self) -> f64 {
        let clicked = self.clicked();
        clicked as f64 + (self.kept() - clicked) as f64 / self.keep_prob
    }

    /// IPS estimate of a linear policy; only clicked impressions contribute.
    pub fn ips(&self, weights: &[f64], mode: PolicyMode) -> f64 {
        let n = self.n_hat();
        if n == 0.0 {
            return 0.0;
        }
        let total: f64 = self
            .examples
            .par_iter()
            .filter(|e| e.clicked)
            .map(|e| e.logged_probability(weights, mode) / e.propensity)
            .collect::<Vec<_>>()
            .into_iter()
            .collect::<crate::numeric::CompensatedSum>()
            .value();
        total / n
    }
}
