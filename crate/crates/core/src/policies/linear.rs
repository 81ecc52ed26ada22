use std::fmt;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::featurizer::{dot, Featurizer, SparseVec};
use super::{BoundPolicy, Context, Policy, PolicyError};
use crate::simulator::propensity_of;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyMode {
    /// Plackett-Luce over `exp(temperature * <w, φ>)`.
    Stochastic,
    /// Candidates sorted by score, ties to the lower index.
    Deterministic,
}

impl fmt::Display for PolicyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyMode::Stochastic => "stochastic",
            PolicyMode::Deterministic => "deterministic",
        })
    }
}

/// Linear scorer `w · φ(c, p)` turned into a ranking policy.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRankingPolicy {
    pub name: String,
    pub featurizer: Featurizer,
    /// Dense, `featurizer.dimension()` entries.
    pub weights: Vec<f64>,
    pub temperature: f64,
    pub mode: PolicyMode,
}

impl LinearRankingPolicy {
    pub fn new(
        name: impl Into<String>,
        featurizer: Featurizer,
        weights: Vec<f64>,
        temperature: f64,
        mode: PolicyMode,
    ) -> Result<Self, PolicyError> {
        if weights.len() != featurizer.dimension() {
            return Err(PolicyError::Dimension {
                expected: featurizer.dimension(),
                found: weights.len(),
            });
        }
        if mode == PolicyMode::Stochastic && !(temperature > 0.0 && temperature.is_finite()) {
            return Err(PolicyError::Temperature(temperature));
        }
        Ok(Self {
            name: name.into(),
            featurizer,
            weights,
            temperature,
            mode,
        })
    }

    /// Builds a policy from `(index, weight)` pairs; the rest are zero.
    pub fn from_sparse(
        name: impl Into<String>,
        featurizer: Featurizer,
        sparse: &[(u32, f64)],
        temperature: f64,
        mode: PolicyMode,
    ) -> Result<Self, PolicyError> {
        let mut weights = vec![0.0; featurizer.dimension()];
        for &(i, w) in sparse {
            let slot = weights.get_mut(i as usize).ok_or(PolicyError::Dimension {
                expected: featurizer.dimension(),
                found: i as usize + 1,
            })?;
            *slot = w;
        }
        Self::new(name, featurizer, weights, temperature, mode)
    }

    /// Nonzero weights in index order.
    pub fn sparse_weights(&self) -> Vec<(u32, f64)> {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != 0.0)
            .map(|(i, w)| (i as u32, *w))
            .collect()
    }

    /// Raw linear scores `<w, φ(c, p)>` of every candidate.
    pub fn linear_scores(&self, ctx: &dyn Context) -> Vec<f64> {
        let mut buf = SparseVec::new();
        (0..ctx.candidate_count())
            .map(|i| {
                self.featurizer
                    .featurize_into(ctx.display(), ctx.candidate(i), &mut buf);
                dot(&self.weights, &buf)
            })
            .collect()
    }

    /// Positive Plackett-Luce scores `exp(T s - max_j T s_j)`.
    pub fn exp_scores(&self, ctx: &dyn Context) -> Vec<f64> {
        exp_scores(&self.linear_scores(ctx), self.temperature)
    }
}

/// `exp(T s_i - max_j T s_j)`; the shift leaves Plackett-Luce probabilities
/// unchanged and keeps every value in (0, 1].
pub fn exp_scores(linear: &[f64], temperature: f64) -> Vec<f64> {
    let max = linear
        .iter()
        .map(|s| temperature * s)
        .fold(f64::NEG_INFINITY, f64::max);
    linear
        .iter()
        .map(|s| (temperature * s - max).exp().max(f64::MIN_POSITIVE))
        .collect()
}

/// Indices sorted by descending score, ties to the lower index.
pub fn argmax_ranking(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

enum BoundLinear {
    Stochastic { scores: Vec<f64>, k: usize },
    Deterministic { top: Vec<usize> },
}

impl BoundPolicy for BoundLinear {
    fn probability_unchecked(&self, ranking: &[usize]) -> f64 {
        match self {
            BoundLinear::Stochastic { scores, .. } => {
                propensity_of(scores, ranking).expect("ranking validated by caller")
            }
            BoundLinear::Deterministic { top } => {
                if top.as_slice() == ranking {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Vec<usize> {
        match self {
            BoundLinear::Stochastic { scores, k } => {
                crate::simulator::sample_ranking(scores, *k, rng)
                    .expect("positive scores")
                    .0
            }
            BoundLinear::Deterministic { top } => top.clone(),
        }
    }
}

impl Policy for LinearRankingPolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn bind<'a>(&'a self, ctx: &'a dyn Context) -> Box<dyn BoundPolicy + 'a> {
        let linear = self.linear_scores(ctx);
        Box::new(match self.mode {
            PolicyMode::Stochastic => BoundLinear::Stochastic {
                scores: exp_scores(&linear, self.temperature),
                k: ctx.slots(),
            },
            PolicyMode::Deterministic => BoundLinear::Deterministic {
                top: argmax_ranking(&linear, ctx.slots()),
            },
        })
    }

    fn is_deterministic(&self) -> bool {
        self.mode == PolicyMode::Deterministic
    }
}

/// `π_w(y | x)` for a linear policy.
pub fn linear_policy_probability(
    policy: &LinearRankingPolicy,
    ctx: &dyn Context,
    ranking: &[usize],
) -> Result<f64, PolicyError> {
    policy.probability(ctx, ranking)
}
