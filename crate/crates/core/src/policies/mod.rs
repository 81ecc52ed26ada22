//! Ranking policies `π(y | x)`.
//!
//! A context is a display feature vector, a candidate pool and the number of
//! slots to fill; an action is an ordered selection of `k` distinct
//! candidate indices.

mod featurizer;
mod file;
mod linear;

use std::sync::Arc;

use rand::{Rng, RngCore};
use thiserror::Error;

use crate::logformat::{FeatureVector, ImpressionRecord};
use crate::numeric::falling_factorial;
use crate::simulator::{check_ranking, RankingError};

pub use featurizer::{dot, Featurizer, SparseVec};
pub use file::{load_policy, parse_policy, render_policy, save_policy, PolicySpec};
pub use linear::{
    argmax_ranking, exp_scores, linear_policy_probability, LinearRankingPolicy, PolicyMode,
};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("invalid ranking: {0}")]
    Ranking(#[from] RankingError),
    #[error("epsilon {0} outside [0, 1]")]
    Epsilon(f64),
    #[error("propensity {0} is not positive")]
    Propensity(f64),
    #[error("temperature {0} must be positive and finite")]
    Temperature(f64),
    #[error("weight vector has {found} entries, featurizer expects {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("policy file line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// What a policy gets to look at.
pub trait Context {
    fn display(&self) -> &FeatureVector;
    fn candidate_count(&self) -> usize;
    fn candidate(&self, i: usize) -> &FeatureVector;
    /// Ranking length `k`.
    fn slots(&self) -> usize;
}

impl Context for ImpressionRecord {
    fn display(&self) -> &FeatureVector {
        &self.display_features
    }
    fn candidate_count(&self) -> usize {
        self.candidates.len()
    }
    fn candidate(&self, i: usize) -> &FeatureVector {
        &self.candidates[i].features
    }
    fn slots(&self) -> usize {
        self.nb_slots
    }
}

/// `|Y| = M (M-1) ... (M-k+1)`.
pub fn support_size(ctx: &dyn Context) -> f64 {
    falling_factorial(ctx.candidate_count(), ctx.slots())
}

fn check(ctx: &dyn Context, ranking: &[usize]) -> Result<(), PolicyError> {
    if ranking.len() != ctx.slots() {
        return Err(RankingError::WrongLength {
            expected: ctx.slots(),
            found: ranking.len(),
        }
        .into());
    }
    check_ranking(ranking, ctx.candidate_count())?;
    Ok(())
}

/// A policy evaluated against one fixed context, so per-context work such as
/// scoring candidates happens once.
pub trait BoundPolicy {
    /// Probability of a ranking already known to be valid for the context.
    fn probability_unchecked(&self, ranking: &[usize]) -> f64;
    fn sample(&self, rng: &mut dyn RngCore) -> Vec<usize>;
}

pub trait Policy: Send + Sync {
    fn name(&self) -> &str;

    fn bind<'a>(&'a self, ctx: &'a dyn Context) -> Box<dyn BoundPolicy + 'a>;

    fn probability(&self, ctx: &dyn Context, ranking: &[usize]) -> Result<f64, PolicyError> {
        check(ctx, ranking)?;
        Ok(self.bind(ctx).probability_unchecked(ranking))
    }

    fn sample(&self, ctx: &dyn Context, rng: &mut dyn RngCore) -> Vec<usize> {
        self.bind(ctx).sample(rng)
    }

    /// Whether the policy puts all mass on a single ranking per context.
    fn is_deterministic(&self) -> bool {
        false
    }
}

/// `π(y_i | x_i) / q_i` for the logged ranking of an impression.
pub fn importance_weight(policy: &dyn Policy, impression: &ImpressionRecord) -> Result<f64, PolicyError> {
    let q = impression.propensity;
    if !(q > 0.0 && q.is_finite()) {
        return Err(PolicyError::Propensity(q));
    }
    let ranking = impression.logged_ranking();
    Ok(policy.probability(impression, &ranking)? / q)
}

/// Picks every ranking of the context with equal probability.
#[derive(Debug, Clone, Default)]
pub struct UniformPolicy;

/// `1 / |Y|` for a valid ranking.
pub fn uniform_probability(ctx: &dyn Context, ranking: &[usize]) -> Result<f64, PolicyError> {
    UniformPolicy.probability(ctx, ranking)
}

struct BoundUniform {
    m: usize,
    k: usize,
}

impl BoundPolicy for BoundUniform {
    fn probability_unchecked(&self, _ranking: &[usize]) -> f64 {
        1.0 / falling_factorial(self.m, self.k)
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Vec<usize> {
        let mut pool: Vec<usize> = (0..self.m).collect();
        for slot in 0..self.k {
            let j = rng.random_range(slot..self.m);
            pool.swap(slot, j);
        }
        pool.truncate(self.k);
        pool
    }
}

impl Policy for UniformPolicy {
    fn name(&self) -> &str {
        "uniform"
    }

    fn bind<'a>(&'a self, ctx: &'a dyn Context) -> Box<dyn BoundPolicy + 'a> {
        Box::new(BoundUniform {
            m: ctx.candidate_count(),
            k: ctx.slots(),
        })
    }
}

/// Behaves uniformly at random with probability `ε`, like `base` otherwise:
/// `π_ε(y|x) = ε / |Y| + (1 - ε) π_base(y|x)`.
#[derive(Clone)]
pub struct EpsilonMixturePolicy {
    epsilon: f64,
    base: Arc<dyn Policy>,
    name: String,
}

impl EpsilonMixturePolicy {
    pub fn new(epsilon: f64, base: Arc<dyn Policy>) -> Result<Self, PolicyError> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(PolicyError::Epsilon(epsilon));
        }
        let name = format!("{}+eps{}", base.name(), epsilon);
        Ok(Self {
            epsilon,
            base,
            name,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn base(&self) -> &Arc<dyn Policy> {
        &self.base
    }
}

struct BoundMixture<'a> {
    epsilon: f64,
    uniform: f64,
    base: Box<dyn BoundPolicy + 'a>,
    fallback: BoundUniform,
}

/// `ε u + (1 - ε) p`, the one place the mixture arithmetic lives so that
/// every evaluation path produces the same bits.
pub fn mixture_probability(epsilon: f64, uniform: f64, base: f64) -> f64 {
    epsilon * uniform + (1.0 - epsilon) * base
}

impl BoundPolicy for BoundMixture<'_> {
    fn probability_unchecked(&self, ranking: &[usize]) -> f64 {
        mixture_probability(self.epsilon, self.uniform, self.base.probability_unchecked(ranking))
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Vec<usize> {
        if rng.random::<f64>() < self.epsilon {
            self.fallback.sample(rng)
        } else {
            self.base.sample(rng)
        }
    }
}

impl Policy for EpsilonMixturePolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn bind<'a>(&'a self, ctx: &'a dyn Context) -> Box<dyn BoundPolicy + 'a> {
        Box::new(BoundMixture {
            epsilon: self.epsilon,
            uniform: 1.0 / support_size(ctx),
            base: self.base.bind(ctx),
            fallback: BoundUniform {
                m: ctx.candidate_count(),
                k: ctx.slots(),
            },
        })
    }

    fn is_deterministic(&self) -> bool {
        self.epsilon == 0.0 && self.base.is_deterministic()
    }
}

/// `π_ε(y|x)` for one ranking.
pub fn epsilon_mixture_probability(
    policy: &EpsilonMixturePolicy,
    ctx: &dyn Context,
    ranking: &[usize],
) -> Result<f64, PolicyError> {
    policy.probability(ctx, ranking)
}
