use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::{ConfigError, WorldConfig, FIRST_PRODUCT_CATEGORICAL};
use crate::logformat::FeatureVector;
use crate::numeric::{logit, sigmoid};
use crate::policies::{
    dot, exp_scores, Context, Featurizer, LinearRankingPolicy, PolicyError, PolicyMode, SparseVec,
};

/// One draw of `x`: the display context and the candidate pool.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextSample {
    pub display: FeatureVector,
    pub candidates: Vec<FeatureVector>,
    pub slots: usize,
}

impl Context for ContextSample {
    fn display(&self) -> &FeatureVector {
        &self.display
    }
    fn candidate_count(&self) -> usize {
        self.candidates.len()
    }
    fn candidate(&self, i: usize) -> &FeatureVector {
        &self.candidates[i]
    }
    fn slots(&self) -> usize {
        self.slots
    }
}

/// Draws a context. Display features: numeric 1 and 2, banner type (3), user
/// segment (4) and layout (5). Every candidate carries numeric 1 and 2 plus
/// `categorical_feature_count` categoricals starting at id 6, the last
/// `multi_valued_features` of which hold one to three codes.
pub fn sample_context<R: Rng + ?Sized>(rng: &mut R, config: &WorldConfig) -> ContextSample {
    let slots = config.nb_slots[rng.random_range(0..config.nb_slots.len())];
    let pool = rng.random_range(config.pool_size_min..=config.pool_size_max);
    let vocab = config.vocabulary_size;

    let mut display = FeatureVector::new();
    display.set_numeric(1, normal(rng)).expect("finite");
    display.set_numeric(2, normal(rng)).expect("finite");
    display.set_categorical(3, &[slots as u64]).expect("valid code");
    display
        .set_categorical(4, &[rng.random_range(0..vocab)])
        .expect("valid code");
    display.set_categorical(5, &[0]).expect("valid code");

    let multi_from = config.categorical_feature_count - config.multi_valued_features;
    let candidates = (0..pool)
        .map(|_| {
            let mut f = FeatureVector::new();
            f.set_numeric(1, normal(rng)).expect("finite");
            f.set_numeric(2, normal(rng)).expect("finite");
            for j in 0..config.categorical_feature_count {
                let id = FIRST_PRODUCT_CATEGORICAL + j as u8;
                let count = if j >= multi_from {
                    rng.random_range(1..=3)
                } else {
                    1
                };
                let mut codes: Vec<u64> = Vec::with_capacity(count);
                while codes.len() < count {
                    let c = rng.random_range(0..vocab);
                    if !codes.contains(&c) {
                        codes.push(c);
                    }
                }
                f.set_categorical(id, &codes).expect("distinct codes");
            }
            f
        })
        .collect();
    ContextSample {
        display,
        candidates,
        slots,
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Source of click probabilities: slot `s` showing candidate `c` is clicked
/// with probability `position_bias[s] * attractiveness[c]`.
pub trait ClickModel: Sync {
    fn attractiveness(&self, ctx: &dyn Context) -> Vec<f64>;
    fn position_bias(&self) -> &[f64];
}

/// `E[δ | x, y] = 1 - Π_s (1 - bias[s] * attractiveness[y_s])`.
pub fn expected_reward(attractiveness: &[f64], position_bias: &[f64], ranking: &[usize]) -> f64 {
    let miss: f64 = ranking
        .iter()
        .enumerate()
        .map(|(s, &c)| 1.0 - position_bias[s] * attractiveness[c])
        .product();
    1.0 - miss
}

pub(crate) fn draw_clicks<R: Rng + ?Sized>(
    attractiveness: &[f64],
    position_bias: &[f64],
    ranking: &[usize],
    rng: &mut R,
) -> Vec<bool> {
    ranking
        .iter()
        .enumerate()
        .map(|(s, &c)| rng.random::<f64>() < position_bias[s] * attractiveness[c])
        .collect()
}

/// Per-slot clicks for a displayed ranking; the banner is clicked when any
/// slot is.
pub fn sample_clicks<R: Rng + ?Sized>(
    ctx: &dyn Context,
    ranking: &[usize],
    model: &dyn ClickModel,
    rng: &mut R,
) -> Vec<bool> {
    draw_clicks(&model.attractiveness(ctx), model.position_bias(), ranking, rng)
}

/// The hidden parameters of the synthetic world.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthModel {
    pub featurizer: Featurizer,
    /// Scorer of the logging policy.
    pub logging_weights: Vec<f64>,
    pub true_click_weights: Vec<f64>,
    /// Non-increasing, one entry per slot up to the largest banner.
    pub position_bias: Vec<f64>,
    pub base_click_rate: f64,
    pub logging_temperature: f64,
}

impl GroundTruthModel {
    /// Draws the click and logging weights from `config.model_seed`.
    ///
    /// Each weight is normal with standard deviation `1/sqrt(F)`, `F` being
    /// the number of active product features, so candidate scores have about
    /// unit spread. Logging weights correlate with the click weights at
    /// `logging_correlation`.
    pub fn from_config(config: &WorldConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let featurizer = Featurizer {
            bits: config.feature_bits,
            numeric: true,
            categorical: true,
            display: true,
            interactions: config.interactions,
        };
        let dim = featurizer.dimension();
        let active = 2 + config.categorical_feature_count + config.multi_valued_features;
        let sd = 1.0 / (active as f64).sqrt();
        let rho = config.logging_correlation;
        let rest = (1.0 - rho * rho).sqrt();

        let mut rng = ChaCha8Rng::seed_from_u64(config.model_seed);
        let mut true_click_weights = Vec::with_capacity(dim);
        let mut logging_weights = Vec::with_capacity(dim);
        for _ in 0..dim {
            let shared = normal(&mut rng);
            let own = normal(&mut rng);
            true_click_weights.push(config.click_weight_scale * sd * shared);
            logging_weights.push(sd * (rho * shared + rest * own));
        }
        true_click_weights[featurizer.bias_index() as usize] = 0.0;

        let position_bias = (0..config.max_slots())
            .map(|s| ((s + 1) as f64).powf(-config.position_decay))
            .collect();
        Ok(Self {
            featurizer,
            logging_weights,
            true_click_weights,
            position_bias,
            base_click_rate: config.base_click_rate,
            logging_temperature: config.logging_temperature,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        let dim = self.featurizer.dimension();
        if self.logging_weights.len() != dim || self.true_click_weights.len() != dim {
            return bad("weight vectors do not match the featurizer dimension");
        }
        if self.position_bias.iter().any(|b| !(0.0..=1.0).contains(b))
            || self.position_bias.windows(2).any(|w| w[1] > w[0])
        {
            return bad("position bias must be non-increasing within [0, 1]");
        }
        if !(self.base_click_rate > 0.0 && self.base_click_rate < 1.0) {
            return bad("base click rate outside (0, 1)");
        }
        Ok(())
    }

    /// The logging policy as a ranking policy, for recomputing `π₀(y|x)`.
    pub fn logging_policy(&self) -> Result<LinearRankingPolicy, PolicyError> {
        LinearRankingPolicy::new(
            "logging",
            self.featurizer.clone(),
            self.logging_weights.clone(),
            self.logging_temperature,
            PolicyMode::Stochastic,
        )
    }

    /// Logging linear scores and attractiveness of every candidate, sharing
    /// one featurization per candidate.
    pub(crate) fn score_candidates(&self, ctx: &dyn Context) -> (Vec<f64>, Vec<f64>) {
        let offset = logit(self.base_click_rate);
        let mut buf = SparseVec::new();
        (0..ctx.candidate_count())
            .map(|i| {
                self.featurizer
                    .featurize_into(ctx.display(), ctx.candidate(i), &mut buf);
                (
                    dot(&self.logging_weights, &buf),
                    sigmoid(dot(&self.true_click_weights, &buf) + offset),
                )
            })
            .unzip()
    }
}

impl ClickModel for GroundTruthModel {
    fn attractiveness(&self, ctx: &dyn Context) -> Vec<f64> {
        self.score_candidates(ctx).1
    }

    fn position_bias(&self) -> &[f64] {
        &self.position_bias
    }
}

/// `f_p = exp(T <θ_log, φ(c, p)> - max)` for every candidate; the shift keeps
/// the scores finite and leaves rankings' probabilities unchanged.
pub fn logging_scores(ctx: &dyn Context, model: &GroundTruthModel, temperature: f64) -> Vec<f64> {
    exp_scores(&model.score_candidates(ctx).0, temperature)
}
