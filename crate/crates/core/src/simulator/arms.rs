use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::ConfigError;
use super::generate::{simulate_impression, subsample, GenerationSummary, ImpressionSink, KEEP_STREAM};
use super::model::{ClickModel, ContextSample};
use super::SimError;
use crate::logformat::{FeatureValue, FeatureVector};
use crate::policies::{Context, Featurizer, LinearRankingPolicy, PolicyMode};

/// Categorical feature carrying the arm identity.
pub const ARM_FEATURE: u8 = 6;

/// A context-free 1-slot world: every impression offers the same arms, whose
/// click rates are fixed. Candidates also carry two numeric noise features
/// unrelated to clicks.
#[derive(Debug, Clone)]
pub struct FixedArmWorld {
    pub arm_ctrs: Vec<f64>,
    /// Probability that the logging policy shows each arm.
    pub logging_probs: Vec<f64>,
    pub featurizer: Featurizer,
    position_bias: Vec<f64>,
}

impl FixedArmWorld {
    pub fn new(arm_ctrs: Vec<f64>, logging_probs: Vec<f64>) -> Result<Self, ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if arm_ctrs.len() < 2 || arm_ctrs.len() != logging_probs.len() {
            return bad("need at least two arms and one logging probability per arm");
        }
        if arm_ctrs.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return bad("arm click rates must lie in [0, 1]");
        }
        if logging_probs.iter().any(|p| p.is_nan() || *p <= 0.0) {
            return bad("logging probabilities must be positive");
        }
        if (logging_probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("logging probabilities must sum to 1");
        }
        let world = Self {
            arm_ctrs,
            logging_probs,
            featurizer: Featurizer::with_bits(12),
            position_bias: vec![1.0],
        };
        let mut seen = vec![world.featurizer.bias_index()];
        for a in 0..world.arms() {
            let idx = world.arm_index(a);
            if seen.contains(&idx) {
                return bad("arm features collide in the hashed space");
            }
            seen.push(idx);
        }
        Ok(world)
    }

    pub fn arms(&self) -> usize {
        self.arm_ctrs.len()
    }

    /// Arm with the highest click rate, ties to the lower index.
    pub fn best_arm(&self) -> usize {
        (0..self.arms())
            .fold(0, |best, a| if self.arm_ctrs[a] > self.arm_ctrs[best] { a } else { best })
    }

    pub fn arm_of(features: &FeatureVector) -> Option<usize> {
        match features.get(ARM_FEATURE)? {
            FeatureValue::Categorical(codes) => codes.first().map(|&c| c as usize),
            FeatureValue::Numeric(_) => None,
        }
    }

    fn arm_index(&self, arm: usize) -> u32 {
        let mut f = FeatureVector::new();
        f.set_categorical(ARM_FEATURE, &[arm as u64]).expect("valid code");
        let x = Featurizer {
            display: false,
            numeric: false,
            ..self.featurizer.clone()
        }
        .featurize(&FeatureVector::new(), &f);
        x[1].0
    }

    /// Softmax over `ln p_a` on the arm indicator, which reproduces
    /// `logging_probs`.
    pub fn logging_policy(&self) -> LinearRankingPolicy {
        let sparse: Vec<(u32, f64)> = (0..self.arms())
            .map(|a| (self.arm_index(a), self.logging_probs[a].ln()))
            .collect();
        LinearRankingPolicy::from_sparse(
            "logging",
            self.featurizer.clone(),
            &sparse,
            1.0,
            PolicyMode::Stochastic,
        )
        .expect("indices within the featurizer dimension")
    }

    pub fn sample_context<R: Rng + ?Sized>(&self, rng: &mut R) -> ContextSample {
        let mut display = FeatureVector::new();
        display.set_numeric(1, rng.sample(StandardNormal)).expect("finite");
        display.set_numeric(2, rng.sample(StandardNormal)).expect("finite");
        display.set_categorical(3, &[1]).expect("valid code");
        let candidates = (0..self.arms())
            .map(|a| {
                let mut f = FeatureVector::new();
                f.set_numeric(1, rng.sample(StandardNormal)).expect("finite");
                f.set_numeric(2, rng.sample(StandardNormal)).expect("finite");
                f.set_categorical(ARM_FEATURE, &[a as u64]).expect("valid code");
                f
            })
            .collect();
        ContextSample {
            display,
            candidates,
            slots: 1,
        }
    }

    /// Generates and sub-samples `impressions` impressions, like
    /// [`generate_log`](super::generate_log) does for the feature-rich world.
    pub fn generate(
        &self,
        impressions: u64,
        keep_prob: f64,
        seed: u64,
        sink: &mut dyn ImpressionSink,
    ) -> Result<GenerationSummary, SimError> {
        if !(keep_prob > 0.0 && keep_prob <= 1.0) {
            return Err(ConfigError::Invalid("keep probability outside (0, 1]".into()).into());
        }
        let logging = self.logging_policy();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut keep_rng = ChaCha8Rng::seed_from_u64(seed);
        keep_rng.set_stream(KEEP_STREAM);
        let mut summary = GenerationSummary {
            seed,
            model_seed: seed,
            keep_prob,
            ..GenerationSummary::default()
        };
        for ex_id in 0..impressions {
            let ctx = self.sample_context(&mut rng);
            let linear = logging.linear_scores(&ctx);
            let attractiveness = self.attractiveness(&ctx);
            let record = simulate_impression(
                ex_id,
                ctx,
                &linear,
                &attractiveness,
                &self.position_bias,
                1.0,
                &mut rng,
            )?;
            summary.impressions += 1;
            *summary.per_slot.entry(1).or_default() += 1;
            if record.was_ad_clicked {
                summary.clicked += 1;
            }
            if let Some(kept) = subsample(record, keep_prob, &mut keep_rng) {
                summary.kept += 1;
                *summary.kept_per_slot.entry(1).or_default() += 1;
                sink.accept(kept)?;
            }
        }
        Ok(summary)
    }

    pub fn oracle_contexts(&self, count: usize, seed: u64) -> Vec<ContextSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(super::generate::ORACLE_STREAM);
        (0..count).map(|_| self.sample_context(&mut rng)).collect()
    }
}

impl ClickModel for FixedArmWorld {
    fn attractiveness(&self, ctx: &dyn Context) -> Vec<f64> {
        (0..ctx.candidate_count())
            .map(|i| {
                Self::arm_of(ctx.candidate(i))
                    .and_then(|a| self.arm_ctrs.get(a).copied())
                    .unwrap_or(0.0)
            })
            .collect()
    }

    fn position_bias(&self) -> &[f64] {
        &self.position_bias
    }
}
