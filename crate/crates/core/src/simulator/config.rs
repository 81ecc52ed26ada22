use thiserror::Error;

use crate::kv::{KvError, KvMap};
use crate::logformat::{MAX_FEATURE_ID, MAX_SLOTS};

/// Display features occupy ids 1..=5; product categoricals start here.
pub const FIRST_PRODUCT_CATEGORICAL: u8 = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error(transparent)]
    Kv(#[from] KvError),
    #[error("invalid world config: {0}")]
    Invalid(String),
}

/// Parameters of the synthetic banner world.
///
/// Every field except `seed` has a default. Keys in the flat config file are
/// the field names.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    /// Drives context, ranking and click sampling.
    pub seed: u64,
    /// Drives the ground-truth model; defaults to `seed`.
    pub model_seed: u64,
    /// Banner slot counts; each impression draws one uniformly.
    pub nb_slots: Vec<usize>,
    pub pool_size_min: usize,
    pub pool_size_max: usize,
    pub categorical_feature_count: usize,
    pub vocabulary_size: u64,
    /// How many of the product categoricals (the last ones) are multi-valued.
    pub multi_valued_features: usize,
    pub logging_temperature: f64,
    /// Correlation between logging and true click weights.
    pub logging_correlation: f64,
    /// Standard deviation of a candidate's click logit across candidates.
    pub click_weight_scale: f64,
    pub base_click_rate: f64,
    /// Slot `s` (0-based) has position bias `(s + 1)^-position_decay`.
    pub position_decay: f64,
    /// Probability of keeping an unclicked impression.
    pub subsample_keep_prob: f64,
    pub impression_count: u64,
    /// The world featurizer hashes into `2^feature_bits` dimensions.
    pub feature_bits: u32,
    /// Emit the product of the two numeric product features.
    pub interactions: bool,
}

impl WorldConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            model_seed: seed,
            nb_slots: vec![1],
            pool_size_min: 8,
            pool_size_max: 12,
            categorical_feature_count: 8,
            vocabulary_size: 20,
            multi_valued_features: 2,
            logging_temperature: 1.0,
            logging_correlation: 0.5,
            click_weight_scale: 1.0,
            base_click_rate: 0.03,
            position_decay: 0.5,
            subsample_keep_prob: 0.1,
            impression_count: 10_000,
            feature_bits: 12,
            interactions: false,
        }
    }

    pub fn max_slots(&self) -> usize {
        self.nb_slots.iter().copied().max().unwrap_or(1)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.nb_slots.is_empty() {
            return bad("nb_slots is empty".into());
        }
        if let Some(k) = self.nb_slots.iter().find(|&&k| k == 0 || k > MAX_SLOTS) {
            return bad(format!("nb_slots entry {k} outside 1..={MAX_SLOTS}"));
        }
        if self.pool_size_min < self.max_slots() {
            return bad(format!(
                "pool_size_min {} is smaller than the largest slot count {}",
                self.pool_size_min,
                self.max_slots()
            ));
        }
        if self.pool_size_max < self.pool_size_min {
            return bad("pool_size_max < pool_size_min".into());
        }
        let max_cat = usize::from(MAX_FEATURE_ID - FIRST_PRODUCT_CATEGORICAL + 1);
        if self.categorical_feature_count > max_cat {
            return bad(format!("categorical_feature_count exceeds {max_cat}"));
        }
        if self.multi_valued_features > self.categorical_feature_count {
            return bad("multi_valued_features exceeds categorical_feature_count".into());
        }
        if self.vocabulary_size < 3 {
            return bad("vocabulary_size must be at least 3".into());
        }
        if !(self.logging_temperature >= 0.0 && self.logging_temperature.is_finite()) {
            return bad("logging_temperature must be finite and non-negative".into());
        }
        if !(-1.0..=1.0).contains(&self.logging_correlation) {
            return bad("logging_correlation outside [-1, 1]".into());
        }
        if !(self.click_weight_scale >= 0.0 && self.click_weight_scale.is_finite()) {
            return bad("click_weight_scale must be finite and non-negative".into());
        }
        if !(self.base_click_rate > 0.0 && self.base_click_rate < 1.0) {
            return bad("base_click_rate outside (0, 1)".into());
        }
        if !(self.position_decay >= 0.0 && self.position_decay.is_finite()) {
            return bad("position_decay must be non-negative".into());
        }
        if !(self.subsample_keep_prob > 0.0 && self.subsample_keep_prob <= 1.0) {
            return bad("subsample_keep_prob outside (0, 1]".into());
        }
        if !(1..=24).contains(&self.feature_bits) {
            return bad("feature_bits outside 1..=24".into());
        }
        Ok(())
    }

    /// Reads a world config; `seed` is mandatory, unknown keys are ignored so
    /// that world and command settings can share one file.
    pub fn from_kv(kv: &KvMap) -> Result<Self, ConfigError> {
        let seed: u64 = kv.require("seed")?;
        let d = Self::new(seed);
        let cfg = Self {
            seed,
            model_seed: kv.get_or("model_seed", seed)?,
            nb_slots: kv.get_list("nb_slots")?.unwrap_or(d.nb_slots),
            pool_size_min: kv.get_or("pool_size_min", d.pool_size_min)?,
            pool_size_max: kv.get_or("pool_size_max", d.pool_size_max)?,
            categorical_feature_count: kv
                .get_or("categorical_feature_count", d.categorical_feature_count)?,
            vocabulary_size: kv.get_or("vocabulary_size", d.vocabulary_size)?,
            multi_valued_features: kv.get_or("multi_valued_features", d.multi_valued_features)?,
            logging_temperature: kv.get_or("logging_temperature", d.logging_temperature)?,
            logging_correlation: kv.get_or("logging_correlation", d.logging_correlation)?,
            click_weight_scale: kv.get_or("click_weight_scale", d.click_weight_scale)?,
            base_click_rate: kv.get_or("base_click_rate", d.base_click_rate)?,
            position_decay: kv.get_or("position_decay", d.position_decay)?,
            subsample_keep_prob: kv.get_or("subsample_keep_prob", d.subsample_keep_prob)?,
            impression_count: kv.get_or("impression_count", d.impression_count)?,
            feature_bits: kv.get_or("feature_bits", d.feature_bits)?,
            interactions: kv.get_or("interactions", d.interactions)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::default();
        kv.set("seed", self.seed);
        kv.set("model_seed", self.model_seed);
        kv.set(
            "nb_slots",
            self.nb_slots
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(","),
        );
        kv.set("pool_size_min", self.pool_size_min);
        kv.set("pool_size_max", self.pool_size_max);
        kv.set("categorical_feature_count", self.categorical_feature_count);
        kv.set("vocabulary_size", self.vocabulary_size);
        kv.set("multi_valued_features", self.multi_valued_features);
        kv.set("logging_temperature", self.logging_temperature);
        kv.set("logging_correlation", self.logging_correlation);
        kv.set("click_weight_scale", self.click_weight_scale);
        kv.set("base_click_rate", self.base_click_rate);
        kv.set("position_decay", self.position_decay);
        kv.set("subsample_keep_prob", self.subsample_keep_prob);
        kv.set("impression_count", self.impression_count);
        kv.set("feature_bits", self.feature_bits);
        kv.set("interactions", self.interactions);
        kv
    }
}
