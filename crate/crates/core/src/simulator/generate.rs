use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::WorldConfig;
use super::model::{draw_clicks, sample_context, ContextSample, GroundTruthModel};
use super::plackett_luce::{propensity_of, sample_ranking};
use super::SimError;
use crate::kv::{KvError, KvMap};
use crate::logformat::{CandidateRecord, ImpressionRecord, LogError, LogWriter};
use crate::policies::exp_scores;

/// ChaCha stream reserved for the keep/drop coin, so a log's impressions do
/// not depend on the sub-sampling rate.
pub(crate) const KEEP_STREAM: u64 = 1;
/// ChaCha stream for oracle contexts drawn apart from any log.
pub(crate) const ORACLE_STREAM: u64 = 2;

/// Where generated impressions go.
pub trait ImpressionSink {
    fn accept(&mut self, record: ImpressionRecord) -> Result<(), LogError>;
}

impl ImpressionSink for Vec<ImpressionRecord> {
    fn accept(&mut self, record: ImpressionRecord) -> Result<(), LogError> {
        self.push(record);
        Ok(())
    }
}

impl<W: Write> ImpressionSink for LogWriter<W> {
    fn accept(&mut self, record: ImpressionRecord) -> Result<(), LogError> {
        self.write(&record)
    }
}

/// Adapts a closure into a sink.
pub struct FnSink<F>(pub F);

impl<F: FnMut(ImpressionRecord) -> Result<(), LogError>> ImpressionSink for FnSink<F> {
    fn accept(&mut self, record: ImpressionRecord) -> Result<(), LogError> {
        (self.0)(record)
    }
}

/// Counts describing a generated log, written next to it as a sidecar.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GenerationSummary {
    /// Impressions before sub-sampling, the true `N`.
    pub impressions: u64,
    pub kept: u64,
    pub clicked: u64,
    /// Pre-sub-sampling impressions per banner slot count.
    pub per_slot: BTreeMap<usize, u64>,
    pub kept_per_slot: BTreeMap<usize, u64>,
    pub seed: u64,
    pub model_seed: u64,
    pub keep_prob: f64,
}

impl GenerationSummary {
    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::default();
        kv.set("impressions", self.impressions);
        kv.set("kept", self.kept);
        kv.set("clicked", self.clicked);
        kv.set("seed", self.seed);
        kv.set("model_seed", self.model_seed);
        kv.set("keep_prob", self.keep_prob);
        for (k, n) in &self.per_slot {
            kv.set(&format!("slots_{k}"), n);
        }
        for (k, n) in &self.kept_per_slot {
            kv.set(&format!("kept_slots_{k}"), n);
        }
        kv
    }

    pub fn from_kv(kv: &KvMap) -> Result<Self, KvError> {
        let mut s = Self {
            impressions: kv.require("impressions")?,
            kept: kv.require("kept")?,
            clicked: kv.require("clicked")?,
            seed: kv.require("seed")?,
            model_seed: kv.require("model_seed")?,
            keep_prob: kv.require("keep_prob")?,
            ..Self::default()
        };
        for key in kv.keys() {
            let (map, rest) = if let Some(rest) = key.strip_prefix("kept_slots_") {
                (&mut s.kept_per_slot, rest)
            } else if let Some(rest) = key.strip_prefix("slots_") {
                (&mut s.per_slot, rest)
            } else {
                continue;
            };
            let k = rest.parse().map_err(|_| KvError::Unknown(key.to_string()))?;
            map.insert(k, kv.require(key)?);
        }
        Ok(s)
    }
}

/// Keeps clicked impressions always and unclicked ones with probability
/// `keep_prob`. One uniform is drawn per call whatever the outcome.
pub fn subsample<R: Rng + ?Sized>(
    impression: ImpressionRecord,
    keep_prob: f64,
    rng: &mut R,
) -> Option<ImpressionRecord> {
    let u: f64 = rng.random();
    (impression.was_ad_clicked || u < keep_prob).then_some(impression)
}

/// Samples a ranking from `linear` scores, draws clicks and lays the result
/// out as a record with the displayed candidates first.
pub(crate) fn simulate_impression<R: Rng + ?Sized>(
    ex_id: u64,
    ctx: ContextSample,
    linear: &[f64],
    attractiveness: &[f64],
    position_bias: &[f64],
    temperature: f64,
    rng: &mut R,
) -> Result<ImpressionRecord, SimError> {
    let scores = exp_scores(linear, temperature);
    let (ranking, _) = sample_ranking(&scores, ctx.slots, rng)?;
    let clicks = draw_clicks(attractiveness, position_bias, &ranking, rng);
    let hash_id = rng.random::<u64>().to_string();

    let mut order = ranking.clone();
    order.extend((0..scores.len()).filter(|i| !ranking.contains(i)));
    let reordered: Vec<f64> = order.iter().map(|&i| scores[i]).collect();
    let displayed: Vec<usize> = (0..ctx.slots).collect();
    let propensity = propensity_of(&reordered, &displayed)?;

    let mut features: Vec<Option<_>> = ctx.candidates.into_iter().map(Some).collect();
    let candidates = order
        .iter()
        .enumerate()
        .map(|(pos, &i)| CandidateRecord {
            clicked: pos < clicks.len() && clicks[pos],
            features: features[i].take().expect("each index once"),
        })
        .collect();
    Ok(ImpressionRecord {
        ex_id,
        hash_id,
        was_ad_clicked: clicks.iter().any(|&c| c),
        propensity,
        nb_slots: ctx.slots,
        display_features: ctx.display,
        candidates,
    })
}

/// Generates `config.impression_count` impressions, sub-samples them and
/// hands the kept ones to `sink` in exID order. The exID is the index before
/// sub-sampling.
pub fn generate_log(
    config: &WorldConfig,
    model: &GroundTruthModel,
    sink: &mut dyn ImpressionSink,
) -> Result<GenerationSummary, SimError> {
    config.validate()?;
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut keep_rng = ChaCha8Rng::seed_from_u64(config.seed);
    keep_rng.set_stream(KEEP_STREAM);

    let mut summary = GenerationSummary {
        seed: config.seed,
        model_seed: config.model_seed,
        keep_prob: config.subsample_keep_prob,
        ..GenerationSummary::default()
    };
    for ex_id in 0..config.impression_count {
        let ctx = sample_context(&mut rng, config);
        let (linear, attractiveness) = model.score_candidates(&ctx);
        let record = simulate_impression(
            ex_id,
            ctx,
            &linear,
            &attractiveness,
            &model.position_bias,
            model.logging_temperature,
            &mut rng,
        )?;
        summary.impressions += 1;
        *summary.per_slot.entry(record.nb_slots).or_default() += 1;
        if record.was_ad_clicked {
            summary.clicked += 1;
        }
        if let Some(kept) = subsample(record, config.subsample_keep_prob, &mut keep_rng) {
            summary.kept += 1;
            *summary.kept_per_slot.entry(kept.nb_slots).or_default() += 1;
            sink.accept(kept)?;
        }
    }
    Ok(summary)
}

/// A world configuration together with the model it induces.
#[derive(Debug, Clone)]
pub struct World {
    pub config: WorldConfig,
    pub model: GroundTruthModel,
}

impl World {
    pub fn new(config: WorldConfig) -> Result<Self, SimError> {
        let model = GroundTruthModel::from_config(&config)?;
        Ok(Self { config, model })
    }

    pub fn generate(&self, sink: &mut dyn ImpressionSink) -> Result<GenerationSummary, SimError> {
        generate_log(&self.config, &self.model, sink)
    }

    /// Generates the log into memory.
    pub fn generate_vec(&self) -> Result<(Vec<ImpressionRecord>, GenerationSummary), SimError> {
        let mut log = Vec::new();
        let summary = self.generate(&mut log)?;
        Ok((log, summary))
    }

    /// Fresh contexts from the world's distribution, independent of the log.
    pub fn oracle_contexts(&self, count: usize) -> Vec<ContextSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(ORACLE_STREAM);
        (0..count)
            .map(|_| sample_context(&mut rng, &self.config))
            .collect()
    }
}
