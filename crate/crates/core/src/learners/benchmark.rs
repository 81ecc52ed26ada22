use serde::Serialize;

use super::data::PreparedLog;
use super::grid::HyperGrid;
use super::select::{candidate_policy, reference_row, select_candidate, test_row, BenchmarkRow};
use super::split::{split_log, EVEN_SPLIT};
use super::train::{reward_predictions, train_dro, train_ips, train_poem, train_regression, Candidate};
use super::LearnerError;
use crate::estimators::{report_cells, tsv_number, REPORT_COLUMNS, Z_99};
use crate::kv::KvMap;
use crate::logformat::ImpressionRecord;
use crate::policies::{Featurizer, LinearRankingPolicy, Policy, PolicyMode, UniformPolicy};

/// Everything the learner comparison needs besides the log.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub grid: HyperGrid,
    /// Features for IPS, DRO and POEM.
    pub featurizer: Featurizer,
    /// Features for Regression and the DRO reward model. Drops categorical
    /// features by default, so the reward model is mis-specified.
    pub regression_featurizer: Featurizer,
    pub split: [f64; 3],
    pub seed: u64,
    pub z: f64,
}

impl BenchmarkConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            grid: HyperGrid::default(),
            featurizer: Featurizer::default(),
            regression_featurizer: Featurizer {
                categorical: false,
                ..Featurizer::default()
            },
            split: EVEN_SPLIT,
            seed,
            z: Z_99,
        }
    }

    /// Reads `seed` (required), the grid keys, `split`, `learner_bits`,
    /// `learner_interactions`, `regression_bits`, `regression_categorical`
    /// and `regression_numeric`.
    pub fn from_kv(kv: &KvMap) -> Result<Self, LearnerError> {
        let mut cfg = Self::new(kv.require("seed")?);
        cfg.grid = HyperGrid::from_kv(kv)?;
        if let Some(split) = kv.get_list::<f64>("split")? {
            cfg.split = split
                .try_into()
                .map_err(|v: Vec<f64>| LearnerError::Grid(format!("split needs 3 ratios, got {}", v.len())))?;
        }
        cfg.featurizer.bits = kv.get_or("learner_bits", cfg.featurizer.bits)?;
        cfg.featurizer.interactions = kv.get_or("learner_interactions", false)?;
        let reg = &mut cfg.regression_featurizer;
        reg.bits = kv.get_or("regression_bits", reg.bits)?;
        reg.categorical = kv.get_or("regression_categorical", reg.categorical)?;
        reg.numeric = kv.get_or("regression_numeric", reg.numeric)?;
        for bits in [cfg.featurizer.bits, cfg.regression_featurizer.bits] {
            if !(1..=26).contains(&bits) {
                return Err(LearnerError::Grid(format!("feature bits {bits} outside 1..=26")));
            }
        }
        Ok(cfg)
    }

    pub fn to_kv(&self, kv: &mut KvMap) {
        kv.set("seed", self.seed);
        self.grid.to_kv(kv);
        kv.set(
            "split",
            self.split.iter().map(f64::to_string).collect::<Vec<_>>().join(","),
        );
        kv.set("learner_bits", self.featurizer.bits);
        kv.set("learner_interactions", self.featurizer.interactions);
        kv.set("regression_bits", self.regression_featurizer.bits);
        kv.set("regression_categorical", self.regression_featurizer.categorical);
        kv.set("regression_numeric", self.regression_featurizer.numeric);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkReport {
    /// Random, logging, Regression, IPS, DRO, POEM.
    pub rows: Vec<BenchmarkRow>,
    /// Learned policies keyed by method, in row order. A learner that found
    /// nothing to train on has a row but no policy.
    #[serde(skip)]
    pub policies: Vec<(String, LinearRankingPolicy)>,
}

impl BenchmarkReport {
    pub fn row(&self, method: &str) -> Option<&BenchmarkRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn policy(&self, method: &str) -> Option<&LinearRankingPolicy> {
        self.policies.iter().find(|(m, _)| m == method).map(|(_, p)| p)
    }
}

struct Learned {
    row: BenchmarkRow,
    policy: Option<LinearRankingPolicy>,
}

/// Trains one learner and reports it on the test split. Data that gives the
/// learner nothing to fit yields a row without estimates.
fn learn(
    method: &str,
    train: impl FnOnce() -> Result<Vec<Candidate>, LearnerError>,
    mode: PolicyMode,
    validation: &PreparedLog,
    test: &[ImpressionRecord],
    z: f64,
) -> Result<Learned, LearnerError> {
    let candidates = match train() {
        Ok(c) if c.is_empty() => Err(LearnerError::NoCandidates),
        other => other,
    };
    let picked = candidates.and_then(|c| {
        let (index, validation_ips) = select_candidate(&c, mode, validation)?;
        Ok((c.into_iter().nth(index).expect("selected index"), validation_ips))
    });
    let (candidate, validation_ips) = match picked {
        Ok(p) => p,
        Err(e @ (LearnerError::NoRewards | LearnerError::NoCandidates)) => {
            return Ok(Learned {
                row: BenchmarkRow {
                    method: method.to_string(),
                    hyperparams: "-".into(),
                    validation_ips: None,
                    report: None,
                    note: Some(e.to_string()),
                },
                policy: None,
            })
        }
        Err(e) => return Err(e),
    };
    let policy = candidate_policy(method, &candidate, mode, validation)?;
    let row = test_row(
        method,
        candidate.hyperparams.to_string(),
        Some(validation_ips),
        &policy,
        test,
        validation.keep_prob(),
        z,
    )?;
    Ok(Learned {
        row,
        policy: Some(policy),
    })
}

/// Splits a 1-slot log, trains all four learners, selects each on validation
/// IPS and reports every method, plus uniform and logging references, on the
/// test split.
pub fn run_benchmark(
    log: &[ImpressionRecord],
    keep_prob: f64,
    logging_replica: &dyn Policy,
    cfg: &BenchmarkConfig,
) -> Result<BenchmarkReport, LearnerError> {
    cfg.grid.validate()?;
    let split = split_log(log, cfg.split, cfg.seed)?;
    let train = PreparedLog::new(&split.train, &cfg.featurizer, keep_prob)?;
    let validate = PreparedLog::new(&split.validate, &cfg.featurizer, keep_prob)?;
    let train_reg = PreparedLog::new(&split.train, &cfg.regression_featurizer, keep_prob)?;
    let validate_reg = PreparedLog::new(&split.validate, &cfg.regression_featurizer, keep_prob)?;
    if train.kept() == 0 {
        return Err(LearnerError::EmptyTrain);
    }
    if validate.kept() == 0 {
        return Err(LearnerError::EmptyValidation);
    }
    let test = &split.test;
    let (grid, seed, z) = (&cfg.grid, cfg.seed, cfg.z);
    let deterministic = PolicyMode::Deterministic;

    let mut rows = vec![
        reference_row("random", &UniformPolicy, test, keep_prob, z)?,
        reference_row("logging", logging_replica, test, keep_prob, z)?,
    ];

    let regression = learn(
        "regression",
        || train_regression(&train_reg, grid, seed),
        deterministic,
        &validate_reg,
        test,
        z,
    )?;
    let ips = learn("ips", || train_ips(&train, grid, seed), deterministic, &validate, test, z)?;
    let dro = learn(
        "dro",
        || {
            let model = regression.policy.as_ref().ok_or(LearnerError::NoCandidates)?;
            let predictions = reward_predictions(&train_reg, &model.weights);
            train_dro(&train, &predictions, grid, seed)
        },
        deterministic,
        &validate,
        test,
        z,
    )?;
    let poem = learn(
        "poem",
        || train_poem(&train, grid, seed),
        PolicyMode::Stochastic,
        &validate,
        test,
        z,
    )?;
    let mut policies = Vec::new();
    for learned in [regression, ips, dro, poem] {
        if let Some(p) = learned.policy {
            policies.push((learned.row.method.clone(), p));
        }
        rows.push(learned.row);
    }
    Ok(BenchmarkReport { rows, policies })
}

/// One line per method: name, chosen hyper-parameters, validation IPS
/// (scaled by 10^4) and the test-set report columns. Missing reports print
/// `NA`.
pub fn benchmark_tsv(rows: &[BenchmarkRow]) -> String {
    let mut out = String::from("method\thyperparams\tvalidation_ips_x1e4");
    for c in REPORT_COLUMNS {
        out.push('\t');
        out.push_str(c);
    }
    out.push('\n');
    for r in rows {
        out.push_str(&r.method);
        out.push('\t');
        out.push_str(&r.hyperparams);
        out.push('\t');
        out.push_str(&r.validation_ips.map_or("NA".into(), |v| tsv_number(v * 1e4)));
        let cells = match &r.report {
            Some(rep) => report_cells(rep),
            None => vec!["NA".to_string(); REPORT_COLUMNS.len()],
        };
        for c in cells {
            out.push('\t');
            out.push_str(&c);
        }
        out.push('\n');
    }
    out
}
