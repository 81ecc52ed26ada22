use std::sync::Arc;

use super::*;
use crate::logformat::{CandidateRecord, FeatureVector, ImpressionRecord};
use crate::policies::{BoundPolicy, Context, EpsilonMixturePolicy, Policy, UniformPolicy};
use crate::simulator::{true_policy_value, World, WorldConfig};

struct Constant(f64);
struct BoundConstant(f64);

impl BoundPolicy for BoundConstant {
    fn probability_unchecked(&self, _: &[usize]) -> f64 {
        self.0
    }
    fn sample(&self, _: &mut dyn rand::RngCore) -> Vec<usize> {
        vec![0]
    }
}

impl Policy for Constant {
    fn name(&self) -> &str {
        "constant"
    }
    fn bind<'a>(&'a self, _: &'a dyn Context) -> Box<dyn BoundPolicy + 'a> {
        Box::new(BoundConstant(self.0))
    }
}

fn record(ex_id: u64, clicked: bool, propensity: f64, candidates: usize) -> ImpressionRecord {
    let mut c = vec![CandidateRecord::default(); candidates];
    c[0].clicked = clicked;
    ImpressionRecord {
        ex_id,
        hash_id: format!("h{ex_id}"),
        was_ad_clicked: clicked,
        propensity,
        nb_slots: 1,
        display_features: FeatureVector::new(),
        candidates: c,
    }
}

fn small_world(seed: u64, impressions: u64) -> World {
    let mut cfg = WorldConfig::new(seed);
    cfg.model_seed = 3;
    cfg.pool_size_min = 8;
    cfg.pool_size_max = 10;
    cfg.logging_correlation = -0.5;
    cfg.impression_count = impressions;
    World::new(cfg).unwrap()
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn hand_evaluated_weights() {
    let mut acc = EstimatorAccumulator::new(0.1).unwrap();
    acc.accumulate(&record(0, true, 0.5, 4), &Constant(0.25)).unwrap();
    assert_eq!(acc.sum_w(), 0.5);
    assert_eq!(acc.sum_dw(), 0.5);

    let mut acc = EstimatorAccumulator::new(0.1).unwrap();
    acc.accumulate(&record(0, false, 0.5, 4), &Constant(0.25)).unwrap();
    assert!((acc.sum_w() - 5.0).abs() < 1e-12);
    assert_eq!(acc.sum_dw(), 0.0);
}

#[test]
fn n_hat_counts() {
    let mut acc = EstimatorAccumulator::new(0.1).unwrap();
    assert_eq!(acc.n_hat(), 0.0);
    for i in 0..7 {
        acc.add(1.0, i < 3).unwrap();
    }
    assert!((acc.n_hat() - 43.0).abs() < 1e-12);
    assert!(matches!(
        EstimatorAccumulator::new(0.1).unwrap().ips(),
        Err(EstimatorError::Empty)
    ));
}

#[test]
fn rejects_bad_inputs() {
    assert!(EstimatorAccumulator::new(0.0).is_err());
    assert!(EstimatorAccumulator::new(1.5).is_err());
    assert!(EstimatorAccumulator::new(f64::NAN).is_err());
    let mut acc = EstimatorAccumulator::new(0.5).unwrap();
    assert!(acc.add(-1.0, true).is_err());
    assert!(acc.add(f64::INFINITY, true).is_err());
    let other = EstimatorAccumulator::new(0.25).unwrap();
    assert!(matches!(acc.merge(&other), Err(EstimatorError::KeepMismatch(..))));
    assert!(matches!(
        acc.report(Z_99),
        Err(EstimatorError::InsufficientData { kept: 0 })
    ));
    acc.add(0.0, true).unwrap();
    acc.add(0.0, false).unwrap();
    assert!(matches!(acc.snips(), Err(EstimatorError::NoOverlap)));
    assert_eq!(acc.control_variate().unwrap(), 0.0);
}

#[test]
fn logging_replica_weights_track_n_hat() {
    let world = small_world(11, 3000);
    let (log, _) = world.generate_vec().unwrap();
    let replica = world.model.logging_policy().unwrap();
    let mut acc = EstimatorAccumulator::new(0.1).unwrap();
    for r in &log {
        acc.accumulate(r, &replica).unwrap();
        assert!(close(acc.sum_w(), acc.n_hat(), 1e-9));
    }
    assert!(close(acc.control_variate().unwrap(), 1.0, 1e-9));
    assert!(close(acc.sum_dw(), acc.clicked() as f64, 1e-9));
    let report = acc.report(Z_99).unwrap();
    assert!(close(report.ips, report.snips, 1e-9));
    assert_eq!(report.c_hat_half_width(), 0.0);
}

#[test]
fn single_clicked_impression() {
    let mut acc = EstimatorAccumulator::new(0.1).unwrap();
    acc.add(0.5, true).unwrap();
    assert_eq!(acc.ips().unwrap(), 0.5);
    assert_eq!(acc.control_variate().unwrap(), 0.5);
    assert_eq!(acc.snips().unwrap(), 1.0);
}

#[test]
fn snips_ignores_uniform_weight_scaling() {
    let weights = [(0.3, true), (1.7, false), (0.9, false), (2.2, true), (0.1, false)];
    let build = |lambda: f64| {
        let mut acc = EstimatorAccumulator::new(0.2).unwrap();
        for &(w, d) in &weights {
            acc.add(w * lambda, d).unwrap();
        }
        acc.report(Z_99).unwrap()
    };
    let base = build(1.0);
    for lambda in [0.01, 3.0, 250.0] {
        let scaled = build(lambda);
        assert!(close(base.snips, scaled.snips, 1e-12));
        assert!(close(base.snips_half_width(), scaled.snips_half_width(), 1e-9));
    }
}

#[test]
fn degenerate_intervals() {
    let mut acc = EstimatorAccumulator::new(1.0).unwrap();
    for _ in 0..5 {
        acc.add(0.7, true).unwrap();
    }
    let r = acc.report(Z_99).unwrap();
    assert_eq!(r.ips_half_width(), 0.0);
    assert_eq!(r.snips_half_width(), 0.0);

    let mut acc = EstimatorAccumulator::new(0.1).unwrap();
    for (i, w) in [0.2, 1.4, 0.6, 3.0].iter().enumerate() {
        acc.add(*w, i % 2 == 0).unwrap();
    }
    let r = acc.report(0.0).unwrap();
    for ci in [r.ci_ips, r.ci_c_hat, r.ci_snips] {
        assert_eq!(ci.lower, ci.upper);
    }
    assert_eq!(r.ci_ips.lower, r.ips);
    let r = acc.report(Z_99).unwrap();
    assert!(r.snips_half_width().is_finite() && r.snips_half_width() > 0.0);
    assert!(close(r.snips, r.ips / r.c_hat, 1e-15));
    for (ci, center) in [(r.ci_ips, r.ips), (r.ci_c_hat, r.c_hat), (r.ci_snips, r.snips)] {
        assert!(close(ci.upper - center, center - ci.lower, 1e-9));
    }
}

#[test]
fn variance_matches_sample_formula_without_subsampling() {
    // keep = 1, so N̂ = n and the ratio linearization reduces to the plain
    // sample variance with divisor n.
    let weights = [0.3, 1.7, 0.9, 2.2, 0.1, 1.1];
    let clicks = [true, false, true, true, false, false];
    let mut acc = EstimatorAccumulator::new(1.0).unwrap();
    for (w, d) in weights.iter().zip(clicks) {
        acc.add(*w, d).unwrap();
    }
    let n = weights.len() as f64;
    let a: Vec<f64> = weights
        .iter()
        .zip(clicks)
        .map(|(w, d)| if d { *w } else { 0.0 })
        .collect();
    let mean = a.iter().sum::<f64>() / n;
    let var = a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n / n;
    assert!(close(acc.ips_variance().unwrap(), var, 1e-12));
    let wm = weights.iter().sum::<f64>() / n;
    let wvar = weights.iter().map(|x| (x - wm).powi(2)).sum::<f64>() / n / n;
    assert!(close(acc.control_variate_variance().unwrap(), wvar, 1e-12));
}

#[test]
fn merge_matches_single_pass() {
    let world = small_world(12, 20_000);
    let (log, _) = world.generate_vec().unwrap();
    let policy = EpsilonMixturePolicy::new(0.3, Arc::new(world.model.logging_policy().unwrap()))
        .unwrap();
    let mut whole = EstimatorAccumulator::new(0.1).unwrap();
    for r in &log {
        whole.accumulate(r, &policy).unwrap();
    }
    let (left, right) = log.split_at(log.len() / 3 + 17);
    let part = |rs: &[ImpressionRecord]| {
        let mut acc = EstimatorAccumulator::new(0.1).unwrap();
        for r in rs {
            acc.accumulate(r, &policy).unwrap();
        }
        acc
    };
    let mut lr = part(left);
    lr.merge(&part(right)).unwrap();
    let mut rl = part(right);
    rl.merge(&part(left)).unwrap();
    for merged in [&lr, &rl] {
        assert_eq!(merged.kept(), whole.kept());
        assert!(close(merged.sum_w(), whole.sum_w(), 1e-9));
        assert!(close(merged.sum_dw(), whole.sum_dw(), 1e-9));
        assert!(close(merged.sum_w2(), whole.sum_w2(), 1e-9));
        assert!(close(merged.sum_dw_w(), whole.sum_dw_w(), 1e-9));
    }
    let sharded = evaluate_policy(&log, &policy, 0.1).unwrap();
    assert!(close(sharded.sum_w(), whole.sum_w(), 1e-9));
    assert!(close(sharded.sum_dw2(), whole.sum_dw2(), 1e-9));
}

#[test]
fn sweep_matches_direct_evaluation_bitwise() {
    let world = small_world(13, 10_000);
    let (log, _) = world.generate_vec().unwrap();
    let replica = Arc::new(world.model.logging_policy().unwrap());
    let grid = default_epsilon_grid();
    let rows = diagnostic_sweep(&log, replica.as_ref(), &grid, 0.1, Z_99).unwrap();
    for row in &rows {
        let policy = EpsilonMixturePolicy::new(row.epsilon, replica.clone()).unwrap();
        let direct = evaluate_policy(&log, &policy, 0.1).unwrap().report(Z_99).unwrap();
        assert_eq!(direct, row.report);
    }
    let zero = &rows[0].report;
    assert!(close(zero.c_hat, 1.0, 1e-9));
    assert_eq!(zero.c_hat_half_width(), 0.0);
}

#[test]
fn epsilon_grids() {
    let grid = default_epsilon_grid();
    assert_eq!(grid.len(), 12);
    assert_eq!(grid[0], 0.0);
    assert_eq!(grid[1], 1.0 / 1024.0);
    assert_eq!(grid[10], 0.5);
    assert_eq!(grid[11], 1.0);
    let world = small_world(14, 2_000);
    let (log, _) = world.generate_vec().unwrap();
    let replica = world.model.logging_policy().unwrap();
    let rows = diagnostic_sweep(&log, &replica, &[0.0], 0.1, Z_99).unwrap();
    assert_eq!(rows.len(), 1);
    assert!(diagnostic_sweep(&log, &replica, &[1.5], 0.1, Z_99).is_err());
}

#[test]
fn ips_half_width_grows_with_epsilon() {
    let world = small_world(15, 20_000);
    let (log, _) = world.generate_vec().unwrap();
    let replica = world.model.logging_policy().unwrap();
    let rows = diagnostic_sweep(&log, &replica, &default_epsilon_grid(), 0.1, Z_99).unwrap();
    for pair in rows.windows(2) {
        assert!(
            pair[1].report.ips_half_width() >= pair[0].report.ips_half_width(),
            "{} -> {}",
            pair[0].epsilon,
            pair[1].epsilon
        );
    }
}

#[test]
fn propensity_stats_examples() {
    let one = [record(0, true, 0.25, 4)];
    let s = propensity_stats(&one, 0.1);
    assert_eq!(s.len(), 1);
    assert_eq!(s[0].avg_inv_propensity, 4.0);
    assert_eq!(s[0].max_inv_propensity, 4.0);
    assert_eq!(s[0].n_hat, 1.0);

    let mut log: Vec<ImpressionRecord> = (0..6).map(|i| record(i, i % 3 == 0, 0.25, 4)).collect();
    let mut two = record(9, false, 1.0 / 12.0, 4);
    two.nb_slots = 2;
    log.push(two);
    let s = propensity_stats(&log, 0.1);
    assert_eq!(s.len(), 2);
    assert_eq!((s[0].slots, s[0].impressions), (1, 6));
    assert!((s[0].n_hat - 42.0).abs() < 1e-12);
    assert_eq!(s[0].avg_inv_propensity, 4.0);
    assert_eq!(s[0].max_inv_propensity, 4.0);
    assert!((s[1].max_inv_propensity - 12.0).abs() < 1e-12);
    assert!(propensity_stats(&[], 0.1).is_empty());
}

#[test]
fn uniform_logging_has_constant_inverse_propensity() {
    let mut cfg = WorldConfig::new(16);
    cfg.pool_size_min = 4;
    cfg.pool_size_max = 4;
    cfg.logging_temperature = 0.0;
    cfg.impression_count = 500;
    let world = World::new(cfg).unwrap();
    let (log, _) = world.generate_vec().unwrap();
    let s = propensity_stats(&log, 0.1);
    assert!((s[0].avg_inv_propensity - 4.0).abs() < 1e-12);
    assert!((s[0].max_inv_propensity - 4.0).abs() < 1e-12);
}

fn parse_tsv(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(|l| l.split('\t').map(str::to_string).collect())
        .collect()
}

#[test]
fn tsv_carries_twelve_digits() {
    let mut acc = EstimatorAccumulator::new(0.1).unwrap();
    for (i, w) in [0.21, 1.37, 0.64, 3.05, 0.93].iter().enumerate() {
        acc.add(*w, i % 2 == 1).unwrap();
    }
    let report = acc.report(Z_99).unwrap();
    let table = parse_tsv(&reports_tsv("policy", &[("p".to_string(), &report)]));
    assert_eq!(table[0][0], "policy");
    assert_eq!(table[0].len(), 10);
    let cell = |name: &str| {
        let i = table[0].iter().position(|c| c == name).unwrap();
        table[1][i].parse::<f64>().unwrap()
    };
    assert!(close(cell("c_hat"), report.c_hat, 1e-11));
    assert!(close(cell("ips_x1e4"), report.ips * 1e4, 1e-11));
    assert!(close(cell("snips_hw_x1e4"), report.snips_half_width() * 1e4, 1e-11));
    assert_eq!(cell("kept"), 5.0);

    let lines = jsonl(&[LabelledReport {
        label: "p",
        report: &report,
    }]);
    let back: serde_json::Value = serde_json::from_str(lines.trim_end()).unwrap();
    assert_eq!(back["label"], "p");
    assert_eq!(back["snips"].as_f64().unwrap(), report.snips);
}

#[test]
fn mixture_estimates_agree_with_oracle() {
    let world = small_world(17, 200_000);
    let (log, _) = world.generate_vec().unwrap();
    let replica: Arc<dyn Policy> = Arc::new(world.model.logging_policy().unwrap());
    let contexts = world.oracle_contexts(100_000);
    for eps in [0.0, 0.0625, 0.25] {
        let policy = EpsilonMixturePolicy::new(eps, replica.clone()).unwrap();
        let truth = true_policy_value(&policy, &world.model, &contexts).unwrap();
        let r = evaluate_policy(&log, &policy, 0.1).unwrap().report(Z_99).unwrap();
        assert!((r.ips - truth).abs() <= 3.0 * r.se_ips, "eps {eps}");
    }
    let uniform = evaluate_policy(&log, &UniformPolicy, 0.1).unwrap();
    assert!(uniform.control_variate().unwrap() > 0.5);
}
