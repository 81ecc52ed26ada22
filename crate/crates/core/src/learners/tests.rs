use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::*;
use crate::estimators::Z_99;
use crate::logformat::ImpressionRecord;
use crate::policies::{argmax_ranking, Featurizer, LinearRankingPolicy, PolicyMode, SparseVec, UniformPolicy};
use crate::simulator::{FixedArmWorld, World, WorldConfig};

fn small_grid() -> HyperGrid {
    HyperGrid {
        max_epochs: 6,
        lasso: vec![1e-8, 1e-4],
        learning_rates: vec![0.1, 1.0],
        poem_variance_reg: vec![1e-3],
        poem_l2: vec![1e-6],
        poem_clip: vec![100.0],
    }
}

fn arm_world() -> FixedArmWorld {
    FixedArmWorld::new(vec![0.02, 0.05, 0.15], vec![0.5, 0.3, 0.2]).unwrap()
}

fn arm_log(world: &FixedArmWorld, impressions: u64, keep: f64, seed: u64) -> Vec<ImpressionRecord> {
    let mut log = Vec::new();
    world.generate(impressions, keep, seed, &mut log).unwrap();
    log
}

fn feature_log(seed: u64, impressions: u64, keep: f64) -> Vec<ImpressionRecord> {
    let mut cfg = WorldConfig::new(seed);
    cfg.model_seed = 5;
    cfg.pool_size_min = 4;
    cfg.pool_size_max = 6;
    cfg.impression_count = impressions;
    cfg.subsample_keep_prob = keep;
    cfg.base_click_rate = 0.2;
    World::new(cfg).unwrap().generate_vec().unwrap().0
}

fn chosen(policy: &LinearRankingPolicy, world: &FixedArmWorld, contexts: usize) -> Vec<usize> {
    world
        .oracle_contexts(contexts, 99)
        .iter()
        .map(|ctx| argmax_ranking(&policy.linear_scores(ctx), 1)[0])
        .collect()
}

fn share(picks: &[usize], arm: usize) -> f64 {
    picks.iter().filter(|&&a| a == arm).count() as f64 / picks.len() as f64
}

fn selected(cands: &[Candidate], mode: PolicyMode, validation: &PreparedLog) -> LinearRankingPolicy {
    let (i, _) = select_candidate(cands, mode, validation).unwrap();
    select::candidate_policy("t", &cands[i], mode, validation).unwrap()
}

fn example(clicked: bool, propensity: f64, candidates: usize) -> Example {
    Example {
        clicked,
        propensity,
        inv_keep: 1.0,
        candidates: (0..candidates).map(|i| vec![(i as u32, 1.0)]).collect(),
    }
}

fn random_point(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            0.5 * z
        })
        .collect()
}

fn touched(data: &PreparedLog) -> Vec<usize> {
    let mut idx: Vec<usize> = data
        .examples()
        .iter()
        .flat_map(|e| e.candidates.iter().flatten().map(|&(i, _)| i as usize))
        .collect();
    idx.sort_unstable();
    idx.dedup();
    idx
}

/// Relative error between `g` and central differences of `f` over `coords`.
fn fd_error(f: impl Fn(&[f64]) -> f64, g: &[f64], w: &[f64], coords: &[usize]) -> f64 {
    let h = 1e-5;
    let (mut num, mut den) = (0.0, 0.0);
    let mut x = w.to_vec();
    for &j in coords {
        x[j] = w[j] + h;
        let up = f(&x);
        x[j] = w[j] - h;
        let down = f(&x);
        x[j] = w[j];
        let fd = (up - down) / (2.0 * h);
        num += (fd - g[j]).powi(2);
        den += fd.powi(2).max(g[j].powi(2));
    }
    (num / den.max(1e-300)).sqrt()
}

fn gradient_fixture() -> (PreparedLog, Vec<usize>) {
    let log = feature_log(11, 1500, 0.3);
    let data = PreparedLog::new(&log, &Featurizer::with_bits(10), 0.3).unwrap();
    let coords = touched(&data);
    (data, coords)
}

#[test]
fn split_everything_into_train() {
    let log = feature_log(1, 500, 1.0);
    let s = split_log(&log, [1.0, 0.0, 0.0], 4).unwrap();
    assert_eq!(s.train, log);
    assert!(s.validate.is_empty() && s.test.is_empty());
}

#[test]
fn split_sizes_concentrate() {
    let template = feature_log(1, 1, 1.0).remove(0);
    let log: Vec<ImpressionRecord> = (0..30_000)
        .map(|i| {
            let mut r = template.clone();
            r.ex_id = i;
            r
        })
        .collect();
    let s = split_log(&log, EVEN_SPLIT, 17).unwrap();
    let bound = 3.0 * (30_000.0f64 / 3.0 * (2.0 / 3.0)).sqrt();
    for part in [&s.train, &s.validate, &s.test] {
        assert!((part.len() as f64 - 10_000.0).abs() <= bound, "{}", part.len());
    }
    assert_eq!(s.train.len() + s.validate.len() + s.test.len(), 30_000);
}

#[test]
fn split_is_deterministic_and_order_free() {
    let log = feature_log(2, 2000, 0.5);
    let a = split_log(&log, EVEN_SPLIT, 3).unwrap();
    assert_eq!(a, split_log(&log, EVEN_SPLIT, 3).unwrap());
    let reversed: Vec<_> = log.iter().rev().cloned().collect();
    let b = split_log(&reversed, EVEN_SPLIT, 3).unwrap();
    let ids = |v: &[ImpressionRecord]| {
        let mut x: Vec<u64> = v.iter().map(|r| r.ex_id).collect();
        x.sort_unstable();
        x
    };
    assert_eq!(ids(&a.test), ids(&b.test));
    assert_ne!(ids(&a.test), ids(&split_log(&log, EVEN_SPLIT, 4).unwrap().test));
    assert!(matches!(
        split_log(&log, [0.5, 0.5, 0.5], 1),
        Err(LearnerError::Ratios(_))
    ));
}

#[test]
fn regression_gradient_matches_finite_differences() {
    let (data, coords) = gradient_fixture();
    let obj = RegressionObjective {
        data: &data,
        lasso: 1e-4,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..5 {
        let w = random_point(data.dimension(), &mut rng);
        let err = fd_error(|x| obj.value(x), &obj.gradient(&w), &w, &coords);
        assert!(err <= 1e-4, "{err}");
    }
}

#[test]
fn oaa_gradients_match_finite_differences() {
    let (data, coords) = gradient_fixture();
    let ips = ips_training_weights(&data);
    let preds: Vec<Vec<f64>> = data
        .examples()
        .iter()
        .map(|e| (0..e.candidates.len()).map(|a| 0.05 * a as f64).collect())
        .collect();
    let dro = dro_training_weights(&data, &preds).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for weights in [&ips, &dro] {
        let obj = OaaObjective {
            data: &data,
            weights,
            lasso: 1e-6,
        };
        for _ in 0..5 {
            let w = random_point(data.dimension(), &mut rng);
            let err = fd_error(|x| obj.value(x), &obj.gradient(&w), &w, &coords);
            assert!(err <= 1e-4, "{err}");
        }
    }
}

#[test]
fn poem_gradients_match_finite_differences() {
    let (data, coords) = gradient_fixture();
    let obj = PoemObjective {
        data: &data,
        variance_reg: 0.1,
        l2: 1e-3,
        clip: 1e3,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let w = random_point(data.dimension(), &mut rng);
        let err = fd_error(|x| obj.value(x), &obj.gradient(&w), &w, &coords);
        assert!(err <= 1e-4, "exact {err}");

        let anchor = random_point(data.dimension(), &mut rng);
        let stats = obj.stats(&anchor);
        let g = obj.surrogate_gradient(&w, &stats);
        let err = fd_error(|x| obj.surrogate(x, &stats), &g, &w, &coords);
        assert!(err <= 1e-4, "surrogate {err}");
    }
}

#[test]
fn poem_surrogate_touches_objective() {
    let (data, _) = gradient_fixture();
    let obj = PoemObjective {
        data: &data,
        variance_reg: 0.05,
        l2: 1e-4,
        clip: 50.0,
    };
    let w = random_point(data.dimension(), &mut ChaCha8Rng::seed_from_u64(4));
    let stats = obj.stats(&w);
    assert!((obj.surrogate(&w, &stats) - obj.value(&w)).abs() < 1e-12);
    assert_eq!(obj.surrogate_gradient(&w, &stats), obj.gradient(&w));
}

#[test]
fn poem_without_regularizers_is_ips() {
    let (data, coords) = gradient_fixture();
    let obj = PoemObjective {
        data: &data,
        variance_reg: 0.0,
        l2: 0.0,
        clip: f64::INFINITY,
    };
    let w = vec![0.0; data.dimension()];
    let ips = data.ips(&w, PolicyMode::Stochastic);
    assert!((obj.value(&w) - ips).abs() <= 1e-12 * ips);
    let err = fd_error(|x| obj.value(x), &obj.gradient(&w), &w, &coords);
    assert!(err <= 1e-4, "{err}");
}

#[test]
fn clipped_poem_stays_bounded() {
    let (data, _) = gradient_fixture();
    let obj = PoemObjective {
        data: &data,
        variance_reg: 0.1,
        l2: 0.0,
        clip: 1.0,
    };
    let w = random_point(data.dimension(), &mut ChaCha8Rng::seed_from_u64(5));
    let v = obj.value(&w);
    assert!(v.is_finite());
    assert!(obj.stats(&w).mean <= data.clicked() as f64 / data.n_hat());
}

#[test]
fn zero_weights_pick_the_first_candidate() {
    let e = example(true, 0.5, 4);
    assert_eq!(e.logged_probability(&[0.0; 4], PolicyMode::Deterministic), 1.0);
    assert_eq!(e.logged_probability(&[0.0; 4], PolicyMode::Stochastic), 0.25);
    assert_eq!(argmax_ranking(&[0.0; 5], 1), vec![0]);
}

#[test]
fn ips_values_by_hand() {
    let e = example(true, 0.25, 3);
    assert_eq!(ips_values(&e), vec![4.0, 0.0, 0.0]);
    assert_eq!(oaa_weights(&ips_values(&e)), vec![(4.0, 0.0), (0.0, 4.0), (0.0, 4.0)]);
    let e = example(false, 0.25, 3);
    assert!(oaa_weights(&ips_values(&e)).iter().all(|&w| w == (0.0, 0.0)));
    let mut buf = SparseVec::new();
    OaaObjective::example_gradient(&e, &oaa_weights(&ips_values(&e)), &[0.3; 3], 1.0, &mut buf);
    assert!(buf.is_empty());
}

#[test]
fn dro_value_by_hand() {
    let e = example(true, 0.5, 2);
    let v = dro_values(&e, &[0.4, 0.3]);
    assert!((v[0] - 1.6).abs() < 1e-15);
    assert_eq!(v[1], 0.3);
    assert_eq!(oaa_weights(&[1.6, 0.3])[1], (0.3, 1.6));
}

#[test]
fn dro_with_null_model_is_ips_bitwise() {
    let log = feature_log(6, 3000, 0.4);
    let data = PreparedLog::new(&log, &Featurizer::with_bits(12), 0.4).unwrap();
    let zeros: Vec<Vec<f64>> = data
        .examples()
        .iter()
        .map(|e| vec![0.0; e.candidates.len()])
        .collect();
    let dro = dro_training_weights(&data, &zeros).unwrap();
    let ips = ips_training_weights(&data);
    let bits = |w: &[Vec<(f64, f64)>]| -> Vec<(u64, u64)> {
        w.iter()
            .flatten()
            .map(|(p, n)| (p.to_bits(), n.to_bits()))
            .collect()
    };
    assert_eq!(bits(&dro), bits(&ips));
    assert!(matches!(
        dro_training_weights(&data, &zeros[1..]),
        Err(LearnerError::Predictions { .. })
    ));
}

#[test]
fn perfect_reward_model_lowers_variance() {
    let world = arm_world();
    let log = arm_log(&world, 20_000, 1.0, 7);
    let data = PreparedLog::new(&log, &world.featurizer, 1.0).unwrap();
    let variance = |xs: &[f64]| {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
    };
    let (mut ips, mut dro) = (Vec::new(), Vec::new());
    for (e, r) in data.examples().iter().zip(&log) {
        let truth: Vec<f64> = r
            .candidates
            .iter()
            .map(|c| world.arm_ctrs[FixedArmWorld::arm_of(&c.features).unwrap()])
            .collect();
        ips.push(ips_values(e)[0]);
        dro.push(dro_values(e, &truth)[0]);
    }
    assert!(variance(&dro) < variance(&ips));
}

#[test]
fn regression_finds_the_best_arm() {
    let world = arm_world();
    let train = PreparedLog::new(&arm_log(&world, 20_000, 1.0, 1), &world.featurizer, 1.0).unwrap();
    let validate =
        PreparedLog::new(&arm_log(&world, 20_000, 1.0, 2), &world.featurizer, 1.0).unwrap();
    let cands = train_regression(&train, &small_grid(), 1).unwrap();
    let policy = selected(&cands, PolicyMode::Deterministic, &validate);
    assert!(share(&chosen(&policy, &world, 500), world.best_arm()) >= 0.95);
}

#[test]
fn stronger_lasso_shrinks_weights() {
    let log = feature_log(8, 4000, 0.5);
    let data = PreparedLog::new(&log, &Featurizer::with_bits(12), 0.5).unwrap();
    let grid = HyperGrid {
        lasso: vec![1e-8, 1e-4],
        learning_rates: vec![1.0],
        ..small_grid()
    };
    let cands = train_regression(&data, &grid, 3).unwrap();
    let l1_at = |lasso: f64| -> f64 {
        let c = cands
            .iter()
            .rfind(|c| matches!(c.hyperparams, Hyperparams::Sgd { lasso: l, .. } if l == lasso))
            .unwrap();
        c.weights.iter().map(|(_, w)| w.abs()).sum()
    };
    assert!(l1_at(1e-4) <= l1_at(1e-8));
}

#[test]
fn ips_needs_a_click() {
    let world = FixedArmWorld::new(vec![0.0, 0.0], vec![0.5, 0.5]).unwrap();
    let data = PreparedLog::new(&arm_log(&world, 200, 1.0, 1), &world.featurizer, 1.0).unwrap();
    assert!(matches!(
        train_ips(&data, &small_grid(), 1),
        Err(LearnerError::NoRewards)
    ));
    assert!(matches!(
        train_poem(&data, &small_grid(), 1),
        Err(LearnerError::NoRewards)
    ));
}

#[test]
fn ips_recovers_the_best_arm() {
    let world = arm_world();
    let log = arm_log(&world, 200_000, 0.2, 5);
    let split = split_log(&log, EVEN_SPLIT, 5).unwrap();
    let train = PreparedLog::new(&split.train, &world.featurizer, 0.2).unwrap();
    let validate = PreparedLog::new(&split.validate, &world.featurizer, 0.2).unwrap();
    let cands = train_ips(&train, &small_grid(), 5).unwrap();
    let policy = selected(&cands, PolicyMode::Deterministic, &validate);
    assert!(share(&chosen(&policy, &world, 500), world.best_arm()) >= 0.95);
}

#[test]
fn subsampled_training_agrees_with_full_log() {
    let world = arm_world();
    let grid = HyperGrid {
        max_epochs: 4,
        ..small_grid()
    };
    let mut agree = 0;
    for seed in 0..5 {
        let arm = |keep: f64| {
            let train = PreparedLog::new(&arm_log(&world, 40_000, keep, seed), &world.featurizer, keep)
                .unwrap();
            let validate =
                PreparedLog::new(&arm_log(&world, 40_000, keep, seed + 100), &world.featurizer, keep)
                    .unwrap();
            let policy = selected(
                &train_ips(&train, &grid, seed).unwrap(),
                PolicyMode::Deterministic,
                &validate,
            );
            let picks = chosen(&policy, &world, 200);
            (0..world.arms())
                .max_by(|&a, &b| share(&picks, a).total_cmp(&share(&picks, b)))
                .unwrap()
        };
        if arm(1.0) == arm(0.2) {
            agree += 1;
        }
    }
    assert!(agree >= 4, "{agree}");
}

fn arm_benchmark(seed: u64, impressions: u64) -> BenchmarkReport {
    let world = arm_world();
    let log = arm_log(&world, impressions, 0.5, seed);
    let mut cfg = BenchmarkConfig::new(seed);
    cfg.grid = small_grid();
    cfg.featurizer = world.featurizer.clone();
    cfg.regression_featurizer = Featurizer {
        categorical: false,
        ..world.featurizer.clone()
    };
    run_benchmark(&log, 0.5, &world.logging_policy(), &cfg).unwrap()
}

#[test]
fn poem_beats_misspecified_regression() {
    let mut wins = 0;
    for seed in 0..5 {
        let report = arm_benchmark(seed, 30_000);
        let snips = |m: &str| report.row(m).unwrap().report.as_ref().map_or(f64::NEG_INFINITY, |r| r.snips);
        if snips("poem") >= snips("regression") {
            wins += 1;
        }
    }
    assert!(wins >= 4, "{wins}");
}

#[test]
fn benchmark_rows_and_determinism() {
    let a = arm_benchmark(9, 6_000);
    let methods: Vec<&str> = a.rows.iter().map(|r| r.method.as_str()).collect();
    assert_eq!(methods, ["random", "logging", "regression", "ips", "dro", "poem"]);
    assert_eq!(a.policies.len(), 4);
    let logging = a.row("logging").unwrap().report.as_ref().unwrap();
    assert!((logging.c_hat - 1.0).abs() < 1e-12);
    assert_eq!(a, arm_benchmark(9, 6_000));
    let tsv = benchmark_tsv(&a.rows);
    assert_eq!(tsv.lines().count(), 7);
    assert!(tsv.lines().nth(1).unwrap().starts_with("random\t-\tNA\t"));
}

#[test]
fn single_candidate_is_selected() {
    let world = arm_world();
    let validate = PreparedLog::new(&arm_log(&world, 2000, 1.0, 3), &world.featurizer, 1.0).unwrap();
    let cand = Candidate {
        hyperparams: Hyperparams::Sgd {
            epochs: 1,
            lasso: 1e-8,
            learning_rate: 1.0,
        },
        weights: vec![(0, 0.5)],
    };
    let (i, ips) = select_candidate(std::slice::from_ref(&cand), PolicyMode::Deterministic, &validate).unwrap();
    assert_eq!(i, 0);
    assert!(ips > 0.0);
    assert!(matches!(
        select_candidate(&[], PolicyMode::Deterministic, &validate),
        Err(LearnerError::NoCandidates)
    ));
}

#[test]
fn selection_ties_go_to_the_earlier_candidate() {
    let world = arm_world();
    let validate = PreparedLog::new(&arm_log(&world, 2000, 1.0, 3), &world.featurizer, 1.0).unwrap();
    let cand = |epochs| Candidate {
        hyperparams: Hyperparams::Sgd {
            epochs,
            lasso: 1e-8,
            learning_rate: 1.0,
        },
        weights: vec![(1, 0.5)],
    };
    let (i, _) = select_candidate(&[cand(1), cand(2)], PolicyMode::Stochastic, &validate).unwrap();
    assert_eq!(i, 0);
}

#[test]
fn random_control_variate_covers_one() {
    let world = arm_world();
    let mut covered = 0;
    for seed in 0..40 {
        let log = arm_log(&world, 8_000, 0.5, 1000 + seed);
        let row = reference_row("random", &UniformPolicy, &log, 0.5, Z_99).unwrap();
        if row.report.unwrap().ci_c_hat.contains(1.0) {
            covered += 1;
        }
    }
    assert!(covered >= 38, "{covered}");
}

#[test]
fn poem_training_is_deterministic() {
    let log = feature_log(12, 3000, 0.5);
    let data = PreparedLog::new(&log, &Featurizer::with_bits(12), 0.5).unwrap();
    let a = train_poem(&data, &small_grid(), 8).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, train_poem(&data, &small_grid(), 8).unwrap());
    assert_ne!(a, train_poem(&data, &small_grid(), 9).unwrap());
}

#[test]
fn grid_rejects_bad_values() {
    let mut g = small_grid();
    g.learning_rates.clear();
    assert!(g.validate().is_err());
    let mut g = small_grid();
    g.poem_variance_reg = vec![0.0];
    assert!(g.validate().is_err());
    let mut g = small_grid();
    g.poem_clip = vec![-1.0];
    assert!(g.validate().is_err());
    assert!(small_grid().validate().is_ok());
    assert_eq!(small_grid().sgd_points().len(), 4);
}

#[test]
fn multi_slot_logs_are_rejected() {
    let mut log = feature_log(1, 50, 1.0);
    log[3].nb_slots = 2;
    assert!(matches!(
        PreparedLog::new(&log, &Featurizer::with_bits(8), 1.0),
        Err(LearnerError::MultiSlot { .. })
    ));
}

#[test]
fn clickless_log_reports_missing_learners() {
    let world = FixedArmWorld::new(vec![0.0, 0.0, 0.0], vec![0.4, 0.3, 0.3]).unwrap();
    let log = arm_log(&world, 600, 1.0, 2);
    let mut cfg = BenchmarkConfig::new(2);
    cfg.grid = small_grid();
    cfg.featurizer = world.featurizer.clone();
    let report = run_benchmark(&log, 1.0, &world.logging_policy(), &cfg).unwrap();
    assert_eq!(report.rows.len(), 6);
    for m in ["ips", "poem"] {
        let row = report.row(m).unwrap();
        assert!(row.report.is_none() && row.note.is_some(), "{m}");
        assert!(report.policy(m).is_none());
    }
    assert!(benchmark_tsv(&report.rows).contains("poem\t-\tNA\tNA"));
}
