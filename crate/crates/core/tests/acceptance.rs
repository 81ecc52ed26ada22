//! End-to-end acceptance checks on the synthetic world. Runs every criterion
//! in order and prints one PASS/FAIL line for each.

use std::io::Write;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use blbf::estimators::{
    default_epsilon_grid, diagnostic_sweep, evaluate_policy, logged_probabilities, propensity_stats,
    sweep_rows, Z_99,
};
use blbf::learners::{
    dro_training_weights, ips_training_weights, run_benchmark, BenchmarkConfig, OaaObjective,
    PoemObjective, PreparedLog, RegressionObjective,
};
use blbf::logformat::{ImpressionReader, ImpressionRecord, LogWriter, ParseMode};
use blbf::policies::{EpsilonMixturePolicy, Featurizer, Policy, UniformPolicy};
use blbf::simulator::{
    for_each_ranking, propensity_of, sample_ranking, true_policy_value, FnSink, World, WorldConfig,
};

struct Outcome {
    pass: bool,
    detail: String,
}

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Option<Duration>,
    /// A miss is reported but does not fail the run.
    known_gap: bool,
    run: fn() -> Outcome,
}

fn world(cfg: WorldConfig) -> World {
    World::new(cfg).expect("valid world")
}

fn small_pool_world(seed: u64, impressions: u64) -> WorldConfig {
    let mut cfg = WorldConfig::new(seed);
    cfg.model_seed = 1000;
    cfg.pool_size_min = 8;
    cfg.pool_size_max = 10;
    cfg.impression_count = impressions;
    cfg
}

fn format_fidelity() -> Outcome {
    let mut cfg = WorldConfig::new(1);
    cfg.nb_slots = vec![1, 2, 3, 6];
    cfg.impression_count = 10_000;
    cfg.subsample_keep_prob = 1.0;
    let (log, _) = world(cfg).generate_vec().unwrap();

    let write = |records: &[ImpressionRecord]| {
        let mut w = LogWriter::new(Vec::new(), false);
        for r in records {
            w.write(r).unwrap();
        }
        w.finish().unwrap()
    };
    let first = write(&log);
    let parsed: Vec<ImpressionRecord> = ImpressionReader::new(&first[..], ParseMode::Strict)
        .collect::<Result<_, _>>()
        .unwrap();
    let second = write(&parsed);
    Outcome {
        pass: log.len() == 10_000 && parsed == log && first == second,
        detail: format!("{} impressions, {} bytes, identical={}", parsed.len(), first.len(), first == second),
    }
}

fn plackett_luce() -> Outcome {
    let scores = [1.0, 2.0, 3.0];
    let mut exact = Vec::new();
    for_each_ranking(3, 2, |y| exact.push((y.to_vec(), propensity_of(&scores, y).unwrap())));
    let total: f64 = exact.iter().map(|(_, p)| p).sum();

    let draws = 100_000;
    let mut counts = vec![0usize; exact.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..draws {
        let (y, _) = sample_ranking(&scores, 2, &mut rng).unwrap();
        let i = exact.iter().position(|(r, _)| *r == y).unwrap();
        counts[i] += 1;
    }
    let l1: f64 = exact
        .iter()
        .zip(&counts)
        .map(|((_, p), &c)| (c as f64 / draws as f64 - p).abs())
        .sum();
    Outcome {
        pass: exact.len() == 6 && (total - 1.0).abs() <= 1e-12 && l1 <= 0.02,
        detail: format!("{} rankings, sum-1={:.1e}, L1={l1:.4}", exact.len(), total - 1.0),
    }
}

fn control_variate_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 1..=10 {
        let mut cfg = WorldConfig::new(seed);
        cfg.nb_slots = vec![1, 2, 3, 4];
        cfg.impression_count = 20_000;
        let w = world(cfg);
        let (log, s) = w.generate_vec().unwrap();
        let replica = w.model.logging_policy().unwrap();
        let r = evaluate_policy(&log, &replica, s.keep_prob).unwrap().report(Z_99).unwrap();
        worst = worst.max((r.c_hat - 1.0).abs());
    }
    Outcome {
        pass: worst <= 1e-9,
        detail: format!("max |C-1| over 10 seeds = {worst:.2e}"),
    }
}

fn subsampling_correction() -> Outcome {
    let n = 200_000u64;
    let (mut n_ok, mut ips_ok) = (0, 0);
    let mut worst_rel: f64 = 0.0;
    for seed in 1..=10 {
        let mut cfg = WorldConfig::new(seed);
        cfg.impression_count = n;
        cfg.subsample_keep_prob = 0.1;
        let sub_world = world(cfg.clone());
        let (sub, _) = sub_world.generate_vec().unwrap();
        let policy = UniformPolicy;
        let sub_report = evaluate_policy(&sub, &policy, 0.1).unwrap().report(Z_99).unwrap();

        cfg.subsample_keep_prob = 1.0;
        let mut full = blbf::estimators::EstimatorAccumulator::new(1.0).unwrap();
        world(cfg)
            .generate(&mut FnSink(|r: ImpressionRecord| {
                full.accumulate(&r, &policy).unwrap();
                Ok(())
            }))
            .unwrap();
        let full_report = full.report(Z_99).unwrap();

        let rel = (sub_report.n_hat - n as f64).abs() / n as f64;
        worst_rel = worst_rel.max(rel);
        n_ok += usize::from(rel <= 0.02);
        let gap = (sub_report.ips - full_report.ips).abs();
        ips_ok += usize::from(gap < sub_report.ips_half_width() + full_report.ips_half_width());
    }
    Outcome {
        pass: n_ok == 10 && ips_ok >= 9,
        detail: format!("N-hat within 2%: {n_ok}/10 (worst {:.2}%), IPS agreement: {ips_ok}/10", 100.0 * worst_rel),
    }
}

fn oracle_consistency() -> Outcome {
    let reference = world(small_pool_world(1, 200_000));
    let base: Arc<dyn Policy> = Arc::new(reference.model.logging_policy().unwrap());
    let contexts = reference.oracle_contexts(100_000);
    let eps = [0.0, 0.0625, 0.25];
    let truths: Vec<f64> = eps
        .iter()
        .map(|&e| {
            let p = EpsilonMixturePolicy::new(e, base.clone()).unwrap();
            true_policy_value(&p, &reference.model, &contexts).unwrap()
        })
        .collect();
    let mut covered = [0usize; 3];
    for rep in 0..30 {
        let w = world(small_pool_world(10 + rep, 200_000));
        let (log, s) = w.generate_vec().unwrap();
        let probs = logged_probabilities(&log, base.as_ref()).unwrap();
        let rows = sweep_rows(&probs, &eps, s.keep_prob, Z_99).unwrap();
        for (i, r) in rows.iter().enumerate() {
            covered[i] += usize::from((r.report.snips - truths[i]).abs() <= r.report.snips_half_width());
        }
    }
    Outcome {
        pass: covered.iter().all(|&c| c >= 27),
        detail: format!("SNIPS within half-width for eps 0, 1/16, 1/4: {covered:?} of 30"),
    }
}

fn trend_reproduction() -> Outcome {
    let mut cfg = WorldConfig::new(100);
    cfg.model_seed = 7;
    cfg.nb_slots = (1..=6).collect();
    cfg.pool_size_min = 12;
    cfg.pool_size_max = 14;
    cfg.impression_count = 60_000;
    let (log, s) = world(cfg).generate_vec().unwrap();
    let stats = propensity_stats(&log, s.keep_prob);
    let max_inv: Vec<f64> = stats.iter().map(|p| p.max_inv_propensity).collect();
    let grows = stats.len() == 6 && max_inv.windows(2).all(|w| w[1] > w[0]);

    let seeds = 50;
    let mut monotone = 0;
    let mut c_uniform = Vec::new();
    for seed in 0..seeds {
        let mut cfg = WorldConfig::new(100 + seed);
        cfg.model_seed = 7;
        cfg.nb_slots = vec![6];
        cfg.pool_size_min = 12;
        cfg.pool_size_max = 14;
        cfg.logging_correlation = -0.8;
        cfg.impression_count = 10_000;
        let w = world(cfg);
        let (log, s) = w.generate_vec().unwrap();
        let replica = w.model.logging_policy().unwrap();
        let rows = diagnostic_sweep(&log, &replica, &default_epsilon_grid(), s.keep_prob, Z_99).unwrap();
        let hw: Vec<f64> = rows.iter().map(|r| r.report.ips_half_width()).collect();
        monotone += usize::from(hw.windows(2).all(|w| w[1] >= w[0]));
        c_uniform.push(rows.last().unwrap().report.c_hat);
    }
    c_uniform.sort_by(f64::total_cmp);
    let median = (c_uniform[24] + c_uniform[25]) / 2.0;
    let hw_ok = monotone * 10 >= seeds as usize * 9;
    Outcome {
        pass: grows && hw_ok && median < 1.0,
        detail: format!(
            "(a) max 1/q by slots {:?} grows={grows}; (b) half-width non-decreasing in {monotone}/{seeds} seeds; (c) median C(eps=1)={median:.3}",
            max_inv.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>()
        ),
    }
}

fn interval_coverage() -> Outcome {
    let reference = world(small_pool_world(1, 20_000));
    let base: Arc<dyn Policy> = Arc::new(reference.model.logging_policy().unwrap());
    let target = EpsilonMixturePolicy::new(0.0625, base.clone()).unwrap();
    let truth = true_policy_value(&target, &reference.model, &reference.oracle_contexts(100_000)).unwrap();
    let reps = 200;
    let (mut ips, mut snips) = (0, 0);
    for rep in 0..reps {
        let w = world(small_pool_world(5000 + rep, 20_000));
        let (log, s) = w.generate_vec().unwrap();
        let r = evaluate_policy(&log, &target, s.keep_prob).unwrap().report(Z_99).unwrap();
        ips += usize::from(r.ci_ips.contains(truth));
        snips += usize::from(r.ci_snips.contains(truth));
    }
    let need = reps as usize * 95 / 100;
    Outcome {
        pass: ips >= need && snips >= need,
        detail: format!("IPS {ips}/{reps}, SNIPS {snips}/{reps} cover truth {truth:.5}"),
    }
}

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

fn fixture(impressions: u64, keep: f64) -> PreparedLog {
    let mut cfg = WorldConfig::new(11);
    cfg.model_seed = 5;
    cfg.pool_size_min = 4;
    cfg.pool_size_max = 6;
    cfg.impression_count = impressions;
    cfg.subsample_keep_prob = keep;
    cfg.base_click_rate = 0.2;
    let (log, _) = world(cfg).generate_vec().unwrap();
    PreparedLog::new(&log, &Featurizer::with_bits(10), keep).unwrap()
}

fn gradient_checks() -> Outcome {
    let data = fixture(1500, 0.3);
    let mut coords: Vec<usize> = data
        .examples()
        .iter()
        .flat_map(|e| e.candidates.iter().flatten().map(|&(i, _)| i as usize))
        .collect();
    coords.sort_unstable();
    coords.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut point = || -> Vec<f64> {
        (0..data.dimension())
            .map(|_| 0.5 * Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect()
    };

    let regression = RegressionObjective { data: &data, lasso: 1e-4 };
    let weights = ips_training_weights(&data);
    let ips = OaaObjective { data: &data, weights: &weights, lasso: 1e-6 };
    let poem = PoemObjective { data: &data, variance_reg: 0.1, l2: 1e-3, clip: 1e3 };
    let mut worst = [0.0f64; 3];
    for _ in 0..5 {
        let w = point();
        worst[0] = worst[0].max(fd_error(|x| regression.value(x), &regression.gradient(&w), &w, &coords));
        worst[1] = worst[1].max(fd_error(|x| ips.value(x), &ips.gradient(&w), &w, &coords));
        worst[2] = worst[2].max(fd_error(|x| poem.value(x), &poem.gradient(&w), &w, &coords));
    }
    Outcome {
        pass: worst.iter().all(|&e| e <= 1e-4),
        detail: format!(
            "max relative error: regression {:.1e}, IPS {:.1e}, POEM {:.1e}",
            worst[0], worst[1], worst[2]
        ),
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn learner_ordering() -> Outcome {
    let methods = ["random", "regression", "ips", "dro", "poem"];
    let mut snips: Vec<Vec<f64>> = vec![Vec::new(); methods.len()];
    let mut c_misses = Vec::new();
    for seed in 1..=5 {
        let mut cfg = WorldConfig::new(seed);
        cfg.impression_count = 200_000;
        let w = world(cfg);
        let (log, s) = w.generate_vec().unwrap();
        let replica = w.model.logging_policy().unwrap();
        let report = run_benchmark(&log, s.keep_prob, &replica, &BenchmarkConfig::new(seed)).unwrap();
        for (i, m) in methods.iter().enumerate() {
            let r = report.row(m).and_then(|row| row.report.as_ref());
            let r = r.unwrap_or_else(|| panic!("no test estimate for {m}"));
            snips[i].push(r.snips);
            if i >= 1 && !r.ci_c_hat.contains(1.0) {
                c_misses.push(format!("{m}@{seed}: {:.3}+-{:.3}", r.c_hat, r.c_hat_half_width()));
            }
        }
    }
    let med: Vec<f64> = snips.into_iter().map(median).collect();
    let [random, regression, ips, dro, poem] = med[..] else { unreachable!() };
    let best_offpolicy = ips.max(dro);
    let ordered = poem >= best_offpolicy && best_offpolicy >= regression && regression >= random;
    Outcome {
        pass: ordered && c_misses.is_empty(),
        detail: format!(
            "median SNIPS x1e4: random {:.0}, regression {:.0}, ips {:.0}, dro {:.0}, poem {:.0}; C outside CI: {}",
            random * 1e4,
            regression * 1e4,
            ips * 1e4,
            dro * 1e4,
            poem * 1e4,
            if c_misses.is_empty() { "none".to_string() } else { c_misses.join(", ") }
        ),
    }
}

fn dro_degeneracy() -> Outcome {
    let data = fixture(1000, 1.0);
    let zeros: Vec<Vec<f64>> = data.examples().iter().map(|e| vec![0.0; e.candidates.len()]).collect();
    let ips = ips_training_weights(&data);
    let dro = dro_training_weights(&data, &zeros).unwrap();
    let bits = |w: &[Vec<(f64, f64)>]| -> Vec<(u64, u64)> {
        w.iter().flatten().map(|&(p, n)| (p.to_bits(), n.to_bits())).collect()
    };
    let equal = bits(&ips) == bits(&dro);
    Outcome {
        pass: data.kept() == 1000 && equal,
        detail: format!("{} examples, bitwise equal={equal}", data.kept()),
    }
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { id: 1, name: "format round trip", budget: Some(Duration::from_secs(10)), known_gap: false, run: format_fidelity },
        Criterion { id: 2, name: "Plackett-Luce propensities", budget: Some(Duration::from_secs(5)), known_gap: false, run: plackett_luce },
        Criterion { id: 3, name: "control variate of the logging policy", budget: None, known_gap: false, run: control_variate_identity },
        Criterion { id: 4, name: "sub-sampling correction", budget: None, known_gap: false, run: subsampling_correction },
        Criterion { id: 5, name: "oracle consistency", budget: Some(Duration::from_secs(300)), known_gap: false, run: oracle_consistency },
        Criterion { id: 6, name: "propensity and variance trends", budget: Some(Duration::from_secs(600)), known_gap: false, run: trend_reproduction },
        Criterion { id: 7, name: "interval coverage", budget: Some(Duration::from_secs(600)), known_gap: false, run: interval_coverage },
        Criterion { id: 8, name: "gradient checks", budget: None, known_gap: false, run: gradient_checks },
        Criterion { id: 9, name: "learner ordering", budget: Some(Duration::from_secs(1200)), known_gap: true, run: learner_ordering },
        Criterion { id: 10, name: "DRO with a null reward model", budget: None, known_gap: false, run: dro_degeneracy },
    ];
    let only: Vec<u32> = std::env::var("BLBF_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect())
        .unwrap_or_default();

    let mut failed = 0;
    let mut out = std::io::stdout();
    for c in criteria.iter().filter(|c| only.is_empty() || only.contains(&c.id)) {
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let in_time = c.budget.is_none_or(|b| elapsed <= b);
        let pass = outcome.pass && in_time;
        let status = match (pass, c.known_gap) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known gap)",
            (false, false) => "FAIL",
        };
        if !pass && !c.known_gap {
            failed += 1;
        }
        let budget = c.budget.map_or(String::new(), |b| format!(" / {}s", b.as_secs()));
        writeln!(out, "criterion {:>2} {status}: {} [{:.1}s{budget}] {}", c.id, c.name, elapsed.as_secs_f64(), outcome.detail).unwrap();
        out.flush().unwrap();
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
