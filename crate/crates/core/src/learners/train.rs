use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::data::PreparedLog;
use super::grid::{HyperGrid, Hyperparams};
use super::objectives::{
    dro_values, ips_values, oaa_weights, OaaObjective, PoemObjective, RegressionObjective,
};
use super::optimizer::{AdaGrad, GradientBuffer};
use super::LearnerError;
use crate::policies::{dot, SparseVec};

/// Clicked impressions per POEM minibatch.
pub const POEM_BATCH: usize = 16;

/// Weights after some epochs of one grid point, stored sparsely.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub hyperparams: Hyperparams,
    pub weights: Vec<(u32, f64)>,
}

/// `None` once the weights stop being finite. All-zero weights yield an
/// empty snapshot, which callers skip: such a scorer ties every candidate and
/// would pick the logged product by index alone.
fn snapshot(w: &[f64]) -> Option<Vec<(u32, f64)>> {
    let mut out = Vec::new();
    for (i, &x) in w.iter().enumerate() {
        if !x.is_finite() {
            return None;
        }
        if x != 0.0 {
            out.push((i as u32, x));
        }
    }
    Some(out)
}

fn check_train(data: &PreparedLog, need_clicks: bool) -> Result<(), LearnerError> {
    if data.kept() == 0 {
        return Err(LearnerError::EmptyTrain);
    }
    if need_clicks && data.clicked() == 0 {
        return Err(LearnerError::NoRewards);
    }
    Ok(())
}

/// Runs AdaGrad with a Lasso penalty for every `(lasso, learning rate)` grid
/// point, one shuffled pass over the examples per epoch. `example_gradient`
/// appends one example's loss gradient times the given scale.
fn sgd_runs<F>(
    data: &PreparedLog,
    grid: &HyperGrid,
    seed: u64,
    example_gradient: F,
) -> Result<Vec<Candidate>, LearnerError>
where
    F: Fn(usize, &[f64], f64, &mut SparseVec) + Sync,
{
    grid.validate()?;
    let dim = data.dimension();
    let n = data.kept();
    // per-example gradients estimate the N̂-normalized total
    let scale = n as f64 / data.n_hat();
    let runs: Vec<Vec<Candidate>> = grid
        .sgd_points()
        .par_iter()
        .map(|&(lasso, learning_rate)| {
            let mut w = vec![0.0; dim];
            let mut opt = AdaGrad::new(learning_rate, dim);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut order: Vec<usize> = (0..n).collect();
            let mut buf = SparseVec::new();
            let mut merger = GradientBuffer::new(dim);
            let mut out = Vec::new();
            for epochs in 1..=grid.max_epochs {
                order.shuffle(&mut rng);
                for &i in &order {
                    buf.clear();
                    example_gradient(i, &w, scale, &mut buf);
                    if buf.is_empty() {
                        continue;
                    }
                    opt.step(&mut w, merger.merge(&buf), lasso, 0.0);
                }
                match snapshot(&w) {
                    None => break,
                    Some(s) if s.is_empty() => {}
                    Some(weights) => out.push(Candidate {
                        hyperparams: Hyperparams::Sgd {
                            epochs,
                            lasso,
                            learning_rate,
                        },
                        weights,
                    }),
                }
            }
            out
        })
        .collect();
    Ok(runs.into_iter().flatten().collect())
}

/// Lasso regression of the click on the displayed product's features.
pub fn train_regression(
    train: &PreparedLog,
    grid: &HyperGrid,
    seed: u64,
) -> Result<Vec<Candidate>, LearnerError> {
    check_train(train, false)?;
    let examples = train.examples();
    sgd_runs(train, grid, seed, |i, w, scale, out| {
        RegressionObjective::example_gradient(&examples[i], w, scale, out)
    })
}

/// Predicted click probability of every candidate under a regression model,
/// clamped to `[0, 1]`.
pub fn reward_predictions(data: &PreparedLog, weights: &[f64]) -> Vec<Vec<f64>> {
    data.examples()
        .par_iter()
        .map(|e| {
            e.candidates
                .iter()
                .map(|x| dot(weights, x).clamp(0.0, 1.0))
                .collect()
        })
        .collect()
}

pub fn ips_training_weights(train: &PreparedLog) -> Vec<Vec<(f64, f64)>> {
    train
        .examples()
        .iter()
        .map(|e| oaa_weights(&ips_values(e)))
        .collect()
}

/// `predictions[i][a]` is `r̂` for candidate `a` of example `i`.
pub fn dro_training_weights(
    train: &PreparedLog,
    predictions: &[Vec<f64>],
) -> Result<Vec<Vec<(f64, f64)>>, LearnerError> {
    if predictions.len() != train.kept() {
        return Err(LearnerError::Predictions {
            expected: train.kept(),
            found: predictions.len(),
        });
    }
    train
        .examples()
        .iter()
        .zip(predictions)
        .map(|(e, p)| {
            if p.len() != e.candidates.len() {
                return Err(LearnerError::Predictions {
                    expected: e.candidates.len(),
                    found: p.len(),
                });
            }
            Ok(oaa_weights(&dro_values(e, p)))
        })
        .collect()
}

fn oaa_runs(
    train: &PreparedLog,
    weights: &[Vec<(f64, f64)>],
    grid: &HyperGrid,
    seed: u64,
) -> Result<Vec<Candidate>, LearnerError> {
    let examples = train.examples();
    sgd_runs(train, grid, seed, |i, w, scale, out| {
        OaaObjective::example_gradient(&examples[i], &weights[i], w, scale, out)
    })
}

/// IPS reduced to importance-weighted one-against-all classification.
pub fn train_ips(
    train: &PreparedLog,
    grid: &HyperGrid,
    seed: u64,
) -> Result<Vec<Candidate>, LearnerError> {
    check_train(train, true)?;
    oaa_runs(train, &ips_training_weights(train), grid, seed)
}

/// Doubly robust values from the reward model `predictions`, reduced like
/// [`train_ips`].
pub fn train_dro(
    train: &PreparedLog,
    predictions: &[Vec<f64>],
    grid: &HyperGrid,
    seed: u64,
) -> Result<Vec<Candidate>, LearnerError> {
    check_train(train, false)?;
    let weights = dro_training_weights(train, predictions)?;
    oaa_runs(train, &weights, grid, seed)
}

/// Counterfactual risk minimization of a softmax policy. The variance
/// statistics are refreshed at the start of every epoch and held fixed for
/// its minibatches.
pub fn train_poem(
    train: &PreparedLog,
    grid: &HyperGrid,
    seed: u64,
) -> Result<Vec<Candidate>, LearnerError> {
    check_train(train, true)?;
    grid.validate()?;
    let dim = train.dimension();
    let examples = train.examples();
    let clicked: Vec<usize> = (0..examples.len()).filter(|&i| examples[i].clicked).collect();
    let runs: Vec<Vec<Candidate>> = grid
        .poem_points()
        .par_iter()
        .map(|&(variance_reg, l2, clip, learning_rate)| {
            let objective = PoemObjective {
                data: train,
                variance_reg,
                l2,
                clip,
            };
            let mut w = vec![0.0; dim];
            let mut opt = AdaGrad::new(learning_rate, dim);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut order = clicked.clone();
            let mut buf = SparseVec::new();
            let mut merger = GradientBuffer::new(dim);
            let mut out = Vec::new();
            for epochs in 1..=grid.max_epochs {
                let stats = objective.stats(&w);
                order.shuffle(&mut rng);
                for batch in order.chunks(POEM_BATCH) {
                    buf.clear();
                    // descend on the negated objective
                    let scale = -(clicked.len() as f64) / batch.len() as f64;
                    for &i in batch {
                        objective.example_gradient(&examples[i], &w, &stats, scale, &mut buf);
                    }
                    if buf.is_empty() {
                        continue;
                    }
                    opt.step(&mut w, merger.merge(&buf), 0.0, l2);
                }
                match snapshot(&w) {
                    None => break,
                    Some(s) if s.is_empty() => {}
                    Some(weights) => out.push(Candidate {
                        hyperparams: Hyperparams::Poem {
                            epochs,
                            learning_rate,
                            variance_reg,
                            l2,
                            clip,
                        },
                        weights,
                    }),
                }
            }
            out
        })
        .collect();
    Ok(runs.into_iter().flatten().collect())
}
