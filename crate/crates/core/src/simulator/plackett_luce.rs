//! Plackett-Luce sampling without replacement and the exact probability of a
//! ranking under it.

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RankingError {
    #[error("ranking length {k} exceeds pool size {pool}")]
    TooManySlots { k: usize, pool: usize },
    #[error("score {value} at index {index} is not positive")]
    NonPositiveScore { index: usize, value: f64 },
    #[error("candidate index {index} out of range for pool size {pool}")]
    OutOfRange { index: usize, pool: usize },
    #[error("candidate index {index} appears twice in the ranking")]
    Duplicate { index: usize },
    #[error("ranking has length {found}, expected {expected}")]
    WrongLength { expected: usize, found: usize },
}

fn check_scores(scores: &[f64]) -> Result<(), RankingError> {
    for (index, &value) in scores.iter().enumerate() {
        if !(value > 0.0 && value.is_finite()) {
            return Err(RankingError::NonPositiveScore { index, value });
        }
    }
    Ok(())
}

/// Checks that `ranking` holds distinct indices into a pool of `pool`.
pub fn check_ranking(ranking: &[usize], pool: usize) -> Result<(), RankingError> {
    if ranking.len() > pool {
        return Err(RankingError::TooManySlots {
            k: ranking.len(),
            pool,
        });
    }
    for (i, &index) in ranking.iter().enumerate() {
        if index >= pool {
            return Err(RankingError::OutOfRange { index, pool });
        }
        if ranking[..i].contains(&index) {
            return Err(RankingError::Duplicate { index });
        }
    }
    Ok(())
}

/// Sum of the scores not yet used, accumulated in index order. Both the
/// sampler and [`propensity_of`] go through here so their products agree
/// bit for bit.
fn remaining_mass(scores: &[f64], used: &[bool]) -> f64 {
    scores
        .iter()
        .zip(used)
        .filter(|(_, &u)| !u)
        .map(|(s, _)| *s)
        .sum()
}

/// Draws `k` distinct indices slot by slot, each proportional to its score
/// among the indices still available. Returns the ranking and its probability.
pub fn sample_ranking<R: Rng + ?Sized>(
    scores: &[f64],
    k: usize,
    rng: &mut R,
) -> Result<(Vec<usize>, f64), RankingError> {
    if k > scores.len() {
        return Err(RankingError::TooManySlots {
            k,
            pool: scores.len(),
        });
    }
    check_scores(scores)?;
    let mut used = vec![false; scores.len()];
    let mut ranking = Vec::with_capacity(k);
    let mut propensity = 1.0;
    for _ in 0..k {
        let total = remaining_mass(scores, &used);
        let target = rng.random::<f64>() * total;
        let mut cumulative = 0.0;
        let mut chosen = None;
        for (i, &s) in scores.iter().enumerate() {
            if used[i] {
                continue;
            }
            chosen = Some(i);
            cumulative += s;
            if cumulative > target {
                break;
            }
        }
        let chosen = chosen.expect("k <= pool size leaves a candidate");
        used[chosen] = true;
        ranking.push(chosen);
        propensity *= scores[chosen] / total;
    }
    Ok((ranking, propensity))
}

/// Probability of `ranking` under Plackett-Luce sampling with `scores`.
pub fn propensity_of(scores: &[f64], ranking: &[usize]) -> Result<f64, RankingError> {
    check_scores(scores)?;
    check_ranking(ranking, scores.len())?;
    let mut used = vec![false; scores.len()];
    let mut propensity = 1.0;
    for &i in ranking {
        let total = remaining_mass(scores, &used);
        propensity *= scores[i] / total;
        used[i] = true;
    }
    Ok(propensity)
}

/// Visits every ordered selection of `k` out of `m` indices in lexicographic
/// order.
pub fn for_each_ranking(m: usize, k: usize, mut visit: impl FnMut(&[usize])) {
    if k > m {
        return;
    }
    let mut current = Vec::with_capacity(k);
    let mut used = vec![false; m];
    fn recurse(
        m: usize,
        k: usize,
        current: &mut Vec<usize>,
        used: &mut [bool],
        visit: &mut dyn FnMut(&[usize]),
    ) {
        if current.len() == k {
            visit(current);
            return;
        }
        for i in 0..m {
            if !used[i] {
                used[i] = true;
                current.push(i);
                recurse(m, k, current, used, visit);
                current.pop();
                used[i] = false;
            }
        }
    }
    recurse(m, k, &mut current, &mut used, &mut visit);
}
