use rayon::prelude::*;

use super::model::{expected_reward, ClickModel};
use super::plackett_luce::for_each_ranking;
use super::SimError;
use crate::numeric::{falling_factorial, CompensatedSum};
use crate::policies::{Context, Policy};

/// Largest number of rankings the oracle enumerates for one context.
pub const ENUMERATION_CAP: f64 = 1e6;

/// `Σ_y π(y|x) E[δ | x, y]` by exhaustive enumeration.
pub fn context_value(
    policy: &dyn Policy,
    model: &dyn ClickModel,
    ctx: &dyn Context,
) -> Result<f64, SimError> {
    let m = ctx.candidate_count();
    let k = ctx.slots();
    let count = falling_factorial(m, k);
    if count > ENUMERATION_CAP {
        return Err(SimError::EnumerationCap { count });
    }
    let bound = policy.bind(ctx);
    let attractiveness = model.attractiveness(ctx);
    let bias = model.position_bias();
    let mut total = CompensatedSum::default();
    for_each_ranking(m, k, |y| {
        let p = bound.probability_unchecked(y);
        if p != 0.0 {
            total.add(p * expected_reward(&attractiveness, bias, y));
        }
    });
    Ok(total.value())
}

/// Exact policy value averaged over `contexts`. Contexts are evaluated in
/// parallel and reduced in their given order, so the result does not depend
/// on the thread count.
pub fn true_policy_value<C: Context + Sync>(
    policy: &dyn Policy,
    model: &dyn ClickModel,
    contexts: &[C],
) -> Result<f64, SimError> {
    if contexts.is_empty() {
        return Err(SimError::NoContexts);
    }
    let values = contexts
        .par_iter()
        .map(|c| context_value(policy, model, c))
        .collect::<Result<Vec<f64>, SimError>>()?;
    let total: CompensatedSum = values.into_iter().collect();
    Ok(total.value() / contexts.len() as f64)
}
