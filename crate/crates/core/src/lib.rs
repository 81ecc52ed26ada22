//! Batch learning from logged bandit feedback on ranked banner impressions:
//! a propensity-logged data simulator, counterfactual estimators with
//! sub-sampling correction, and linear off-policy learners.

pub mod cli;
pub mod estimators;
pub mod kv;
pub mod learners;
pub mod logformat;
pub mod numeric;
pub mod policies;
pub mod simulator;
