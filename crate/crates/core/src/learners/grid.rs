use std::fmt;

use serde::{Deserialize, Serialize};

use super::LearnerError;
use crate::kv::KvMap;

/// Hyper-parameters searched by the learners. Every SGD run is snapshotted
/// after each epoch in `1..=max_epochs`, so the epoch count is searched
/// without retraining.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub max_epochs: usize,
    pub lasso: Vec<f64>,
    pub learning_rates: Vec<f64>,
    pub poem_variance_reg: Vec<f64>,
    pub poem_l2: Vec<f64>,
    pub poem_clip: Vec<f64>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self {
            max_epochs: 40,
            lasso: vec![1e-8, 1e-7, 1e-6, 1e-5, 1e-4],
            learning_rates: vec![0.1, 1.0, 10.0],
            poem_variance_reg: vec![1e-4, 1e-3, 1e-2, 1e-1],
            poem_l2: vec![1e-6, 1e-4],
            poem_clip: vec![10.0, 100.0, 1000.0],
        }
    }
}

impl HyperGrid {
    pub fn validate(&self) -> Result<(), LearnerError> {
        let bad = |m: &str| Err(LearnerError::Grid(m.to_string()));
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1");
        }
        let lists: [(&str, &Vec<f64>); 5] = [
            ("lasso", &self.lasso),
            ("learning_rates", &self.learning_rates),
            ("poem_variance_reg", &self.poem_variance_reg),
            ("poem_l2", &self.poem_l2),
            ("poem_clip", &self.poem_clip),
        ];
        for (name, list) in lists {
            if list.is_empty() {
                return bad(&format!("{name} is empty"));
            }
            if list.iter().any(|x| x.is_nan() || *x < 0.0) {
                return bad(&format!("{name} has a negative or NaN entry"));
            }
        }
        if self.learning_rates.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            return bad("learning rates must be positive and finite");
        }
        if self.poem_clip.iter().any(|x| *x <= 0.0) {
            return bad("poem_clip entries must be positive");
        }
        if self.poem_variance_reg.iter().any(|x| *x <= 0.0) {
            return bad("poem_variance_reg entries must be positive");
        }
        if self.lasso.iter().chain(&self.poem_variance_reg).chain(&self.poem_l2).any(|x| x.is_infinite()) {
            return bad("regularization strengths must be finite");
        }
        Ok(())
    }

    /// `(lasso, learning rate)` pairs in search order.
    pub fn sgd_points(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for &l in &self.lasso {
            for &r in &self.learning_rates {
                out.push((l, r));
            }
        }
        out
    }

    /// `(variance reg, l2, clip, learning rate)` tuples in search order.
    pub fn poem_points(&self) -> Vec<(f64, f64, f64, f64)> {
        let mut out = Vec::new();
        for &v in &self.poem_variance_reg {
            for &l2 in &self.poem_l2 {
                for &c in &self.poem_clip {
                    for &r in &self.learning_rates {
                        out.push((v, l2, c, r));
                    }
                }
            }
        }
        out
    }

    /// Reads any of the grid keys present in `kv`; the rest keep defaults.
    pub fn from_kv(kv: &KvMap) -> Result<Self, LearnerError> {
        let d = Self::default();
        let list = |key: &str, default: Vec<f64>| -> Result<Vec<f64>, LearnerError> {
            Ok(kv.get_list(key)?.unwrap_or(default))
        };
        let grid = Self {
            max_epochs: kv.get_or("max_epochs", d.max_epochs)?,
            lasso: list("lasso", d.lasso)?,
            learning_rates: list("learning_rates", d.learning_rates)?,
            poem_variance_reg: list("poem_variance_reg", d.poem_variance_reg)?,
            poem_l2: list("poem_l2", d.poem_l2)?,
            poem_clip: list("poem_clip", d.poem_clip)?,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn to_kv(&self, kv: &mut KvMap) {
        let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        kv.set("max_epochs", self.max_epochs);
        kv.set("lasso", join(&self.lasso));
        kv.set("learning_rates", join(&self.learning_rates));
        kv.set("poem_variance_reg", join(&self.poem_variance_reg));
        kv.set("poem_l2", join(&self.poem_l2));
        kv.set("poem_clip", join(&self.poem_clip));
    }
}

/// One point of the search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Hyperparams {
    Sgd {
        epochs: usize,
        lasso: f64,
        learning_rate: f64,
    },
    Poem {
        epochs: usize,
        learning_rate: f64,
        variance_reg: f64,
        l2: f64,
        clip: f64,
    },
}

impl Hyperparams {
    pub fn epochs(&self) -> usize {
        match self {
            Hyperparams::Sgd { epochs, .. } | Hyperparams::Poem { epochs, .. } => *epochs,
        }
    }
}

impl fmt::Display for Hyperparams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hyperparams::Sgd {
                epochs,
                lasso,
                learning_rate,
            } => write!(f, "epochs={epochs},lasso={lasso:e},lr={learning_rate}"),
            Hyperparams::Poem {
                epochs,
                learning_rate,
                variance_reg,
                l2,
                clip,
            } => write!(
                f,
                "epochs={epochs},var={variance_reg:e},l2={l2:e},clip={clip},lr={learning_rate}"
            ),
        }
    }
}
