//! Training objectives with exact gradients. Each is normalized by `N̂`, so
//! sub-sampled unclicked impressions count `1/keep_prob` times.

use super::data::{softmax, Example, PreparedLog};
use crate::policies::{dot, SparseVec};

fn l1(w: &[f64]) -> f64 {
    w.iter().map(|x| x.abs()).sum()
}

fn add_scaled(out: &mut [f64], x: &[(u32, f64)], scale: f64) {
    for &(i, v) in x {
        out[i as usize] += scale * v;
    }
}

fn push_scaled(out: &mut SparseVec, x: &[(u32, f64)], scale: f64) {
    out.extend(x.iter().map(|&(i, v)| (i, scale * v)));
}

/// `log(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Weighted squared error of the displayed product's predicted click plus a
/// Lasso penalty:
/// `Σ v_i (w·x_i - δ_i)² / (2 N̂) + λ ‖w‖₁`.
pub struct RegressionObjective<'a> {
    pub data: &'a PreparedLog,
    pub lasso: f64,
}

impl RegressionObjective<'_> {
    fn residual(e: &Example, w: &[f64]) -> f64 {
        dot(w, &e.candidates[0]) - e.reward()
    }

    pub fn value(&self, w: &[f64]) -> f64 {
        let n = self.data.n_hat();
        let loss: f64 = self
            .data
            .examples()
            .iter()
            .map(|e| e.inv_keep * Self::residual(e, w).powi(2))
            .sum();
        loss / (2.0 * n) + self.lasso * l1(w)
    }

    /// Gradient, using `sign(0) = 0` for the penalty.
    pub fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let n = self.data.n_hat();
        let mut g: Vec<f64> = w.iter().map(|x| self.lasso * sign(*x)).collect();
        for e in self.data.examples() {
            add_scaled(&mut g, &e.candidates[0], e.inv_keep * Self::residual(e, w) / n);
        }
        g
    }

    /// Smooth part of the loss gradient for one example, times `scale`.
    pub(crate) fn example_gradient(e: &Example, w: &[f64], scale: f64, out: &mut SparseVec) {
        let r = Self::residual(e, w);
        push_scaled(out, &e.candidates[0], scale * e.inv_keep * r);
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Per-candidate rewards for the IPS reduction: the logged product gets
/// `δ/q · 1/Pr(O=1|δ)`, the others 0.
pub fn ips_values(e: &Example) -> Vec<f64> {
    let mut v = vec![0.0; e.candidates.len()];
    v[0] = e.reward() / e.propensity * e.inv_keep;
    v
}

/// Doubly robust per-candidate values: `r̂(a)` everywhere plus the
/// importance-weighted residual `(δ - r̂(y))/q · 1/Pr(O=1|δ)` on the logged
/// product.
pub fn dro_values(e: &Example, predictions: &[f64]) -> Vec<f64> {
    let mut v = predictions.to_vec();
    v[0] += (e.reward() - predictions[0]) / e.propensity * e.inv_keep;
    v
}

/// Turns per-candidate values into `(positive, negative)` example weights
/// for one-against-all logistic classifiers.
///
/// Candidate `a` is a positive example with weight `max(v_a, 0)` and a
/// negative example with weight `max(-v_a, 0)` plus the positive value of
/// every other candidate. Under IPS values the logged product is a positive
/// with weight `δ/q · 1/Pr(O=1|δ)` and every other candidate a negative with
/// the same weight.
pub fn oaa_weights(values: &[f64]) -> Vec<(f64, f64)> {
    let mut total_pos = 0.0;
    for v in values {
        total_pos += v.max(0.0);
    }
    values
        .iter()
        .map(|v| {
            let pos = v.max(0.0);
            (pos, (-v).max(0.0) + (total_pos - pos))
        })
        .collect()
}

/// Weighted one-against-all logistic loss plus a Lasso penalty:
/// `Σ_i Σ_a [pos_ia log(1+e^{-s_ia}) + neg_ia log(1+e^{s_ia})] / N̂ + λ‖w‖₁`.
pub struct OaaObjective<'a> {
    pub data: &'a PreparedLog,
    /// Per example, one `(pos, neg)` pair per candidate.
    pub weights: &'a [Vec<(f64, f64)>],
    pub lasso: f64,
}

impl OaaObjective<'_> {
    pub fn value(&self, w: &[f64]) -> f64 {
        let n = self.data.n_hat();
        let mut loss = 0.0;
        for (e, ws) in self.data.examples().iter().zip(self.weights) {
            for (x, &(pos, neg)) in e.candidates.iter().zip(ws) {
                if pos == 0.0 && neg == 0.0 {
                    continue;
                }
                let s = dot(w, x);
                loss += pos * softplus(-s) + neg * softplus(s);
            }
        }
        loss / n + self.lasso * l1(w)
    }

    pub fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let n = self.data.n_hat();
        let mut g: Vec<f64> = w.iter().map(|x| self.lasso * sign(*x)).collect();
        let mut buf = SparseVec::new();
        for (e, ws) in self.data.examples().iter().zip(self.weights) {
            buf.clear();
            Self::example_gradient(e, ws, w, 1.0 / n, &mut buf);
            add_scaled(&mut g, &buf, 1.0);
        }
        g
    }

    pub(crate) fn example_gradient(
        e: &Example,
        weights: &[(f64, f64)],
        w: &[f64],
        scale: f64,
        out: &mut SparseVec,
    ) {
        for (x, &(pos, neg)) in e.candidates.iter().zip(weights) {
            if pos == 0.0 && neg == 0.0 {
                continue;
            }
            let s = dot(w, x);
            let d = -pos * crate::numeric::sigmoid(-s) + neg * crate::numeric::sigmoid(s);
            push_scaled(out, x, scale * d);
        }
    }
}

/// Mean and sample variance of the clipped per-impression rewards, treating
/// the log as `N̂` draws of which the unclicked ones are zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoemStats {
    pub mean: f64,
    pub variance: f64,
}

/// Counterfactual risk minimization objective, to be maximized:
/// `R̂(w) - λ_var · sqrt(V̂(w) / kept) - λ_L2 ‖w‖²`, where `R̂` and `V̂` are
/// the mean and variance of `δ · min(π_w(y|x)/q, clip)`.
pub struct PoemObjective<'a> {
    pub data: &'a PreparedLog,
    pub variance_reg: f64,
    pub l2: f64,
    pub clip: f64,
}

impl PoemObjective<'_> {
    /// Clipped reward and first-slot probabilities for a clicked example.
    fn reward(&self, e: &Example, w: &[f64]) -> (f64, Vec<f64>) {
        let p = softmax(&e.scores(w));
        let ratio = p[0] / e.propensity;
        (ratio.min(self.clip), p)
    }

    fn clicked(&self) -> impl Iterator<Item = &Example> {
        self.data.examples().iter().filter(|e| e.clicked)
    }

    pub fn stats(&self, w: &[f64]) -> PoemStats {
        let n = self.data.n_hat();
        let (mut s, mut s2) = (0.0, 0.0);
        for e in self.clicked() {
            let a = self.reward(e, w).0;
            s += a;
            s2 += a * a;
        }
        let mean = if n > 0.0 { s / n } else { 0.0 };
        let variance = if n > 1.0 {
            ((s2 - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        PoemStats { mean, variance }
    }

    fn penalty(&self, w: &[f64]) -> f64 {
        self.l2 * w.iter().map(|x| x * x).sum::<f64>()
    }

    fn kept(&self) -> f64 {
        self.data.kept() as f64
    }

    fn variance_active(&self, stats: &PoemStats) -> bool {
        self.variance_reg > 0.0 && stats.variance > 0.0
    }

    pub fn value(&self, w: &[f64]) -> f64 {
        let s = self.stats(w);
        s.mean - self.variance_reg * (s.variance / self.kept()).sqrt() - self.penalty(w)
    }

    /// Minorizer of [`Self::value`] that touches it at the weights where
    /// `stats` were computed: the square root is replaced by its tangent and
    /// the variance by squared deviations from the frozen mean.
    pub fn surrogate(&self, w: &[f64], stats: &PoemStats) -> f64 {
        let n = self.data.n_hat();
        let mut mean = 0.0;
        let mut dev = 0.0;
        let mut clicked = 0.0;
        for e in self.clicked() {
            let a = self.reward(e, w).0;
            mean += a;
            dev += (a - stats.mean).powi(2);
            clicked += 1.0;
        }
        mean /= n;
        let var_term = if self.variance_active(stats) {
            let c = n / (n - 1.0);
            let q = c * (dev + (n - clicked) * stats.mean * stats.mean) / n;
            let root = stats.variance.sqrt();
            root + (q - stats.variance) / (2.0 * root)
        } else {
            stats.variance.sqrt()
        };
        mean - self.variance_reg * var_term / self.kept().sqrt() - self.penalty(w)
    }

    /// `∂ objective / ∂ a_i` at frozen statistics.
    fn coefficient(&self, a: f64, stats: &PoemStats) -> f64 {
        let n = self.data.n_hat();
        let mut c = 1.0 / n;
        if self.variance_active(stats) {
            let scale = n / (n - 1.0);
            c -= self.variance_reg * scale * (a - stats.mean)
                / (n * (stats.variance * self.kept()).sqrt());
        }
        c
    }

    /// Adds `scale · ∂ surrogate / ∂ a_i · ∇a_i` for one clicked example,
    /// leaving out the L2 term.
    pub(crate) fn example_gradient(
        &self,
        e: &Example,
        w: &[f64],
        stats: &PoemStats,
        scale: f64,
        out: &mut SparseVec,
    ) {
        if !e.clicked {
            return;
        }
        let (a, p) = self.reward(e, w);
        let ratio = p[0] / e.propensity;
        if ratio >= self.clip {
            return;
        }
        let k = scale * self.coefficient(a, stats) * ratio;
        push_scaled(out, &e.candidates[0], k);
        for (x, pb) in e.candidates.iter().zip(&p) {
            push_scaled(out, x, -k * pb);
        }
    }

    fn gradient_at(&self, w: &[f64], stats: &PoemStats) -> Vec<f64> {
        let mut g: Vec<f64> = w.iter().map(|x| -2.0 * self.l2 * x).collect();
        let mut buf = SparseVec::new();
        for e in self.clicked() {
            buf.clear();
            self.example_gradient(e, w, stats, 1.0, &mut buf);
            add_scaled(&mut g, &buf, 1.0);
        }
        g
    }

    /// Gradient of [`Self::value`].
    pub fn gradient(&self, w: &[f64]) -> Vec<f64> {
        self.gradient_at(w, &self.stats(w))
    }

    /// Gradient of [`Self::surrogate`].
    pub fn surrogate_gradient(&self, w: &[f64], stats: &PoemStats) -> Vec<f64> {
        self.gradient_at(w, stats)
    }
}
