use crate::policies::SparseVec;

/// Folds repeated indices of a sparse gradient together in O(entries),
/// keeping first-appearance order.
pub(crate) struct GradientBuffer {
    dense: Vec<f64>,
    seen: Vec<bool>,
    merged: SparseVec,
}

impl GradientBuffer {
    pub(crate) fn new(dimension: usize) -> Self {
        Self {
            dense: vec![0.0; dimension],
            seen: vec![false; dimension],
            merged: SparseVec::new(),
        }
    }

    pub(crate) fn merge(&mut self, raw: &[(u32, f64)]) -> &[(u32, f64)] {
        self.merged.clear();
        for &(j, v) in raw {
            let k = j as usize;
            if !self.seen[k] {
                self.seen[k] = true;
                self.merged.push((j, 0.0));
            }
            self.dense[k] += v;
        }
        for e in &mut self.merged {
            let k = e.0 as usize;
            e.1 = self.dense[k];
            self.dense[k] = 0.0;
            self.seen[k] = false;
        }
        &self.merged
    }
}

/// Per-coordinate AdaGrad on a minimization problem. Regularizers are
/// applied lazily, only to the coordinates a step touches: L2 enters the
/// gradient, L1 is a soft threshold after the step.
pub(crate) struct AdaGrad {
    learning_rate: f64,
    sum_sq: Vec<f64>,
}

impl AdaGrad {
    pub(crate) fn new(learning_rate: f64, dimension: usize) -> Self {
        Self {
            learning_rate,
            sum_sq: vec![0.0; dimension],
        }
    }

    /// `grad` must not repeat an index.
    pub(crate) fn step(&mut self, w: &mut [f64], grad: &[(u32, f64)], l1: f64, l2: f64) {
        for &(j, g) in grad {
            let j = j as usize;
            let g = g + 2.0 * l2 * w[j];
            if g == 0.0 {
                continue;
            }
            self.sum_sq[j] += g * g;
            let eta = self.learning_rate / self.sum_sq[j].sqrt();
            let mut x = w[j] - eta * g;
            if l1 > 0.0 {
                let t = eta * l1;
                x = if x > t {
                    x - t
                } else if x < -t {
                    x + t
                } else {
                    0.0
                };
            }
            w[j] = x;
        }
    }
}
