use serde::{Deserialize, Serialize};

use crate::logformat::{FeatureValue, FeatureVector};
use crate::numeric::mix64;

const NS_BIAS: u64 = 0;
const NS_DISPLAY: u64 = 1;
const NS_CANDIDATE: u64 = 2;
const NS_CROSS: u64 = 3;
const NUMERIC_SLOT: u64 = u64::MAX;

/// Sparse feature vector: `(index, value)` pairs. Indices may repeat after a
/// hash collision; repeated entries add.
pub type SparseVec = Vec<(u32, f64)>;

/// Maps `φ(c, p)` (display features plus one candidate's features) into a
/// hashed space of `2^bits` dimensions.
///
/// Numeric features pass through at one index per feature id. Each
/// categorical code is a one-hot indicator at `hash(namespace, id, code)`;
/// a multi-valued feature activates one index per code. A constant bias
/// dimension is always present. Two distinct keys may land on the same
/// index, in which case their contributions share a weight.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Featurizer {
    pub bits: u32,
    pub numeric: bool,
    pub categorical: bool,
    /// Include context (display) features alongside product features.
    pub display: bool,
    /// Emit the product of candidate features 1 and 2.
    pub interactions: bool,
}

impl Default for Featurizer {
    fn default() -> Self {
        Self {
            bits: 18,
            numeric: true,
            categorical: true,
            display: true,
            interactions: false,
        }
    }
}

impl Featurizer {
    pub fn with_bits(bits: u32) -> Self {
        Self {
            bits,
            ..Self::default()
        }
    }

    pub fn dimension(&self) -> usize {
        1usize << self.bits
    }

    /// Index of the constant bias dimension.
    pub fn bias_index(&self) -> u32 {
        self.index(NS_BIAS, 0, 0)
    }

    fn index(&self, namespace: u64, id: u8, code: u64) -> u32 {
        let key = mix64(namespace << 56 ^ u64::from(id) << 48) ^ code;
        (mix64(key) & ((1u64 << self.bits) - 1)) as u32
    }

    pub fn featurize(&self, display: &FeatureVector, candidate: &FeatureVector) -> SparseVec {
        let mut out = Vec::with_capacity(2 + display.len() + candidate.len() * 2);
        self.featurize_into(display, candidate, &mut out);
        out
    }

    pub fn featurize_into(
        &self,
        display: &FeatureVector,
        candidate: &FeatureVector,
        out: &mut SparseVec,
    ) {
        out.clear();
        out.push((self.bias_index(), 1.0));
        if self.display {
            self.push_features(NS_DISPLAY, display, out);
        }
        self.push_features(NS_CANDIDATE, candidate, out);
        if self.interactions {
            if let (Some(a), Some(b)) = (
                candidate.get(1).and_then(FeatureValue::as_numeric),
                candidate.get(2).and_then(FeatureValue::as_numeric),
            ) {
                out.push((self.index(NS_CROSS, 1, 2), a * b));
            }
        }
    }

    fn push_features(&self, namespace: u64, features: &FeatureVector, out: &mut SparseVec) {
        for (id, value) in features.iter() {
            match value {
                FeatureValue::Numeric(v) if self.numeric => {
                    out.push((self.index(namespace, id, NUMERIC_SLOT), *v));
                }
                FeatureValue::Categorical(codes) if self.categorical => {
                    for &code in codes {
                        out.push((self.index(namespace, id, code), 1.0));
                    }
                }
                _ => {}
            }
        }
    }
}

pub fn dot(weights: &[f64], x: &[(u32, f64)]) -> f64 {
    x.iter().map(|&(i, v)| weights[i as usize] * v).sum()
}
