use std::collections::BTreeMap;

use super::LogError;

/// Highest feature id allowed in a log.
pub const MAX_FEATURE_ID: u8 = 35;
/// Banner types display between one and this many products.
pub const MAX_SLOTS: usize = 6;

/// Feature ids carrying real values; every other id is categorical.
pub fn is_numeric_feature(id: u8) -> bool {
    id == 1 || id == 2
}

/// The value of a single feature.
///
/// Categorical codes are kept sorted and de-duplicated so that two values
/// holding the same code set compare equal regardless of insertion order.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureValue {
    Numeric(f64),
    Categorical(Vec<u64>),
}

impl FeatureValue {
    pub fn as_numeric(&self) -> Option<f64> {
        match self {
            FeatureValue::Numeric(v) => Some(*v),
            FeatureValue::Categorical(_) => None,
        }
    }

    pub fn codes(&self) -> &[u64] {
        match self {
            FeatureValue::Numeric(_) => &[],
            FeatureValue::Categorical(codes) => codes,
        }
    }
}

/// Sparse map from feature id (1..=35) to value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureVector {
    values: BTreeMap<u8, FeatureValue>,
}

impl FeatureVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_numeric(&mut self, id: u8, value: f64) -> Result<(), LogError> {
        check_id(id)?;
        if !is_numeric_feature(id) {
            return Err(LogError::invalid(format!("feature {id} is categorical")));
        }
        if !value.is_finite() {
            return Err(LogError::invalid(format!("feature {id} is not finite")));
        }
        self.values.insert(id, FeatureValue::Numeric(value));
        Ok(())
    }

    /// Replaces feature `id` with the given code set. Duplicates are rejected.
    pub fn set_categorical(&mut self, id: u8, codes: &[u64]) -> Result<(), LogError> {
        check_id(id)?;
        if is_numeric_feature(id) {
            return Err(LogError::invalid(format!("feature {id} is numeric")));
        }
        if codes.is_empty() {
            return Err(LogError::invalid(format!("feature {id} has no codes")));
        }
        let mut sorted = codes.to_vec();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(LogError::invalid(format!("feature {id} repeats a code")));
        }
        self.values.insert(id, FeatureValue::Categorical(sorted));
        Ok(())
    }

    /// Adds one code to a categorical feature, creating it if needed.
    /// Returns `false` if the code was already present.
    pub(crate) fn push_code(&mut self, id: u8, code: u64) -> bool {
        match self
            .values
            .entry(id)
            .or_insert_with(|| FeatureValue::Categorical(Vec::new()))
        {
            FeatureValue::Categorical(codes) => match codes.binary_search(&code) {
                Ok(_) => false,
                Err(pos) => {
                    codes.insert(pos, code);
                    true
                }
            },
            FeatureValue::Numeric(_) => false,
        }
    }

    pub(crate) fn insert_raw(&mut self, id: u8, value: FeatureValue) -> Option<FeatureValue> {
        self.values.insert(id, value)
    }

    pub fn get(&self, id: u8) -> Option<&FeatureValue> {
        self.values.get(&id)
    }

    pub fn contains(&self, id: u8) -> bool {
        self.values.contains_key(&id)
    }

    /// Iterates in ascending feature-id order.
    pub fn iter(&self) -> impl Iterator<Item = (u8, &FeatureValue)> {
        self.values.iter().map(|(id, v)| (*id, v))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn validate(&self) -> Result<(), LogError> {
        for (id, value) in self.iter() {
            check_id(id)?;
            match value {
                FeatureValue::Numeric(v) => {
                    if !is_numeric_feature(id) {
                        return Err(LogError::invalid(format!("feature {id} must be categorical")));
                    }
                    if !v.is_finite() {
                        return Err(LogError::invalid(format!("feature {id} is not finite")));
                    }
                }
                FeatureValue::Categorical(codes) => {
                    if is_numeric_feature(id) {
                        return Err(LogError::invalid(format!("feature {id} must be numeric")));
                    }
                    if codes.is_empty() {
                        return Err(LogError::invalid(format!("feature {id} has no codes")));
                    }
                    if codes.windows(2).any(|w| w[0] >= w[1]) {
                        return Err(LogError::invalid(format!(
                            "feature {id} codes are not a sorted set"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

fn check_id(id: u8) -> Result<(), LogError> {
    if id == 0 || id > MAX_FEATURE_ID {
        Err(LogError::invalid(format!(
            "feature id {id} out of range 1..{MAX_FEATURE_ID}"
        )))
    } else {
        Ok(())
    }
}

/// One product in the candidate pool of an impression.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CandidateRecord {
    /// Only meaningful for the displayed candidates.
    pub clicked: bool,
    pub features: FeatureVector,
}

/// One logged banner impression.
///
/// The first `nb_slots` candidates are the displayed products, in slot order,
/// so the logged ranking is always `0..nb_slots`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpressionRecord {
    pub ex_id: u64,
    pub hash_id: String,
    pub was_ad_clicked: bool,
    /// Probability the logging policy assigned to the displayed ranking.
    pub propensity: f64,
    pub nb_slots: usize,
    pub display_features: FeatureVector,
    pub candidates: Vec<CandidateRecord>,
}

impl ImpressionRecord {
    pub fn nb_candidates(&self) -> usize {
        self.candidates.len()
    }

    /// Indices of the displayed products, in slot order.
    pub fn logged_ranking(&self) -> Vec<usize> {
        (0..self.nb_slots).collect()
    }

    pub fn displayed(&self) -> &[CandidateRecord] {
        &self.candidates[..self.nb_slots.min(self.candidates.len())]
    }

    /// Banner-level reward: was there a click anywhere in the banner.
    pub fn reward(&self) -> f64 {
        if self.was_ad_clicked {
            1.0
        } else {
            0.0
        }
    }

    /// Clears click flags on non-displayed candidates.
    pub fn normalize_clicks(&mut self) {
        let k = self.nb_slots;
        for c in self.candidates.iter_mut().skip(k) {
            c.clicked = false;
        }
    }

    pub fn validate(&self) -> Result<(), LogError> {
        if self.hash_id.is_empty() || self.hash_id.chars().any(char::is_whitespace) {
            return Err(LogError::invalid("hashID must be a non-empty token"));
        }
        if !(self.propensity > 0.0 && self.propensity.is_finite()) {
            return Err(LogError::invalid(format!(
                "propensity {} is not positive",
                self.propensity
            )));
        }
        if self.nb_slots == 0 || self.nb_slots > MAX_SLOTS {
            return Err(LogError::invalid(format!(
                "nbSlots {} outside 1..{MAX_SLOTS}",
                self.nb_slots
            )));
        }
        if self.nb_slots > self.candidates.len() {
            return Err(LogError::invalid(format!(
                "nbSlots {} exceeds nbCandidates {}",
                self.nb_slots,
                self.candidates.len()
            )));
        }
        let any_click = self.displayed().iter().any(|c| c.clicked);
        if any_click != self.was_ad_clicked {
            return Err(LogError::invalid(
                "wasAdClicked disagrees with the displayed click flags",
            ));
        }
        self.display_features.validate()?;
        for c in &self.candidates {
            c.features.validate()?;
        }
        Ok(())
    }
}
