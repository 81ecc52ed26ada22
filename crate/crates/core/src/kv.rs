//! Flat `key=value` text: one pair per line, `#` starts a comment.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KvError {
    #[error("line {line}: expected key=value, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("key `{key}`: cannot parse `{value}`: {reason}")]
    Value {
        key: String,
        value: String,
        reason: String,
    },
    #[error("unknown key `{0}`")]
    Unknown(String),
}

/// Parsed pairs, remembering which keys were consumed.
#[derive(Debug, Clone, Default)]
pub struct KvMap {
    entries: BTreeMap<String, String>,
}

impl KvMap {
    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = match raw.split_once('#') {
                Some((before, _)) => before,
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| KvError::Syntax {
                line: n + 1,
                text: line.to_string(),
            })?;
            let key = k.trim().to_string();
            if entries.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(KvError::Duplicate { line: n + 1, key });
            }
        }
        Ok(Self { entries })
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, KvError>
    where
        T::Err: Display,
    {
        self.raw(key)
            .map(|v| {
                v.parse::<T>().map_err(|e| KvError::Value {
                    key: key.to_string(),
                    value: v.to_string(),
                    reason: e.to_string(),
                })
            })
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, KvError>
    where
        T::Err: Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T, KvError>
    where
        T::Err: Display,
    {
        self.get(key)?.ok_or_else(|| KvError::Missing(key.to_string()))
    }

    /// Comma-separated list.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, KvError>
    where
        T::Err: Display,
    {
        self.raw(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse::<T>().map_err(|e| KvError::Value {
                            key: key.to_string(),
                            value: s.to_string(),
                            reason: e.to_string(),
                        })
                    })
                    .collect()
            })
            .transpose()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn render(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}
