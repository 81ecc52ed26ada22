//! Flat `key=value` text format for handing policies between commands.
//!
//! ```text
//! kind=linear
//! name=poem
//! mode=stochastic
//! temperature=1
//! bits=18
//! numeric=true
//! categorical=true
//! display=true
//! interactions=false
//! weights=17:0.25 4031:-1.5
//! ```
//!
//! `kind=uniform` needs no other keys. `kind=mixture` adds `epsilon=` on top
//! of the linear keys, which then describe the base policy. Weights are
//! sparse `index:value` pairs; absent indices are zero.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use super::{
    EpsilonMixturePolicy, Featurizer, LinearRankingPolicy, Policy, PolicyError, PolicyMode,
    UniformPolicy,
};

#[derive(Debug, Clone, PartialEq)]
pub enum PolicySpec {
    Uniform,
    Linear(LinearRankingPolicy),
    Mixture {
        epsilon: f64,
        base: LinearRankingPolicy,
    },
}

impl PolicySpec {
    pub fn into_policy(self) -> Result<Arc<dyn Policy>, PolicyError> {
        Ok(match self {
            PolicySpec::Uniform => Arc::new(UniformPolicy),
            PolicySpec::Linear(p) => Arc::new(p),
            PolicySpec::Mixture { epsilon, base } => {
                Arc::new(EpsilonMixturePolicy::new(epsilon, Arc::new(base))?)
            }
        })
    }

    pub fn describe(&self) -> String {
        match self {
            PolicySpec::Uniform => "uniform".into(),
            PolicySpec::Linear(p) => format!("{} ({})", p.name, p.mode),
            PolicySpec::Mixture { epsilon, base } => {
                format!("{} mixed with uniform at epsilon={epsilon}", base.name)
            }
        }
    }
}

pub fn render_policy(spec: &PolicySpec) -> String {
    let mut out = String::new();
    match spec {
        PolicySpec::Uniform => out.push_str("kind=uniform\nname=uniform\n"),
        PolicySpec::Linear(p) => {
            out.push_str("kind=linear\n");
            render_linear(&mut out, p);
        }
        PolicySpec::Mixture { epsilon, base } => {
            out.push_str("kind=mixture\n");
            let _ = writeln!(out, "epsilon={epsilon}");
            render_linear(&mut out, base);
        }
    }
    out
}

fn render_linear(out: &mut String, p: &LinearRankingPolicy) {
    let f = &p.featurizer;
    let _ = writeln!(out, "name={}", p.name);
    let _ = writeln!(out, "mode={}", p.mode);
    let _ = writeln!(out, "temperature={}", p.temperature);
    let _ = writeln!(out, "bits={}", f.bits);
    let _ = writeln!(out, "numeric={}", f.numeric);
    let _ = writeln!(out, "categorical={}", f.categorical);
    let _ = writeln!(out, "display={}", f.display);
    let _ = writeln!(out, "interactions={}", f.interactions);
    out.push_str("weights=");
    for (n, (i, w)) in p.sparse_weights().into_iter().enumerate() {
        if n > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{i}:{w}");
    }
    out.push('\n');
}

pub fn parse_policy(text: &str) -> Result<PolicySpec, PolicyError> {
    let mut fields: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(PolicyError::Format {
            line: n + 1,
            reason: format!("expected key=value, got `{line}`"),
        })?;
        if fields.insert(k.trim(), (n + 1, v.trim())).is_some() {
            return Err(PolicyError::Format {
                line: n + 1,
                reason: format!("duplicate key `{}`", k.trim()),
            });
        }
    }
    let get = |key: &str| -> Result<(usize, &str), PolicyError> {
        fields.get(key).copied().ok_or(PolicyError::Format {
            line: 0,
            reason: format!("missing key `{key}`"),
        })
    };
    let (_, kind) = get("kind")?;
    match kind {
        "uniform" => Ok(PolicySpec::Uniform),
        "linear" => Ok(PolicySpec::Linear(parse_linear(&get)?)),
        "mixture" => {
            let epsilon = parse_value::<f64>(get("epsilon")?)?;
            Ok(PolicySpec::Mixture {
                epsilon,
                base: parse_linear(&get)?,
            })
        }
        other => Err(PolicyError::Format {
            line: get("kind")?.0,
            reason: format!("unknown policy kind `{other}`"),
        }),
    }
}

fn parse_linear<'a>(
    get: &dyn Fn(&str) -> Result<(usize, &'a str), PolicyError>,
) -> Result<LinearRankingPolicy, PolicyError> {
    let name = get("name")?.1.to_string();
    let (mode_line, mode) = get("mode")?;
    let mode = match mode {
        "stochastic" => PolicyMode::Stochastic,
        "deterministic" => PolicyMode::Deterministic,
        other => {
            return Err(PolicyError::Format {
                line: mode_line,
                reason: format!("unknown mode `{other}`"),
            })
        }
    };
    let featurizer = Featurizer {
        bits: parse_value(get("bits")?)?,
        numeric: parse_value(get("numeric")?)?,
        categorical: parse_value(get("categorical")?)?,
        display: parse_value(get("display")?)?,
        interactions: parse_value(get("interactions")?)?,
    };
    if featurizer.bits == 0 || featurizer.bits > 28 {
        return Err(PolicyError::Format {
            line: get("bits")?.0,
            reason: "bits must lie in 1..=28".into(),
        });
    }
    let temperature = parse_value::<f64>(get("temperature")?)?;
    let (wline, wtext) = get("weights")?;
    let mut sparse = Vec::new();
    for token in wtext.split_ascii_whitespace() {
        let bad = || PolicyError::Format {
            line: wline,
            reason: format!("bad weight entry `{token}`"),
        };
        let (i, w) = token.split_once(':').ok_or_else(bad)?;
        let i: u32 = i.parse().map_err(|_| bad())?;
        let w: f64 = w.parse().map_err(|_| bad())?;
        if !w.is_finite() {
            return Err(bad());
        }
        sparse.push((i, w));
    }
    LinearRankingPolicy::from_sparse(name, featurizer, &sparse, temperature, mode)
}

fn parse_value<T: std::str::FromStr>((line, text): (usize, &str)) -> Result<T, PolicyError> {
    text.parse().map_err(|_| PolicyError::Format {
        line,
        reason: format!("cannot parse `{text}`"),
    })
}

pub fn save_policy(path: &Path, spec: &PolicySpec) -> Result<(), PolicyError> {
    std::fs::write(path, render_policy(spec))?;
    Ok(())
}

pub fn load_policy(path: &Path) -> Result<PolicySpec, PolicyError> {
    parse_policy(&std::fs::read_to_string(path)?)
}
