//! The line-oriented impression format.
//!
//! ```text
//! example ${exID}: ${hashID} ${wasAdClicked} ${propensity} ${nbSlots} ${nbCandidates} ${featId}:${v} ...
//! ${clicked} exid:${exID} ${featId}:${v} ...
//! ```
//!
//! One header line is followed by exactly `nbCandidates` candidate lines.
//! Multi-valued categorical features repeat `id:value` pairs. Features are
//! written in ascending id order and codes in ascending order, so serializing
//! is canonical.

use std::fmt::Write as _;
use std::io::Write;

use super::record::{
    is_numeric_feature, CandidateRecord, FeatureValue, FeatureVector, ImpressionRecord,
    MAX_FEATURE_ID, MAX_SLOTS,
};
use super::LogError;

pub const HEADER_TOKEN: &str = "example";

/// Parses one impression from its header and candidate lines. Line numbers in
/// diagnostics are 1-based within `lines`.
pub fn parse_impression<S: AsRef<str>>(lines: &[S]) -> Result<ImpressionRecord, LogError> {
    parse_impression_at(lines, 1)
}

/// Like [`parse_impression`], numbering diagnostics from `first_line`.
pub fn parse_impression_at<S: AsRef<str>>(
    lines: &[S],
    first_line: usize,
) -> Result<ImpressionRecord, LogError> {
    let Some(header) = lines.first() else {
        return Err(LogError::MalformedHeader {
            line: first_line,
            reason: "empty impression".into(),
        });
    };
    let h = parse_header(header.as_ref(), first_line)?;

    let found = lines.len() - 1;
    if found != h.nb_candidates {
        return Err(LogError::CandidateCountMismatch {
            line: first_line,
            declared: h.nb_candidates,
            found,
        });
    }
    if h.nb_slots == 0 || h.nb_slots > MAX_SLOTS || h.nb_slots > h.nb_candidates {
        return Err(LogError::InvalidField {
            line: first_line,
            field: "nbSlots",
            reason: format!(
                "{} must lie in 1..={} and not exceed nbCandidates {}",
                h.nb_slots,
                MAX_SLOTS.min(h.nb_candidates),
                h.nb_candidates
            ),
        });
    }

    let mut candidates = Vec::with_capacity(h.nb_candidates);
    for (offset, line) in lines[1..].iter().enumerate() {
        let line_no = first_line + 1 + offset;
        let mut c = parse_candidate(line.as_ref(), line_no, h.ex_id)?;
        if offset >= h.nb_slots {
            c.clicked = false;
        }
        candidates.push(c);
    }

    let any_click = candidates[..h.nb_slots].iter().any(|c| c.clicked);
    if any_click != h.was_ad_clicked {
        return Err(LogError::InvalidField {
            line: first_line,
            field: "wasAdClicked",
            reason: format!(
                "header says {} but displayed click flags say {}",
                u8::from(h.was_ad_clicked),
                u8::from(any_click)
            ),
        });
    }

    Ok(ImpressionRecord {
        ex_id: h.ex_id,
        hash_id: h.hash_id,
        was_ad_clicked: h.was_ad_clicked,
        propensity: h.propensity,
        nb_slots: h.nb_slots,
        display_features: h.features,
        candidates,
    })
}

struct Header {
    ex_id: u64,
    hash_id: String,
    was_ad_clicked: bool,
    propensity: f64,
    nb_slots: usize,
    nb_candidates: usize,
    features: FeatureVector,
}

fn parse_header(line: &str, line_no: usize) -> Result<Header, LogError> {
    let mut tokens = line.split_ascii_whitespace();
    let malformed = |reason: &str| LogError::MalformedHeader {
        line: line_no,
        reason: reason.to_string(),
    };
    if tokens.next() != Some(HEADER_TOKEN) {
        return Err(malformed("line does not begin with `example`"));
    }
    let ex_token = tokens.next().ok_or_else(|| malformed("missing exID"))?;
    let ex_id = ex_token
        .strip_suffix(':')
        .ok_or_else(|| malformed("exID must be followed by `:`"))?;
    let ex_id = parse_field::<u64>(ex_id, line_no, "exID")?;
    let hash_id = tokens
        .next()
        .ok_or_else(|| malformed("missing hashID"))?
        .to_string();
    let was_ad_clicked = parse_flag(
        tokens.next().ok_or_else(|| malformed("missing wasAdClicked"))?,
        line_no,
        "wasAdClicked",
    )?;
    let propensity = parse_field::<f64>(
        tokens.next().ok_or_else(|| malformed("missing propensity"))?,
        line_no,
        "propensity",
    )?;
    if !(propensity > 0.0 && propensity.is_finite()) {
        return Err(LogError::NonPositivePropensity {
            line: line_no,
            value: propensity,
        });
    }
    let nb_slots = parse_field::<usize>(
        tokens.next().ok_or_else(|| malformed("missing nbSlots"))?,
        line_no,
        "nbSlots",
    )?;
    let nb_candidates = parse_field::<usize>(
        tokens.next().ok_or_else(|| malformed("missing nbCandidates"))?,
        line_no,
        "nbCandidates",
    )?;
    let features = parse_features(tokens, line_no)?;
    Ok(Header {
        ex_id,
        hash_id,
        was_ad_clicked,
        propensity,
        nb_slots,
        nb_candidates,
        features,
    })
}

fn parse_candidate(line: &str, line_no: usize, ex_id: u64) -> Result<CandidateRecord, LogError> {
    let mut tokens = line.split_ascii_whitespace();
    let clicked = parse_flag(
        tokens.next().ok_or(LogError::InvalidField {
            line: line_no,
            field: "clicked",
            reason: "empty candidate line".into(),
        })?,
        line_no,
        "clicked",
    )?;
    let ex_token = tokens.next().ok_or(LogError::InvalidField {
        line: line_no,
        field: "exid",
        reason: "missing".into(),
    })?;
    let found = ex_token
        .strip_prefix("exid:")
        .ok_or(LogError::InvalidField {
            line: line_no,
            field: "exid",
            reason: format!("expected `exid:` prefix, got `{ex_token}`"),
        })?;
    let found = parse_field::<u64>(found, line_no, "exid")?;
    if found != ex_id {
        return Err(LogError::ExIdMismatch {
            line: line_no,
            expected: ex_id,
            found,
        });
    }
    let features = parse_features(tokens, line_no)?;
    Ok(CandidateRecord { clicked, features })
}

fn parse_features<'a>(
    tokens: impl Iterator<Item = &'a str>,
    line_no: usize,
) -> Result<FeatureVector, LogError> {
    let mut fv = FeatureVector::new();
    for token in tokens {
        let (id, value) = token.split_once(':').ok_or(LogError::InvalidField {
            line: line_no,
            field: "feature",
            reason: format!("`{token}` is not `id:value`"),
        })?;
        let id: u8 = match id.parse::<u64>() {
            Ok(v) if (1..=u64::from(MAX_FEATURE_ID)).contains(&v) => v as u8,
            Ok(v) => {
                return Err(LogError::FeatureIdOutOfRange {
                    line: line_no,
                    id: v,
                })
            }
            Err(_) => {
                return Err(LogError::InvalidField {
                    line: line_no,
                    field: "feature",
                    reason: format!("bad feature id in `{token}`"),
                })
            }
        };
        if is_numeric_feature(id) {
            let v = parse_field::<f64>(value, line_no, "feature")?;
            if !v.is_finite() {
                return Err(LogError::InvalidField {
                    line: line_no,
                    field: "feature",
                    reason: format!("numeric feature {id} is not finite"),
                });
            }
            if fv.insert_raw(id, FeatureValue::Numeric(v)).is_some() {
                return Err(LogError::NumericMultiValued { line: line_no, id });
            }
        } else {
            let code = parse_field::<u64>(value, line_no, "feature")?;
            if !fv.push_code(id, code) {
                return Err(LogError::DuplicateCode {
                    line: line_no,
                    id,
                    code,
                });
            }
        }
    }
    Ok(fv)
}

fn parse_flag(token: &str, line_no: usize, field: &'static str) -> Result<bool, LogError> {
    match token {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(LogError::InvalidField {
            line: line_no,
            field,
            reason: format!("expected 0 or 1, got `{other}`"),
        }),
    }
}

fn parse_field<T: std::str::FromStr>(
    token: &str,
    line_no: usize,
    field: &'static str,
) -> Result<T, LogError> {
    token.parse::<T>().map_err(|_| LogError::InvalidField {
        line: line_no,
        field,
        reason: format!("cannot parse `{token}`"),
    })
}

/// Renders a record as its header line followed by one line per candidate.
pub fn serialize_impression(r: &ImpressionRecord) -> Result<Vec<String>, LogError> {
    r.validate()?;
    let mut lines = Vec::with_capacity(r.candidates.len() + 1);
    let mut header = String::new();
    write_header(&mut header, r);
    lines.push(header);
    for (i, c) in r.candidates.iter().enumerate() {
        let mut line = String::new();
        write_candidate(&mut line, r.ex_id, i < r.nb_slots && c.clicked, &c.features);
        lines.push(line);
    }
    Ok(lines)
}

/// Writes a record followed by a newline after every line.
pub fn write_impression<W: Write>(out: &mut W, r: &ImpressionRecord) -> Result<(), LogError> {
    r.validate()?;
    let mut buf = String::with_capacity(64 * (r.candidates.len() + 1));
    write_header(&mut buf, r);
    buf.push('\n');
    for (i, c) in r.candidates.iter().enumerate() {
        write_candidate(&mut buf, r.ex_id, i < r.nb_slots && c.clicked, &c.features);
        buf.push('\n');
    }
    out.write_all(buf.as_bytes()).map_err(LogError::from)
}

fn write_header(buf: &mut String, r: &ImpressionRecord) {
    // f64 Display is the shortest representation that parses back exactly.
    let _ = write!(
        buf,
        "{HEADER_TOKEN} {}: {} {} {} {} {}",
        r.ex_id,
        r.hash_id,
        u8::from(r.was_ad_clicked),
        r.propensity,
        r.nb_slots,
        r.candidates.len()
    );
    write_features(buf, &r.display_features);
}

fn write_candidate(buf: &mut String, ex_id: u64, clicked: bool, features: &FeatureVector) {
    let _ = write!(buf, "{} exid:{}", u8::from(clicked), ex_id);
    write_features(buf, features);
}

fn write_features(buf: &mut String, features: &FeatureVector) {
    for (id, value) in features.iter() {
        match value {
            FeatureValue::Numeric(v) => {
                let _ = write!(buf, " {id}:{v}");
            }
            FeatureValue::Categorical(codes) => {
                for code in codes {
                    let _ = write!(buf, " {id}:{code}");
                }
            }
        }
    }
}

