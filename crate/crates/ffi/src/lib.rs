//! C ABI over the `blbf` library: read, write and simulate impression logs,
//! load policies, and compute counterfactual estimates.
//!
//! Every fallible function returns a [`BlbfStatus`]. On failure the message
//! is kept per thread and read with [`blbf_last_error`]. Objects cross the
//! boundary as opaque handles that the caller releases with the matching
//! `_free` function. No function unwinds into C.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::BufWriter;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use thiserror::Error;

use blbf::estimators::{diagnostic_sweep, evaluate_policy, EstimateReport, EstimatorError};
use blbf::kv::{KvError, KvMap};
use blbf::logformat::{read_log, ImpressionRecord, LogError, LogWriter, ParseMode};
use blbf::policies::{load_policy, EpsilonMixturePolicy, Policy, PolicyError, UniformPolicy};
use blbf::simulator::{ConfigError, SimError, World, WorldConfig};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlbfStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Estimation = 5,
    Panic = 6,
}

#[derive(Debug, Error)]
enum FfiError {
    #[error("null pointer passed for `{0}`")]
    Null(&'static str),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Kv(#[from] KvError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

impl FfiError {
    fn status(&self) -> BlbfStatus {
        match self {
            FfiError::Null(_) => BlbfStatus::NullArgument,
            FfiError::Invalid(_) | FfiError::Kv(_) | FfiError::Config(_) => {
                BlbfStatus::InvalidArgument
            }
            FfiError::Log(e) => match e.root() {
                LogError::Io(_) => BlbfStatus::Io,
                _ => BlbfStatus::Format,
            },
            FfiError::Policy(PolicyError::Io(_)) => BlbfStatus::Io,
            FfiError::Policy(PolicyError::Epsilon(_) | PolicyError::Temperature(_)) => {
                BlbfStatus::InvalidArgument
            }
            FfiError::Policy(_) => BlbfStatus::Format,
            FfiError::Estimator(EstimatorError::KeepProb(_) | EstimatorError::Epsilon(_)) => {
                BlbfStatus::InvalidArgument
            }
            FfiError::Estimator(_) => BlbfStatus::Estimation,
            FfiError::Sim(SimError::Config(_)) => BlbfStatus::InvalidArgument,
            FfiError::Sim(SimError::Sink(e)) => match e.root() {
                LogError::Io(_) => BlbfStatus::Io,
                _ => BlbfStatus::Format,
            },
            FfiError::Sim(_) => BlbfStatus::Estimation,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), FfiError>) -> BlbfStatus {
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            BlbfStatus::Ok
        }
        Ok(Err(e)) => {
            set_error(e.to_string());
            e.status()
        }
        Err(_) => {
            set_error("internal error: the library panicked".into());
            BlbfStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, name: &'static str) -> Result<&'a str, FfiError> {
    if p.is_null() {
        return Err(FfiError::Null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| FfiError::Invalid(format!("`{name}` is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, FfiError> {
    p.as_ref().ok_or(FfiError::Null(name))
}

fn check_out<T>(p: *mut T, name: &'static str) -> Result<(), FfiError> {
    if p.is_null() {
        Err(FfiError::Null(name))
    } else {
        Ok(())
    }
}

/// An impression log held in memory.
pub struct BlbfLog {
    records: Vec<ImpressionRecord>,
}

/// A policy that can be evaluated on a log.
pub struct BlbfPolicy {
    policy: Arc<dyn Policy>,
}

/// Counts from [`blbf_generate`].
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BlbfSummary {
    /// Impressions before sub-sampling.
    pub impressions: u64,
    pub kept: u64,
    pub clicked: u64,
    pub keep_prob: f64,
}

/// Estimates for one policy. Intervals are symmetric at the requested `z`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BlbfEstimate {
    pub n_hat: f64,
    pub ips: f64,
    pub snips: f64,
    pub c_hat: f64,
    pub se_ips: f64,
    pub se_snips: f64,
    pub se_c_hat: f64,
    pub ips_lower: f64,
    pub ips_upper: f64,
    pub snips_lower: f64,
    pub snips_upper: f64,
    pub c_hat_lower: f64,
    pub c_hat_upper: f64,
    pub kept: u64,
    pub clicked: u64,
}

impl From<&EstimateReport> for BlbfEstimate {
    fn from(r: &EstimateReport) -> Self {
        Self {
            n_hat: r.n_hat,
            ips: r.ips,
            snips: r.snips,
            c_hat: r.c_hat,
            se_ips: r.se_ips,
            se_snips: r.se_snips,
            se_c_hat: r.se_c_hat,
            ips_lower: r.ci_ips.lower,
            ips_upper: r.ci_ips.upper,
            snips_lower: r.ci_snips.lower,
            snips_upper: r.ci_snips.upper,
            c_hat_lower: r.ci_c_hat.lower,
            c_hat_upper: r.ci_c_hat.upper,
            kept: r.kept,
            clicked: r.clicked,
        }
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn blbf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn blbf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Reads a log file, gzip or plain. In lenient mode malformed impressions
/// are skipped.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn blbf_log_read(
    path: *const c_char,
    strict: bool,
    out: *mut *mut BlbfLog,
) -> BlbfStatus {
    guard(|| {
        let path = text(path, "path")?;
        check_out(out, "out")?;
        let mode = if strict {
            ParseMode::Strict
        } else {
            ParseMode::Lenient
        };
        let (records, _) = read_log(Path::new(path), mode)?;
        *out = Box::into_raw(Box::new(BlbfLog { records }));
        Ok(())
    })
}

/// Writes a log; a path ending in `.gz` is gzip-compressed.
///
/// # Safety
/// `log` must come from this library and `path` be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn blbf_log_write(log: *const BlbfLog, path: *const c_char) -> BlbfStatus {
    guard(|| {
        let log = handle(log, "log")?;
        let path = Path::new(text(path, "path")?);
        let file = File::create(path).map_err(LogError::from)?;
        let compressed = path.extension().is_some_and(|x| x == "gz");
        let mut writer = LogWriter::new(BufWriter::new(file), compressed);
        for r in &log.records {
            writer.write(r)?;
        }
        writer.finish()?;
        Ok(())
    })
}

/// Kept impressions in the log; 0 for NULL.
///
/// # Safety
/// `log` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn blbf_log_len(log: *const BlbfLog) -> usize {
    log.as_ref().map_or(0, |l| l.records.len())
}

/// Clicked impressions in the log; 0 for NULL.
///
/// # Safety
/// `log` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn blbf_log_clicked(log: *const BlbfLog) -> usize {
    log.as_ref()
        .map_or(0, |l| l.records.iter().filter(|r| r.was_ad_clicked).count())
}

/// # Safety
/// `log` must be NULL or come from this library, and is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn blbf_log_free(log: *mut BlbfLog) {
    if !log.is_null() {
        drop(Box::from_raw(log));
    }
}

/// Simulates a log from `key=value` world settings (`seed` is required).
/// `logging` receives the logging replica and may be NULL; so may `summary`.
///
/// # Safety
/// `config` must be NUL-terminated and `log` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn blbf_generate(
    config: *const c_char,
    log: *mut *mut BlbfLog,
    logging: *mut *mut BlbfPolicy,
    summary: *mut BlbfSummary,
) -> BlbfStatus {
    guard(|| {
        let kv = KvMap::parse(text(config, "config")?)?;
        check_out(log, "log")?;
        let world = World::new(WorldConfig::from_kv(&kv)?)?;
        let replica = world.model.logging_policy()?;
        let (records, s) = world.generate_vec()?;
        if !summary.is_null() {
            *summary = BlbfSummary {
                impressions: s.impressions,
                kept: s.kept,
                clicked: s.clicked,
                keep_prob: s.keep_prob,
            };
        }
        if !logging.is_null() {
            *logging = Box::into_raw(Box::new(BlbfPolicy {
                policy: Arc::new(replica),
            }));
        }
        *log = Box::into_raw(Box::new(BlbfLog { records }));
        Ok(())
    })
}

/// Loads a policy file written by the command-line tool.
///
/// # Safety
/// `path` must be NUL-terminated and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn blbf_policy_read(
    path: *const c_char,
    out: *mut *mut BlbfPolicy,
) -> BlbfStatus {
    guard(|| {
        let path = text(path, "path")?;
        check_out(out, "out")?;
        let policy = load_policy(Path::new(path))?.into_policy()?;
        *out = Box::into_raw(Box::new(BlbfPolicy { policy }));
        Ok(())
    })
}

/// The uniformly random ranking policy.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn blbf_policy_uniform(out: *mut *mut BlbfPolicy) -> BlbfStatus {
    guard(|| {
        check_out(out, "out")?;
        *out = Box::into_raw(Box::new(BlbfPolicy {
            policy: Arc::new(UniformPolicy),
        }));
        Ok(())
    })
}

/// `(1 - epsilon) * base + epsilon * uniform`. `base` stays owned by the
/// caller.
///
/// # Safety
/// `base` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn blbf_policy_mixture(
    base: *const BlbfPolicy,
    epsilon: f64,
    out: *mut *mut BlbfPolicy,
) -> BlbfStatus {
    guard(|| {
        let base = handle(base, "base")?;
        check_out(out, "out")?;
        let mixed = EpsilonMixturePolicy::new(epsilon, base.policy.clone())?;
        *out = Box::into_raw(Box::new(BlbfPolicy {
            policy: Arc::new(mixed),
        }));
        Ok(())
    })
}

/// # Safety
/// `policy` must be NULL or come from this library, and is invalid
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn blbf_policy_free(policy: *mut BlbfPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// IPS, SNIPS and control-variate estimates of `policy` on `log`, whose
/// unclicked impressions were kept with probability `keep_prob`.
///
/// # Safety
/// Handles must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn blbf_evaluate(
    log: *const BlbfLog,
    policy: *const BlbfPolicy,
    keep_prob: f64,
    z: f64,
    out: *mut BlbfEstimate,
) -> BlbfStatus {
    guard(|| {
        let log = handle(log, "log")?;
        let policy = handle(policy, "policy")?;
        check_out(out, "out")?;
        if !(z > 0.0 && z.is_finite()) {
            return Err(FfiError::Invalid(format!("z must be positive, got {z}")));
        }
        let report = evaluate_policy(&log.records, policy.policy.as_ref(), keep_prob)?.report(z)?;
        *out = BlbfEstimate::from(&report);
        Ok(())
    })
}

/// Estimates of every `epsilon` mixture of `logging` with the uniform
/// policy. `out` must hold `count` entries.
///
/// # Safety
/// Handles must come from this library; `epsilons` and `out` must point to
/// `count` elements each.
#[no_mangle]
pub unsafe extern "C" fn blbf_sweep(
    log: *const BlbfLog,
    logging: *const BlbfPolicy,
    epsilons: *const f64,
    count: usize,
    keep_prob: f64,
    z: f64,
    out: *mut BlbfEstimate,
) -> BlbfStatus {
    guard(|| {
        let log = handle(log, "log")?;
        let logging = handle(logging, "logging")?;
        if count == 0 {
            return Ok(());
        }
        if epsilons.is_null() {
            return Err(FfiError::Null("epsilons"));
        }
        check_out(out, "out")?;
        if !(z > 0.0 && z.is_finite()) {
            return Err(FfiError::Invalid(format!("z must be positive, got {z}")));
        }
        let grid = std::slice::from_raw_parts(epsilons, count);
        let rows = diagnostic_sweep(&log.records, logging.policy.as_ref(), grid, keep_prob, z)?;
        let dest = std::slice::from_raw_parts_mut(out, count);
        for (d, row) in dest.iter_mut().zip(&rows) {
            *d = BlbfEstimate::from(&row.report);
        }
        Ok(())
    })
}
