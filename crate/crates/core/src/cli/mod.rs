//! Command-line front end: `generate`, `validate`, `diagnose`, `learn` and
//! `evaluate`.
//!
//! Settings come from an optional `key=value` config file; flags override
//! it. Every generated log gets two sidecars next to it: `<log>.summary`
//! with the generation counts and keep probability, and
//! `<log>.logging.policy` with the logging replica. Later commands read both
//! unless the config names them explicitly.
//!
//! Exit codes: 0 success, 2 bad configuration, 3 I/O failure, 4 missing or
//! unreadable artifact, 5 data that breaks the protocol.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::estimators::{
    default_epsilon_grid, diagnostic_sweep, evaluate_policy, jsonl, propensity_stats,
    propensity_tsv, reports_tsv, sweep_tsv, EstimatorError, LabelledReport, Z_99,
};
use crate::kv::{KvError, KvMap};
use crate::learners::{benchmark_tsv, run_benchmark, BenchmarkConfig, LearnerError};
use crate::logformat::{read_log, validate_log, ImpressionRecord, LogError, LogWriter, ParseMode};
use crate::policies::{load_policy, save_policy, Policy, PolicyError, PolicySpec};
use crate::simulator::{ConfigError, GenerationSummary, SimError, World, WorldConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{what} {}: {reason}", path.display())]
    Missing {
        what: &'static str,
        path: PathBuf,
        reason: String,
    },
    #[error("{0}")]
    Protocol(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Missing { .. } => 4,
            CliError::Protocol(_) => 5,
        }
    }

    fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn log(path: &Path, e: LogError) -> Self {
        match e.root() {
            LogError::Io(_) => match e {
                LogError::Io(source) => Self::io(path, source),
                other => CliError::Protocol(format!("{}: {other}", path.display())),
            },
            _ => CliError::Protocol(format!("{}: {e}", path.display())),
        }
    }
}

impl From<KvError> for CliError {
    fn from(e: KvError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<EstimatorError> for CliError {
    fn from(e: EstimatorError) -> Self {
        match e {
            EstimatorError::KeepProb(_) | EstimatorError::Epsilon(_) => {
                CliError::Config(e.to_string())
            }
            other => CliError::Protocol(other.to_string()),
        }
    }
}

impl From<LearnerError> for CliError {
    fn from(e: LearnerError) -> Self {
        match e {
            LearnerError::Ratios(_) | LearnerError::Grid(_) | LearnerError::Kv(_) => {
                CliError::Config(e.to_string())
            }
            LearnerError::Estimator(inner) => inner.into(),
            other => CliError::Protocol(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Tsv,
    Jsonl,
}

#[derive(Debug, Parser)]
#[command(name = "blbf", version, about = "Banner log simulator, counterfactual estimators and off-policy learners")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Flat key=value settings; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Log path for `generate`, table path otherwise (default stdout).
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Tsv)]
    pub format: Format,
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Fail on validation violations and multi-slot impressions in `learn`.
    #[arg(long, global = true)]
    pub strict: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a sub-sampled log from the world in the config.
    Generate,
    /// Check record invariants and exID order.
    Validate {
        #[arg(long)]
        input: PathBuf,
    },
    /// Propensity statistics per slot count and the epsilon-mixture sweep.
    Diagnose {
        #[arg(long)]
        input: PathBuf,
        /// Comma-separated mixture weights; overrides `eps_grid`.
        #[arg(long, value_delimiter = ',')]
        epsilon: Option<Vec<f64>>,
    },
    /// Train and compare Regression, IPS, DRO and POEM on a 1-slot log.
    Learn {
        #[arg(long)]
        input: PathBuf,
        /// Write each learned policy to `<dir>/<method>.policy`.
        #[arg(long)]
        policy_dir: Option<PathBuf>,
    },
    /// Estimate one serialized policy on a log.
    Evaluate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        policy: PathBuf,
    },
}

/// Merged settings for one invocation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub kv: KvMap,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub strict: bool,
}

impl RunConfig {
    pub fn load(global: &GlobalArgs) -> Result<Self, CliError> {
        let mut kv = match &global.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                KvMap::parse(&text)?
            }
            None => KvMap::default(),
        };
        if let Some(seed) = global.seed {
            kv.set("seed", seed);
        }
        if global.threads == Some(0) {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        Ok(Self {
            kv,
            output: global.output.clone(),
            format: global.format,
            strict: global.strict,
        })
    }

    /// Keep probability from the config, else from the log's summary sidecar.
    fn keep_prob(&self, log: &Path) -> Result<f64, CliError> {
        if let Some(p) = self.kv.get::<f64>("keep_prob")? {
            return Ok(p);
        }
        let path = sidecar(log, SUMMARY_SUFFIX);
        let missing = |reason: String| CliError::Missing {
            what: "log summary",
            path: path.clone(),
            reason,
        };
        let text = fs::read_to_string(&path).map_err(|e| missing(e.to_string()))?;
        let kv = KvMap::parse(&text).map_err(|e| missing(e.to_string()))?;
        let summary = GenerationSummary::from_kv(&kv).map_err(|e| missing(e.to_string()))?;
        Ok(summary.keep_prob)
    }

    /// Logging replica from `logging_policy` in the config, else the sidecar.
    fn logging_replica(&self, log: &Path) -> Result<PolicySpec, CliError> {
        let path = match self.kv.raw("logging_policy") {
            Some(p) => PathBuf::from(p),
            None => sidecar(log, LOGGING_SUFFIX),
        };
        read_policy(&path, "logging policy")
    }

    fn emit(&self, text: &str) -> Result<(), CliError> {
        match &self.output {
            Some(path) => fs::write(path, text).map_err(|e| CliError::io(path, e)),
            None => {
                let mut out = io::stdout().lock();
                out.write_all(text.as_bytes())
                    .and_then(|_| out.flush())
                    .map_err(|e| CliError::io(Path::new("<stdout>"), e))
            }
        }
    }
}

pub const SUMMARY_SUFFIX: &str = ".summary";
pub const LOGGING_SUFFIX: &str = ".logging.policy";

/// `<log><suffix>`.
pub fn sidecar(log: &Path, suffix: &str) -> PathBuf {
    let mut s = log.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn read_policy(path: &Path, what: &'static str) -> Result<PolicySpec, CliError> {
    load_policy(path).map_err(|e| CliError::Missing {
        what,
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn into_policy(spec: PolicySpec) -> Result<std::sync::Arc<dyn Policy>, CliError> {
    spec.into_policy()
        .map_err(|e: PolicyError| CliError::Config(e.to_string()))
}

fn check_input(path: &Path) -> Result<(), CliError> {
    fs::metadata(path)
        .map(|_| ())
        .map_err(|e| CliError::io(path, e))
}

fn check_output_dir(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => Err(CliError::io(
            path,
            io::Error::new(io::ErrorKind::NotFound, "parent directory does not exist"),
        )),
        _ => Ok(()),
    }
}

fn read_records(path: &Path) -> Result<Vec<ImpressionRecord>, CliError> {
    let (records, _) = read_log(path, ParseMode::Strict).map_err(|e| CliError::log(path, e))?;
    Ok(records)
}

fn set_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Runs one parsed command line.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = RunConfig::load(&cli.global)?;
    set_threads(cli.global.threads);
    match &cli.command {
        Command::Generate => generate(&cfg),
        Command::Validate { input } => validate(&cfg, input),
        Command::Diagnose { input, epsilon } => diagnose(&cfg, input, epsilon.as_deref()),
        Command::Learn { input, policy_dir } => learn(&cfg, input, policy_dir.as_deref()),
        Command::Evaluate { input, policy } => evaluate(&cfg, input, policy),
    }
}

fn generate(cfg: &RunConfig) -> Result<(), CliError> {
    let output = cfg
        .output
        .as_deref()
        .ok_or_else(|| CliError::Config("generate needs --output".into()))?;
    let world_cfg = WorldConfig::from_kv(&cfg.kv)?;
    check_output_dir(output)?;
    let world = World::new(world_cfg).map_err(|e| match e {
        SimError::Config(c) => CliError::from(c),
        other => CliError::Config(other.to_string()),
    })?;
    let logging = world
        .model
        .logging_policy()
        .map_err(|e| CliError::Config(e.to_string()))?;

    let file = fs::File::create(output).map_err(|e| CliError::io(output, e))?;
    let compressed = output.extension().is_some_and(|x| x == "gz");
    let mut writer = LogWriter::new(io::BufWriter::new(file), compressed);
    let summary = world.generate(&mut writer).map_err(|e| match e {
        SimError::Sink(le) => CliError::log(output, le),
        other => CliError::Protocol(other.to_string()),
    })?;
    writer.finish().map_err(|e| CliError::log(output, e))?;

    let summary_text = summary.to_kv().render();
    let summary_path = sidecar(output, SUMMARY_SUFFIX);
    fs::write(&summary_path, &summary_text).map_err(|e| CliError::io(&summary_path, e))?;
    let policy_path = sidecar(output, LOGGING_SUFFIX);
    save_policy(&policy_path, &PolicySpec::Linear(logging)).map_err(|e| match e {
        PolicyError::Io(source) => CliError::io(&policy_path, source),
        other => CliError::Config(other.to_string()),
    })?;
    let mut out = io::stdout().lock();
    out.write_all(summary_text.as_bytes())
        .map_err(|e| CliError::io(Path::new("<stdout>"), e))
}

#[derive(Serialize)]
struct ValidationOutput<'a> {
    parse_errors: usize,
    #[serde(flatten)]
    report: &'a crate::logformat::ValidationReport,
}

fn validate(cfg: &RunConfig, input: &Path) -> Result<(), CliError> {
    check_input(input)?;
    let mode = if cfg.strict {
        ParseMode::Strict
    } else {
        ParseMode::Lenient
    };
    let (records, diagnostics) = read_log(input, mode).map_err(|e| CliError::log(input, e))?;
    for d in &diagnostics {
        eprintln!("blbf: {}: {d}", input.display());
    }
    let report = validate_log(&records);
    let text = match cfg.format {
        Format::Jsonl => jsonl(&[ValidationOutput {
            parse_errors: diagnostics.len(),
            report: &report,
        }]),
        Format::Tsv => {
            let opt = |x: Option<f64>| x.map_or("NA".to_string(), crate::estimators::tsv_number);
            let mut t = String::new();
            t.push_str(&format!("impressions\t{}\n", report.impressions));
            t.push_str(&format!("clicked\t{}\n", report.clicked));
            for (slots, n) in &report.per_slot_counts {
                t.push_str(&format!("slots_{slots}\t{n}\n"));
            }
            t.push_str(&format!("min_propensity\t{}\n", opt(report.min_propensity)));
            t.push_str(&format!("max_propensity\t{}\n", opt(report.max_propensity)));
            t.push_str(&format!("mean_propensity\t{}\n", opt(report.mean_propensity)));
            t.push_str(&format!("parse_errors\t{}\n", diagnostics.len()));
            t.push_str(&format!("violations\t{}\n", report.violations.len()));
            for v in &report.violations {
                t.push_str(&format!("violation\t{v:?}\n"));
            }
            t
        }
    };
    cfg.emit(&text)?;
    if cfg.strict && !report.is_valid() {
        return Err(CliError::Protocol(format!(
            "{}: {} violations",
            input.display(),
            report.violations.len()
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct Tagged<'a, T: Serialize> {
    table: &'a str,
    #[serde(flatten)]
    row: &'a T,
}

fn diagnose(cfg: &RunConfig, input: &Path, epsilon: Option<&[f64]>) -> Result<(), CliError> {
    check_input(input)?;
    let keep = cfg.keep_prob(input)?;
    let replica = into_policy(cfg.logging_replica(input)?)?;
    let grid = match epsilon {
        Some(e) => e.to_vec(),
        None => cfg.kv.get_list("eps_grid")?.unwrap_or_else(default_epsilon_grid),
    };
    if grid.is_empty() {
        return Err(CliError::Config("empty epsilon grid".into()));
    }
    if let Some(e) = grid.iter().find(|e| !(0.0..=1.0).contains(*e)) {
        return Err(CliError::Config(format!("epsilon {e} outside [0, 1]")));
    }
    let records = read_records(input)?;
    let stats = propensity_stats(&records, keep);
    let sweep = diagnostic_sweep(&records, &*replica, &grid, keep, Z_99)?;
    let text = match cfg.format {
        Format::Tsv => format!("{}\n{}", propensity_tsv(&stats), sweep_tsv(&sweep)),
        Format::Jsonl => {
            let mut t = jsonl(
                &stats
                    .iter()
                    .map(|row| Tagged {
                        table: "propensity",
                        row,
                    })
                    .collect::<Vec<_>>(),
            );
            t.push_str(&jsonl(
                &sweep
                    .iter()
                    .map(|row| Tagged {
                        table: "sweep",
                        row,
                    })
                    .collect::<Vec<_>>(),
            ));
            t
        }
    };
    cfg.emit(&text)
}

fn learn(cfg: &RunConfig, input: &Path, policy_dir: Option<&Path>) -> Result<(), CliError> {
    check_input(input)?;
    let bench = BenchmarkConfig::from_kv(&cfg.kv)?;
    let keep = cfg.keep_prob(input)?;
    let replica = into_policy(cfg.logging_replica(input)?)?;
    if let Some(dir) = policy_dir {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut records = read_records(input)?;
    if let Some(r) = records.iter().find(|r| r.nb_slots != 1) {
        if cfg.strict {
            return Err(CliError::Protocol(format!(
                "{}: exID {} has {} slots; learners need 1-slot impressions",
                input.display(),
                r.ex_id,
                r.nb_slots
            )));
        }
        let before = records.len();
        records.retain(|r| r.nb_slots == 1);
        eprintln!(
            "blbf: dropped {} multi-slot impressions",
            before - records.len()
        );
    }
    let report = run_benchmark(&records, keep, &*replica, &bench)?;
    if let Some(dir) = policy_dir {
        for (method, policy) in &report.policies {
            let path = dir.join(format!("{method}.policy"));
            save_policy(&path, &PolicySpec::Linear(policy.clone())).map_err(|e| match e {
                PolicyError::Io(source) => CliError::io(&path, source),
                other => CliError::Config(other.to_string()),
            })?;
        }
    }
    let text = match cfg.format {
        Format::Tsv => benchmark_tsv(&report.rows),
        Format::Jsonl => jsonl(&report.rows),
    };
    cfg.emit(&text)
}

fn evaluate(cfg: &RunConfig, input: &Path, policy_path: &Path) -> Result<(), CliError> {
    check_input(input)?;
    let spec = read_policy(policy_path, "policy")?;
    let keep = cfg.keep_prob(input)?;
    let policy = into_policy(spec)?;
    let records = read_records(input)?;
    let report = evaluate_policy(&records, &*policy, keep)?.report(Z_99)?;
    let text = match cfg.format {
        Format::Tsv => reports_tsv("policy", &[(policy.name().to_string(), &report)]),
        Format::Jsonl => jsonl(&[LabelledReport {
            label: policy.name(),
            report: &report,
        }]),
    };
    cfg.emit(&text)
}
