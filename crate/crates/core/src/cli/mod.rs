//! Command-line front end.
//!
//! Data goes to stdout (or `--output`), diagnostics to stderr. Exit codes:
//! 0 success, 2 usage error, 3 domain error, 1 I/O failure.

pub mod args;
mod render;
pub mod settings;

use std::ffi::OsString;
use std::fmt;
use std::io::Write;

use clap::Parser;
use serde::{Deserialize, Serialize};

pub use args::{Cli, Command, Format};
pub use settings::{parse_length, Overrides, RunConfigFile, Settings};

use crate::diagnostics::{phase_coverage, score_trace, PhaseClass, TraceOptions};
use crate::error::RopeError;
use crate::rope::{rotary_angles, RopeConfig};
use crate::scaling::{extended_law, Branch, ScalingReport};
use crate::variants::{stack_label, Schedule, VariantKind, VariantSpec};
use render::Rendered;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DOMAIN: i32 = 3;

/// Name of the environment variable that replaces the default seed.
pub const SEED_ENV: &str = "ROPESCALE_SEED";

/// A bad flag or config value, reported with the flag it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct UsageError {
    pub flag: String,
    pub message: String,
}

impl UsageError {
    pub fn new(flag: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            flag: flag.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid value for {}: {}", self.flag, self.message)
    }
}

enum Failure {
    Usage(UsageError),
    Domain(RopeError),
    Io(String),
}

impl From<UsageError> for Failure {
    fn from(e: UsageError) -> Self {
        Failure::Usage(e)
    }
}

impl From<RopeError> for Failure {
    fn from(e: RopeError) -> Self {
        Failure::Domain(e)
    }
}

/// Runs one command and returns the process exit code.
pub fn run<I, T>(
    args: I,
    env_seed: Option<String>,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = write!(sink, "{}", e.render());
            return code;
        }
    };
    match execute(&cli.command, env_seed.as_deref(), stdout) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(e)) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_USAGE
        }
        Err(Failure::Domain(e)) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_DOMAIN
        }
        Err(Failure::Io(e)) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_IO
        }
    }
}

fn execute(
    command: &Command,
    env_seed: Option<&str>,
    stdout: &mut dyn Write,
) -> Result<(), Failure> {
    let env_seed = env_seed
        .map(|s| {
            s.trim().parse::<u64>().map_err(|_| {
                UsageError::new(SEED_ENV, format!("expected an unsigned integer, got `{s}`"))
            })
        })
        .transpose()?;

    let (common, overrides) = match command {
        Command::Predict(c) | Command::Angles(c) => (c, Overrides::from_common(c)),
        Command::Coverage(a) => (&a.common, Overrides::from_common(&a.common)),
        Command::Trace(a) => (
            &a.common,
            Overrides {
                seed: a.seed,
                stride: a.stride,
                max_len: a.max_len,
                sample_count: a.sample_count,
                variants: a.variant.iter().cloned().collect(),
                ..Overrides::from_common(&a.common)
            },
        ),
        Command::Compare(a) => (
            &a.common,
            Overrides {
                variants: a.variants.clone(),
                ..Overrides::from_common(&a.common)
            },
        ),
    };
    let file = common
        .config
        .as_deref()
        .map(RunConfigFile::load)
        .transpose()?;
    let settings = Settings::resolve(file.as_ref(), &overrides, env_seed)?;

    let rendered = match command {
        Command::Predict(_) => render::report(&cmd_predict(&settings.config)?, settings.format),
        Command::Angles(_) => render::angles(&cmd_angles(&settings.config)?, settings.format),
        Command::Coverage(a) => {
            let context = a.context_len.unwrap_or(settings.config.train_len);
            if context < 1 {
                return Err(
                    UsageError::new("--context-len", "context length must be at least 1").into(),
                );
            }
            render::coverage(&phase_coverage(&settings.config, context)?, settings.format)
        }
        Command::Trace(a) => {
            let stack = settings.variants.first().cloned().unwrap_or_default();
            let options = TraceOptions {
                max_len: settings.max_len,
                stride: settings.stride,
                sample_count: settings.sample_count,
                seed: settings.seed,
            };
            let trace = match a.threads {
                Some(0) => {
                    return Err(UsageError::new("--threads", "need at least one thread").into())
                }
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Failure::Io(e.to_string()))?
                    .install(|| score_trace(&settings.config, &stack, &options))?,
                None => score_trace(&settings.config, &stack, &options)?,
            };
            render::trace(&trace, settings.format)
        }
        Command::Compare(a) => {
            let lengths = if a.lengths.is_empty() {
                settings::DEFAULT_LENGTHS.to_vec()
            } else {
                a.lengths
                    .iter()
                    .map(|l| parse_length(l))
                    .collect::<Result<_, _>>()?
            };
            let stacks = if settings.variants.is_empty() {
                vec![vec![VariantSpec::base_scaled(settings.config.base)]]
            } else {
                settings.variants.clone()
            };
            render::compare(
                &cmd_compare(&settings.config, &stacks, &lengths)?,
                settings.format,
            )
        }
    }
    .map_err(Failure::Domain)?;

    emit(&rendered, settings.output.as_deref(), stdout)
}

fn emit(
    rendered: &Rendered,
    path: Option<&std::path::Path>,
    stdout: &mut dyn Write,
) -> Result<(), Failure> {
    match path {
        Some(path) => std::fs::write(path, rendered.as_bytes())
            .map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display()))),
        None => stdout
            .write_all(rendered.as_bytes())
            .map_err(|e| Failure::Io(e.to_string())),
    }
}

pub fn cmd_predict(config: &RopeConfig) -> Result<ScalingReport, RopeError> {
    extended_law(config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleRow {
    pub n: usize,
    pub theta: f64,
    pub period: f64,
    /// The pair completes a full period within the training length.
    pub covered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleTable {
    pub config: RopeConfig,
    pub rows: Vec<AngleRow>,
}

pub fn cmd_angles(config: &RopeConfig) -> Result<AngleTable, RopeError> {
    let angles = rotary_angles(config)?;
    let coverage = phase_coverage(config, config.train_len)?;
    let rows = (0..angles.pairs())
        .map(|n| AngleRow {
            n,
            theta: angles.theta[n],
            period: angles.period[n],
            covered: coverage.per_dim_class[n] == PhaseClass::FullPeriod,
        })
        .collect();
    Ok(AngleTable {
        config: *config,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    InBound,
    OutOfBound,
    /// Base at or below the critical base: no finite bound is predicted.
    SmallerBaseUnbounded,
    /// Inference-time or truncating variants have no closed-form bound.
    NotPredicted,
}

impl Verdict {
    pub fn label(self) -> &'static str {
        match self {
            Verdict::InBound => "in-bound",
            Verdict::OutOfBound => "out-of-bound",
            Verdict::SmallerBaseUnbounded => "no bound (smaller-base branch)",
            Verdict::NotPredicted => "no closed-form bound",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub variant: String,
    /// Effective rotary base after base scaling and fixed NTK.
    pub base: f64,
    pub branch: Option<Branch>,
    /// Predicted bound; on the smaller-base branch this is the tuning length,
    /// which the model reaches but is not limited by.
    pub t_extra: Option<f64>,
    pub verdicts: Vec<Verdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub config: RopeConfig,
    pub lengths: Vec<u64>,
    pub rows: Vec<CompareRow>,
}

/// Predicted extrapolation bound for each stack at the config's tuning length.
pub fn cmd_compare(
    config: &RopeConfig,
    stacks: &[Vec<VariantSpec>],
    lengths: &[u64],
) -> Result<CompareReport, RopeError> {
    let rows = stacks
        .iter()
        .map(|stack| {
            let schedule = Schedule::new(stack, config)?;
            let base = schedule.base() * schedule.alpha_at(0.0);
            let lambda = stack
                .iter()
                .find(|s| s.kind == VariantKind::LinearPi)
                .and_then(|s| s.lambda)
                .unwrap_or(1.0);
            let closed_form = stack.iter().all(|s| {
                matches!(
                    s.kind,
                    VariantKind::Vanilla
                        | VariantKind::BaseScaled
                        | VariantKind::NtkFixed
                        | VariantKind::LinearPi
                )
            });
            let (branch, t_extra, fixed) = if closed_form {
                let law = extended_law(&config.with_base(base)?)?;
                let fixed = match law.branch {
                    Branch::LargerBase => None,
                    Branch::SmallerOrEqualBase => Some(Verdict::SmallerBaseUnbounded),
                };
                (
                    Some(law.branch),
                    Some(law.extrapolation_bound * lambda),
                    fixed,
                )
            } else {
                (None, None, Some(Verdict::NotPredicted))
            };
            let verdicts = lengths
                .iter()
                .map(|&len| match (fixed, t_extra) {
                    (Some(v), _) => v,
                    (None, Some(bound)) if (len as f64) <= bound => Verdict::InBound,
                    _ => Verdict::OutOfBound,
                })
                .collect();
            Ok(CompareRow {
                variant: if stack.is_empty() {
                    "vanilla".into()
                } else {
                    stack_label(stack)
                },
                base,
                branch,
                t_extra,
                verdicts,
            })
        })
        .collect::<Result<Vec<_>, RopeError>>()?;
    Ok(CompareReport {
        config: *config,
        lengths: lengths.to_vec(),
        rows,
    })
}
