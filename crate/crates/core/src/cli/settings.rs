//! Run configuration: JSON file, flag overrides and defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::args::{CommonArgs, Format};
use super::UsageError;
use crate::rope::{RopeConfig, DEFAULT_BASE, DEFAULT_HEAD_DIM, DEFAULT_TRAIN_LEN};
use crate::variants::{parse_stack, VariantSpec};

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_STRIDE: u64 = 256;
pub const DEFAULT_SAMPLES: usize = 16;
pub const DEFAULT_MAX_LEN: u64 = 32_768;
pub const DEFAULT_LENGTHS: [u64; 7] = [4096, 8192, 16384, 32768, 65536, 131_072, 262_144];

/// Rotary parameters in a run file; every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RopeSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_len: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tune_len: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_len: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_count: Option<usize>,
}

/// Contents of a `--config` JSON file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rope: Option<RopeSection>,
    /// Each entry is scored or compared as its own single-variant stack.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variants: Option<Vec<VariantSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSection>,
}

impl RunConfigFile {
    pub fn load(path: &Path) -> Result<Self, UsageError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            UsageError::new("--config", format!("cannot read {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, UsageError> {
        serde_json::from_str(text).map_err(|e| UsageError::new("--config", e.to_string()))
    }
}

/// Values given on the command line; `None` means "not given".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub head_dim: Option<usize>,
    pub base: Option<f64>,
    pub train_len: Option<u64>,
    pub tune_len: Option<u64>,
    pub format: Option<Format>,
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
    pub stride: Option<u64>,
    pub max_len: Option<u64>,
    pub sample_count: Option<usize>,
    /// Variant stacks in shorthand.
    pub variants: Vec<String>,
}

impl Overrides {
    pub fn from_common(common: &CommonArgs) -> Self {
        Self {
            head_dim: common.head_dim,
            base: common.base,
            train_len: common.train_len,
            tune_len: common.tune_len,
            format: common.format,
            output: common.output.clone(),
            ..Self::default()
        }
    }
}

/// Fully resolved settings for one command.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub config: RopeConfig,
    pub format: Format,
    pub output: Option<PathBuf>,
    pub seed: u64,
    pub stride: u64,
    pub max_len: u64,
    pub sample_count: usize,
    pub variants: Vec<Vec<VariantSpec>>,
}

impl Settings {
    /// Flags win over the file, the file wins over `env_seed`, and
    /// `env_seed` wins over the built-in default seed.
    pub fn resolve(
        file: Option<&RunConfigFile>,
        flags: &Overrides,
        env_seed: Option<u64>,
    ) -> Result<Self, UsageError> {
        let rope = file.and_then(|f| f.rope.clone()).unwrap_or_default();
        let out = file.and_then(|f| f.output.clone()).unwrap_or_default();

        let head_dim = flags.head_dim.or(rope.head_dim).unwrap_or(DEFAULT_HEAD_DIM);
        if head_dim < 2 || !head_dim.is_multiple_of(2) {
            return Err(UsageError::new(
                "--d",
                format!("head dimension must be an even integer >= 2, got {head_dim}"),
            ));
        }
        let base = flags.base.or(rope.base).unwrap_or(DEFAULT_BASE);
        if !base.is_finite() || base <= 1.0 {
            return Err(UsageError::new(
                "--base",
                format!("rotary base must be > 1, got {base}"),
            ));
        }
        let train_len = flags
            .train_len
            .or(rope.train_len)
            .unwrap_or(DEFAULT_TRAIN_LEN);
        if train_len < 1 {
            return Err(UsageError::new(
                "--train-len",
                "training length must be at least 1",
            ));
        }
        let tune_len = flags.tune_len.or(rope.tune_len);
        if let Some(tune) = tune_len {
            if tune < train_len {
                return Err(UsageError::new(
                    "--tune-len",
                    format!("tuning length {tune} is shorter than training length {train_len}"),
                ));
            }
        }
        let config = RopeConfig {
            head_dim,
            base,
            train_len,
            tune_len,
        };

        let stride = flags.stride.or(out.stride).unwrap_or(DEFAULT_STRIDE);
        if stride < 1 {
            return Err(UsageError::new("--stride", "stride must be at least 1"));
        }
        let sample_count = flags
            .sample_count
            .or(out.sample_count)
            .unwrap_or(DEFAULT_SAMPLES);
        if sample_count < 1 {
            return Err(UsageError::new(
                "--samples",
                "sample count must be at least 1",
            ));
        }

        let variants = if flags.variants.is_empty() {
            file.and_then(|f| f.variants.clone())
                .unwrap_or_default()
                .into_iter()
                .map(|spec| {
                    spec.validate()
                        .map_err(|e| UsageError::new("--config", e.to_string()))?;
                    Ok(vec![spec])
                })
                .collect::<Result<Vec<_>, UsageError>>()?
        } else {
            flags
                .variants
                .iter()
                .map(|text| {
                    parse_stack(text).map_err(|e| UsageError::new("--variant", e.to_string()))
                })
                .collect::<Result<Vec<_>, _>>()?
        };

        Ok(Settings {
            config,
            format: flags.format.or(out.format).unwrap_or(Format::Json),
            output: flags.output.clone().or(out.path),
            seed: flags.seed.or(out.seed).or(env_seed).unwrap_or(DEFAULT_SEED),
            stride,
            max_len: flags.max_len.or(out.max_len).unwrap_or(DEFAULT_MAX_LEN),
            sample_count,
            variants,
        })
    }
}

/// Parses a token count such as `4096`, `128K` or `1M` (decimal multipliers).
pub fn parse_length(text: &str) -> Result<u64, UsageError> {
    let text = text.trim();
    let (digits, scale) = match text.chars().last() {
        Some('k' | 'K') => (&text[..text.len() - 1], 1_000),
        Some('m' | 'M') => (&text[..text.len() - 1], 1_000_000),
        _ => (text, 1),
    };
    let value: u64 = digits
        .parse()
        .map_err(|_| UsageError::new("--lengths", format!("cannot parse length `{text}`")))?;
    if value == 0 {
        return Err(UsageError::new("--lengths", "lengths must be positive"));
    }
    Ok(value * scale)
}
