//! Closed-form extrapolation predictors.
//!
//! A rotary pair is "covered" by a context of `T` tokens when its period
//! `2π·β^(2n/d)` fits inside `T`. The number of covered features is the
//! critical dimension; the period of the first uncovered pair under a new
//! base bounds how far a fine-tuned model extrapolates. Reducing the base
//! instead makes every pair cover a quarter turn, half turn or full turn
//! once it drops below the three pivot bases.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Result, RopeError};
use crate::rope::{validate_base, validate_head_dim, RopeConfig, DEFAULT_BASE};

/// Period of pair `n` in tokens.
pub fn period(n: usize, config: &RopeConfig) -> Result<f64> {
    config.validate()?;
    let pairs = config.pairs();
    if n >= pairs {
        return Err(RopeError::Index { index: n, pairs });
    }
    let exponent = 2.0 * n as f64 / config.head_dim as f64;
    Ok(TAU * config.base.powf(exponent))
}

/// Number of features whose period fits in `context` tokens:
/// `2·ceil((d/2)·log_β(context/2π))`, clamped to `[0, d]`.
pub fn critical_dimension(head_dim: usize, base: f64, context: f64) -> Result<usize> {
    validate_head_dim(head_dim)?;
    validate_base(base)?;
    if !context.is_finite() || context < 1.0 {
        return Err(RopeError::config(format!(
            "context length must be at least 1 token, got {context}"
        )));
    }
    let half = (head_dim / 2) as f64;
    let pairs = (half * (context / TAU).ln() / base.ln()).ceil();
    Ok(2 * pairs.clamp(0.0, half) as usize)
}

/// Bases below which every pair's trained phase reaches π/2, π and 2π.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pivots {
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
}

impl Pivots {
    /// Round-to-nearest integers, as the pivots are usually quoted.
    pub fn rounded(&self) -> [u64; 3] {
        [self.beta1, self.beta2, self.beta3].map(|b| b.round() as u64)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.beta1, self.beta2, self.beta3]
    }

    /// `β ≤ β_k` for each pivot, boundary inclusive.
    pub fn flags(&self, base: f64) -> [bool; 3] {
        self.as_array().map(|pivot| base <= pivot)
    }
}

pub fn smaller_base_pivots(context: f64) -> Result<Pivots> {
    if !context.is_finite() || context < 1.0 {
        return Err(RopeError::config(format!(
            "context length must be at least 1 token, got {context}"
        )));
    }
    Ok(Pivots {
        beta1: 2.0 * context / PI,
        beta2: context / PI,
        beta3: context / TAU,
    })
}

/// `2π·β^(d_extra/d)`: the period of pair `d_extra/2` under base `β`.
pub fn extrapolation_bound(head_dim: usize, base: f64, critical_dim: usize) -> Result<f64> {
    validate_head_dim(head_dim)?;
    validate_base(base)?;
    if critical_dim > head_dim {
        return Err(RopeError::config(format!(
            "critical dimension {critical_dim} exceeds head_dim {head_dim}"
        )));
    }
    Ok(TAU * base.powf(critical_dim as f64 / head_dim as f64))
}

/// Smallest base whose bound, at the pre-trained critical dimension, reaches
/// `tune_len`: `10000^(log_{train/2π}(tune/2π))`.
pub fn critical_base(train_len: f64, tune_len: f64) -> Result<f64> {
    if !train_len.is_finite() || train_len <= TAU {
        return Err(RopeError::config(format!(
            "train_len must exceed 2π tokens for a critical base, got {train_len}"
        )));
    }
    if !tune_len.is_finite() || tune_len < train_len {
        return Err(RopeError::config(format!(
            "tune_len ({tune_len}) must not be shorter than train_len ({train_len})"
        )));
    }
    let exponent = (tune_len / TAU).ln() / (train_len / TAU).ln();
    Ok(DEFAULT_BASE.powf(exponent))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    /// `β > β0`: bounded by the period of the first uncovered pair.
    LargerBase,
    /// `β ≤ β0`: the tuning length bounds extrapolation and more pairs are covered.
    SmallerOrEqualBase,
}

impl std::fmt::Display for Branch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Branch::LargerBase => "larger-base",
            Branch::SmallerOrEqualBase => "smaller-or-equal-base",
        })
    }
}

/// Everything the scaling laws predict for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub config: RopeConfig,
    /// Critical dimension of the model pre-trained at base 10000.
    pub critical_dim: usize,
    /// Critical dimension after tuning at the configured base.
    pub critical_dim_updated: usize,
    pub pivots: Pivots,
    pub pivots_rounded: [u64; 3],
    pub critical_base: f64,
    pub extrapolation_bound: f64,
    pub branch: Branch,
    pub pivot_flags: [bool; 3],
}

/// Unified law for any base and any tuning length `≥ train_len`.
pub fn extended_law(config: &RopeConfig) -> Result<ScalingReport> {
    config.validate()?;
    let d = config.head_dim;
    let train = config.train_len as f64;
    let tune = config.tune_len() as f64;

    let beta0 = critical_base(train, tune)?;
    let critical_dim = critical_dimension(d, DEFAULT_BASE, train)?;
    let pivots = smaller_base_pivots(tune)?;

    let (branch, critical_dim_updated, bound) = if config.base > beta0 {
        let bound = extrapolation_bound(d, config.base, critical_dim)?;
        (Branch::LargerBase, critical_dim, bound)
    } else {
        let updated = critical_dimension(d, config.base, tune)?;
        (Branch::SmallerOrEqualBase, updated, tune)
    };

    Ok(ScalingReport {
        config: *config,
        critical_dim,
        critical_dim_updated,
        pivots,
        pivots_rounded: pivots.rounded(),
        critical_base: beta0,
        extrapolation_bound: bound,
        branch,
        pivot_flags: pivots.flags(config.base),
    })
}
