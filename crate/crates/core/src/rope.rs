//! Rotary position embedding math.
//!
//! Every pair of feature dimensions `(v[2n], v[2n+1])` is treated as one
//! complex number and rotated by `position * theta_n`, where
//! `theta_n = base^(-2n/d)`. The attention logit between a rotated query at
//! `t` and a rotated key at `s` only depends on `t - s`, and this module
//! exposes it in two algebraically independent forms: the expanded
//! cosine/sine sum and the complex-exponential sum.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RopeError};

/// Base used by the original RoPE formulation and by the pre-trained models
/// the scaling laws are stated against.
pub const DEFAULT_BASE: f64 = 10_000.0;

/// Head shape of the reference model: 128 features per head, 4096 tokens.
pub const DEFAULT_HEAD_DIM: usize = 128;
pub const DEFAULT_TRAIN_LEN: u64 = 4096;

/// Parameters every formula consumes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RopeConfig {
    /// Features per attention head; even and at least 2.
    pub head_dim: usize,
    /// Rotary base, strictly greater than 1.
    pub base: f64,
    /// Context length used in (pre-)training.
    pub train_len: u64,
    /// Context length used for fine-tuning; `None` means `train_len`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tune_len: Option<u64>,
}

impl Default for RopeConfig {
    fn default() -> Self {
        Self {
            head_dim: DEFAULT_HEAD_DIM,
            base: DEFAULT_BASE,
            train_len: DEFAULT_TRAIN_LEN,
            tune_len: None,
        }
    }
}

impl RopeConfig {
    pub fn new(head_dim: usize, base: f64, train_len: u64) -> Result<Self> {
        let config = Self {
            head_dim,
            base,
            train_len,
            tune_len: None,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_tune_len(mut self, tune_len: u64) -> Result<Self> {
        self.tune_len = Some(tune_len);
        self.validate()?;
        Ok(self)
    }

    pub fn with_base(mut self, base: f64) -> Result<Self> {
        self.base = base;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        validate_head_dim(self.head_dim)?;
        validate_base(self.base)?;
        if self.train_len < 1 {
            return Err(RopeError::config("train_len must be at least 1"));
        }
        if let Some(tune) = self.tune_len {
            if tune < self.train_len {
                return Err(RopeError::config(format!(
                    "tune_len ({tune}) must not be shorter than train_len ({})",
                    self.train_len
                )));
            }
        }
        Ok(())
    }

    /// Effective tuning length, falling back to the training length.
    pub fn tune_len(&self) -> u64 {
        self.tune_len.unwrap_or(self.train_len)
    }

    /// Number of rotary pairs, `d / 2`.
    pub fn pairs(&self) -> usize {
        self.head_dim / 2
    }
}

pub(crate) fn validate_head_dim(head_dim: usize) -> Result<()> {
    if head_dim < 2 || !head_dim.is_multiple_of(2) {
        return Err(RopeError::config(format!(
            "head_dim must be an even integer >= 2, got {head_dim}"
        )));
    }
    Ok(())
}

pub(crate) fn validate_base(base: f64) -> Result<()> {
    if !base.is_finite() || base <= 1.0 {
        return Err(RopeError::config(format!(
            "rotary base must be a finite value > 1, got {base}"
        )));
    }
    Ok(())
}

/// Per-pair rotation speeds and the matching periods in tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotaryAngles {
    /// Radians per token for each pair, strictly decreasing from 1.
    pub theta: Vec<f64>,
    /// Tokens per full turn, `2π / theta`.
    pub period: Vec<f64>,
}

impl RotaryAngles {
    /// Angle schedule `theta_n = base^(-2n/d)` for `n = 0..d/2`.
    pub fn from_base(head_dim: usize, base: f64) -> Result<Self> {
        validate_head_dim(head_dim)?;
        validate_base(base)?;
        let ln_base = base.ln();
        let d = head_dim as f64;
        let (theta, period) = (0..head_dim / 2)
            .map(|n| {
                let exponent = 2.0 * n as f64 / d * ln_base;
                ((-exponent).exp(), TAU * exponent.exp())
            })
            .unzip();
        Ok(Self { theta, period })
    }

    pub fn pairs(&self) -> usize {
        self.theta.len()
    }

    pub fn head_dim(&self) -> usize {
        2 * self.theta.len()
    }
}

pub fn rotary_angles(config: &RopeConfig) -> Result<RotaryAngles> {
    config.validate()?;
    RotaryAngles::from_base(config.head_dim, config.base)
}

/// One query or key head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HeadVector(Vec<f64>);

impl HeadVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn ones(head_dim: usize) -> Self {
        Self(vec![1.0; head_dim])
    }

    pub fn zeros(head_dim: usize) -> Self {
        Self(vec![0.0; head_dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub(crate) fn check_len(&self, expected: usize) -> Result<()> {
        if self.0.len() != expected {
            return Err(RopeError::Dimension {
                expected,
                got: self.0.len(),
            });
        }
        Ok(())
    }
}

impl From<Vec<f64>> for HeadVector {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}

/// Attention logit together with each rotary pair's contribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub total: f64,
    pub per_dim: Vec<f64>,
}

impl ScoreBreakdown {
    pub(crate) fn from_terms(per_dim: Vec<f64>) -> Self {
        let total = per_dim.iter().sum();
        Self { total, per_dim }
    }

    /// Sums of the terms below and from `pair_split` on.
    pub fn split_at_pair(&self, pair_split: usize) -> (f64, f64) {
        let cut = pair_split.min(self.per_dim.len());
        let (head, tail) = self.per_dim.split_at(cut);
        (head.iter().sum(), tail.iter().sum())
    }
}

/// Rotates each pair `(v[2n], v[2n+1])` counter-clockwise by `phases[n]`.
pub fn rotate_pairs(v: &HeadVector, phases: &[f64]) -> Result<HeadVector> {
    v.check_len(2 * phases.len())?;
    let out = v
        .as_slice()
        .chunks_exact(2)
        .zip(phases)
        .flat_map(|(pair, &phase)| {
            let (sin, cos) = phase.sin_cos();
            [pair[0] * cos - pair[1] * sin, pair[0] * sin + pair[1] * cos]
        })
        .collect();
    Ok(HeadVector(out))
}

/// Deployed form: rotate a single head to an absolute position.
pub fn apply_rotation(v: &HeadVector, position: f64, angles: &RotaryAngles) -> Result<HeadVector> {
    check_position(position)?;
    let phases: Vec<f64> = angles.theta.iter().map(|theta| position * theta).collect();
    rotate_pairs(v, &phases)
}

fn check_position(p: f64) -> Result<()> {
    if !p.is_finite() || p < 0.0 {
        return Err(RopeError::config(format!(
            "positions must be finite and non-negative, got {p}"
        )));
    }
    Ok(())
}

pub(crate) fn check_causal(t: f64, s: f64) -> Result<()> {
    check_position(t)?;
    check_position(s)?;
    if s > t {
        return Err(RopeError::Ordering { t, s });
    }
    Ok(())
}

/// Real part of `q̃_n · conj(k̃_n) · e^{i·phase}` written out with cos and sin.
#[inline]
pub(crate) fn pair_term(q: &[f64], k: &[f64], n: usize, phase: f64) -> f64 {
    let (q0, q1) = (q[2 * n], q[2 * n + 1]);
    let (k0, k1) = (k[2 * n], k[2 * n + 1]);
    let (sin, cos) = phase.sin_cos();
    (q0 * k0 + q1 * k1) * cos + (q0 * k1 - q1 * k0) * sin
}

/// Per-pair relative phase `(t - s) · theta_n`, unwrapped.
pub fn relative_phase(t: f64, s: f64, angles: &RotaryAngles) -> Result<Vec<f64>> {
    check_causal(t, s)?;
    let rel = t - s;
    Ok(angles.theta.iter().map(|theta| rel * theta).collect())
}

/// Attention logit in the expanded trigonometric form.
pub fn attention_score_real(
    q: &HeadVector,
    k: &HeadVector,
    t: f64,
    s: f64,
    angles: &RotaryAngles,
) -> Result<ScoreBreakdown> {
    let d = angles.head_dim();
    q.check_len(d)?;
    k.check_len(d)?;
    let phases = relative_phase(t, s, angles)?;
    let (q, k) = (q.as_slice(), k.as_slice());
    let terms = phases
        .iter()
        .enumerate()
        .map(|(n, &phase)| pair_term(q, k, n, phase))
        .collect();
    Ok(ScoreBreakdown::from_terms(terms))
}

/// Attention logit computed on complex pairs: `Re Σ q̃_n · conj(k̃_n) · e^{i(t-s)θ_n}`.
pub fn attention_score_complex(
    q: &HeadVector,
    k: &HeadVector,
    t: f64,
    s: f64,
    angles: &RotaryAngles,
) -> Result<f64> {
    let d = angles.head_dim();
    q.check_len(d)?;
    k.check_len(d)?;
    let phases = relative_phase(t, s, angles)?;
    let sum: Complex64 = q
        .as_slice()
        .chunks_exact(2)
        .zip(k.as_slice().chunks_exact(2))
        .zip(phases)
        .map(|((qp, kp), phase)| {
            let q_c = Complex64::new(qp[0], qp[1]);
            let k_c = Complex64::new(kp[0], kp[1]);
            q_c * k_c.conj() * Complex64::cis(phase)
        })
        .sum();
    Ok(sum.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn head_128() -> RopeConfig {
        RopeConfig::new(128, 10_000.0, 4096).unwrap()
    }

    #[test]
    fn first_angle_is_one() {
        for (d, base) in [(2, 1.5), (64, 500.0), (128, 1e6)] {
            let angles = RotaryAngles::from_base(d, base).unwrap();
            assert_eq!(angles.theta[0], 1.0);
            assert_eq!(angles.period[0], TAU);
        }
    }

    #[test]
    fn last_angle_values() {
        // 10000^(-126/128) and 500^(-126/128), 40-digit reference evaluation.
        let a = RotaryAngles::from_base(128, 10_000.0).unwrap();
        assert!((a.theta[63] / 1.154_781_984_689_458e-4 - 1.0).abs() < 1e-12);
        let b = RotaryAngles::from_base(128, 500.0).unwrap();
        assert!((b.theta[63] / 2.203_948_296_545_364e-3 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn angles_monotone_and_periods_consistent() {
        let a = rotary_angles(&head_128()).unwrap();
        for n in 1..a.pairs() {
            assert!(a.theta[n] < a.theta[n - 1]);
            assert!(a.period[n] > a.period[n - 1]);
        }
        for (theta, period) in a.theta.iter().zip(&a.period) {
            assert!((theta * period / TAU - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(matches!(
            RopeConfig::new(127, 10_000.0, 4096),
            Err(RopeError::Config(_))
        ));
        assert!(matches!(
            RopeConfig::new(0, 10_000.0, 4096),
            Err(RopeError::Config(_))
        ));
        assert!(matches!(
            RopeConfig::new(128, 1.0, 4096),
            Err(RopeError::Config(_))
        ));
        assert!(matches!(
            RopeConfig::new(128, f64::NAN, 4096),
            Err(RopeError::Config(_))
        ));
        assert!(matches!(
            RopeConfig::new(128, 10_000.0, 0),
            Err(RopeError::Config(_))
        ));
        assert!(head_128().with_tune_len(2048).is_err());
        assert_eq!(head_128().with_tune_len(16384).unwrap().tune_len(), 16384);
        assert_eq!(head_128().tune_len(), 4096);
    }

    #[test]
    fn zero_position_is_identity() {
        let a = rotary_angles(&head_128()).unwrap();
        let v = HeadVector::new((0..128).map(|i| (i as f64 * 0.37).sin()).collect());
        assert_eq!(apply_rotation(&v, 0.0, &a).unwrap(), v);
    }

    #[test]
    fn quarter_turn() {
        let v = HeadVector::new(vec![1.0, 0.0]);
        let r = rotate_pairs(&v, &[FRAC_PI_2]).unwrap();
        assert!(r.as_slice()[0].abs() < 1e-12);
        assert!((r.as_slice()[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_length_mismatch() {
        let a = RotaryAngles::from_base(4, 10_000.0).unwrap();
        let err = apply_rotation(&HeadVector::ones(6), 3.0, &a).unwrap_err();
        assert_eq!(
            err,
            RopeError::Dimension {
                expected: 4,
                got: 6
            }
        );
    }

    #[test]
    fn relative_property_of_rotated_dot() {
        let a = RotaryAngles::from_base(4, 10_000.0).unwrap();
        let v = HeadVector::new(vec![1.0, 0.0, 1.0, 0.0]);
        let dot = |t: f64, s: f64| {
            let q = apply_rotation(&v, t, &a).unwrap();
            let k = apply_rotation(&v, s, &a).unwrap();
            q.as_slice()
                .iter()
                .zip(k.as_slice())
                .map(|(x, y)| x * y)
                .sum::<f64>()
        };
        let reference = dot(17.0, 5.0);
        for shift in [1.0, 100.0, 5000.0] {
            assert!((dot(17.0 + shift, 5.0 + shift) - reference).abs() < 1e-9);
        }
    }

    #[test]
    fn equal_positions_give_dot_product() {
        let a = RotaryAngles::from_base(8, 10_000.0).unwrap();
        let q = HeadVector::new(vec![0.5, -1.0, 2.0, 0.25, 1.5, -0.5, 0.0, 3.0]);
        let k = HeadVector::new(vec![1.0, 2.0, -1.0, 0.5, 0.5, 0.5, -2.0, 1.0]);
        let dot: f64 = q
            .as_slice()
            .iter()
            .zip(k.as_slice())
            .map(|(x, y)| x * y)
            .sum();
        let real = attention_score_real(&q, &k, 42.0, 42.0, &a).unwrap();
        assert!((real.total - dot).abs() < 1e-12);
        let complex = attention_score_complex(&q, &k, 42.0, 42.0, &a).unwrap();
        assert!((complex - dot).abs() < 1e-12);
    }

    #[test]
    fn single_active_pair_is_cosine() {
        let a = rotary_angles(&head_128()).unwrap();
        let mut e = vec![0.0; 128];
        e[0] = 1.0;
        let e = HeadVector::new(e);
        for delta in [1.0, 7.0, 1000.0] {
            let score = attention_score_real(&e, &e, 2000.0 + delta, 2000.0, &a).unwrap();
            assert!((score.total - f64::cos(delta)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_key_scores_zero() {
        let a = RotaryAngles::from_base(8, 10_000.0).unwrap();
        let q = HeadVector::ones(8);
        let k = HeadVector::zeros(8);
        assert_eq!(attention_score_complex(&q, &k, 9.0, 2.0, &a).unwrap(), 0.0);
    }

    #[test]
    fn score_rejects_acausal_pairs() {
        let a = RotaryAngles::from_base(8, 10_000.0).unwrap();
        let v = HeadVector::ones(8);
        assert!(matches!(
            attention_score_real(&v, &v, 3.0, 4.0, &a),
            Err(RopeError::Ordering { .. })
        ));
        assert!(matches!(
            attention_score_complex(&v, &v, 3.0, 4.0, &a),
            Err(RopeError::Ordering { .. })
        ));
        assert!(matches!(
            relative_phase(0.0, 1.0, &a),
            Err(RopeError::Ordering { .. })
        ));
    }

    #[test]
    fn breakdown_sums_to_total() {
        let a = RotaryAngles::from_base(16, 10_000.0).unwrap();
        let q = HeadVector::new((0..16).map(|i| (i as f64).cos()).collect());
        let k = HeadVector::new((0..16).map(|i| (i as f64 * 1.3).sin()).collect());
        let b = attention_score_real(&q, &k, 900.0, 13.0, &a).unwrap();
        let sum: f64 = b.per_dim.iter().sum();
        assert!((sum - b.total).abs() <= 1e-10 * b.total.abs().max(1.0));
        let (head, tail) = b.split_at_pair(5);
        assert!((head + tail - b.total).abs() < 1e-12);
    }

    #[test]
    fn relative_phase_values() {
        let a = rotary_angles(&head_128()).unwrap();
        assert!(relative_phase(10.0, 10.0, &a)
            .unwrap()
            .iter()
            .all(|&p| p == 0.0));
        let p = relative_phase(4096.0, 0.0, &a).unwrap();
        // 4096 · 10000^(-126/128)
        assert!((p[63] - 0.472_998_700_928_802).abs() < 1e-12);
        let n = 3;
        let rel = a.period[n];
        let p = relative_phase(rel, 0.0, &a).unwrap();
        assert!((p[n] - TAU).abs() < 1e-9);
    }
}
