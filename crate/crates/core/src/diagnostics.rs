//! Phase coverage and reliable/OOD attention-score decomposition.
//!
//! Pairs whose period fits in the training context have seen every phase
//! during training; the remaining pairs ("OOD" pairs) produce attention
//! contributions at long range that the model never saw. These helpers
//! quantify both sides on synthetic query/key probes.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RopeError};
use crate::rope::{attention_score_real, rotary_angles, HeadVector, RopeConfig, DEFAULT_BASE};
use crate::scaling::critical_dimension;
use crate::variants::{stack_label, Schedule, VariantSpec};

/// How far a pair's phase travels within a context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseClass {
    /// At least one full turn.
    FullPeriod,
    ReachedPi,
    ReachedHalfPi,
    Partial,
}

impl PhaseClass {
    pub fn of(max_phase: f64) -> Self {
        if max_phase >= TAU {
            PhaseClass::FullPeriod
        } else if max_phase >= PI {
            PhaseClass::ReachedPi
        } else if max_phase >= FRAC_PI_2 {
            PhaseClass::ReachedHalfPi
        } else {
            PhaseClass::Partial
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PhaseClass::FullPeriod => "full-period",
            PhaseClass::ReachedPi => "reached-pi",
            PhaseClass::ReachedHalfPi => "reached-half-pi",
            PhaseClass::Partial => "partial",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub head_dim: usize,
    pub base: f64,
    pub train_len: u64,
    pub context_len: u64,
    pub theta: Vec<f64>,
    pub period: Vec<f64>,
    pub per_dim_class: Vec<PhaseClass>,
    /// Whether the phase at distance `context_len` lies outside the arc
    /// covered during training at `train_len`.
    pub unseen: Vec<bool>,
    /// Number of features (twice the pairs) that complete a full period.
    pub covered_count: usize,
    pub first_uncovered_pair: Option<usize>,
}

/// One CSV row of a [`CoverageReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub pair: usize,
    pub theta: f64,
    pub period: f64,
    pub class: PhaseClass,
    pub unseen: bool,
}

impl CoverageReport {
    pub fn rows(&self) -> Vec<CoverageRow> {
        (0..self.theta.len())
            .map(|n| CoverageRow {
                pair: n,
                theta: self.theta[n],
                period: self.period[n],
                class: self.per_dim_class[n],
                unseen: self.unseen[n],
            })
            .collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        write_csv(self.rows())
    }
}

pub fn phase_coverage(config: &RopeConfig, context_len: u64) -> Result<CoverageReport> {
    if context_len < 1 {
        return Err(RopeError::config("context length must be at least 1 token"));
    }
    let angles = rotary_angles(config)?;
    let context = context_len as f64;
    let per_dim_class: Vec<PhaseClass> = angles
        .theta
        .iter()
        .map(|theta| PhaseClass::of(context * theta))
        .collect();
    let full = per_dim_class
        .iter()
        .take_while(|&&c| c == PhaseClass::FullPeriod)
        .count();
    let first_uncovered_pair = (full < per_dim_class.len()).then_some(full);
    let unseen = unseen_phase_flags(config, context_len)?;
    Ok(CoverageReport {
        head_dim: config.head_dim,
        base: config.base,
        train_len: config.train_len,
        context_len,
        theta: angles.theta,
        period: angles.period,
        per_dim_class,
        unseen,
        covered_count: 2 * full,
        first_uncovered_pair,
    })
}

/// Splits the vanilla score into the pairs below `d_split / 2` and the rest.
pub fn ood_split(
    q: &HeadVector,
    k: &HeadVector,
    t: f64,
    s: f64,
    config: &RopeConfig,
    d_split: usize,
) -> Result<(f64, f64)> {
    check_split(d_split, config.head_dim)?;
    let angles = rotary_angles(config)?;
    let breakdown = attention_score_real(q, k, t, s, &angles)?;
    Ok(breakdown.split_at_pair(d_split / 2))
}

fn check_split(d_split: usize, head_dim: usize) -> Result<()> {
    if !d_split.is_multiple_of(2) || d_split > head_dim {
        return Err(RopeError::config(format!(
            "split dimension must be even and at most {head_dim}, got {d_split}"
        )));
    }
    Ok(())
}

/// For each pair, whether the phase at relative distance `rel` falls outside
/// the arc `[0, train_len·θ_n]` reached during training. Pairs that complete
/// a full period within `train_len` are never flagged.
pub fn unseen_phase_flags(config: &RopeConfig, rel: u64) -> Result<Vec<bool>> {
    if rel < 1 {
        return Err(RopeError::config("relative distance must be at least 1"));
    }
    let angles = rotary_angles(config)?;
    let train = config.train_len as f64;
    let rel = rel as f64;
    Ok(angles
        .theta
        .iter()
        .zip(&angles.period)
        .map(|(theta, &period)| {
            if period <= train {
                return false;
            }
            (rel * theta).rem_euclid(TAU) > train * theta
        })
        .collect())
}

/// Grid and sampling parameters for [`score_trace`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceOptions {
    pub max_len: u64,
    pub stride: u64,
    pub sample_count: usize,
    /// Seed 0 selects the all-ones probe.
    pub seed: u64,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self {
            max_len: 32_768,
            stride: 256,
            sample_count: 16,
            seed: 42,
        }
    }
}

/// Mean attention scores per relative distance, split at the critical dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionTrace {
    pub variant: String,
    pub seed: u64,
    pub sample_count: usize,
    pub d_split: usize,
    pub rel_distances: Vec<u64>,
    pub reliable_mean: Vec<f64>,
    pub ood_mean: Vec<f64>,
    pub total_mean: Vec<f64>,
    /// Largest sample value at each distance (signed).
    pub reliable_max: Vec<f64>,
    pub ood_max: Vec<f64>,
    pub total_max: Vec<f64>,
}

/// One CSV row of an [`AttentionTrace`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub rel: u64,
    pub reliable_mean: f64,
    pub ood_mean: f64,
    pub total_mean: f64,
}

impl AttentionTrace {
    pub fn rows(&self) -> Vec<TraceRow> {
        (0..self.rel_distances.len())
            .map(|i| TraceRow {
                rel: self.rel_distances[i],
                reliable_mean: self.reliable_mean[i],
                ood_mean: self.ood_mean[i],
                total_mean: self.total_mean[i],
            })
            .collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        write_csv(self.rows())
    }

    /// Largest `|ood_mean|` over distances in `lo..=hi`.
    pub fn max_abs_ood(&self, lo: u64, hi: u64) -> Option<f64> {
        self.rel_distances
            .iter()
            .zip(&self.ood_mean)
            .filter(|(&rel, _)| rel >= lo && rel <= hi)
            .map(|(_, v)| v.abs())
            .reduce(f64::max)
    }
}

/// Seeded query/key probes with components uniform in `[-1, 1)`.
///
/// Seed 0 yields all-ones vectors, whose scores have closed forms.
pub fn synthetic_probes(head_dim: usize, count: usize, seed: u64) -> Vec<(HeadVector, HeadVector)> {
    if seed == 0 {
        return vec![(HeadVector::ones(head_dim), HeadVector::ones(head_dim)); count];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| {
        HeadVector::new((0..head_dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
    };
    (0..count)
        .map(|_| {
            let q = draw(&mut rng);
            let k = draw(&mut rng);
            (q, k)
        })
        .collect()
}

/// Scores the probes at every distance `stride, 2·stride, … ≤ max_len`
/// with the query at position `rel` and the key at 0.
///
/// Distances are evaluated in parallel; each distance reduces its samples in
/// a fixed order, so output does not depend on the thread count.
pub fn score_trace(
    config: &RopeConfig,
    stack: &[VariantSpec],
    options: &TraceOptions,
) -> Result<AttentionTrace> {
    if options.stride < 1 {
        return Err(RopeError::config("stride must be at least 1"));
    }
    if options.sample_count < 1 {
        return Err(RopeError::config("sample_count must be at least 1"));
    }
    let schedule = Schedule::new(stack, config)?;
    let d_split = critical_dimension(config.head_dim, DEFAULT_BASE, config.train_len as f64)?;
    let pair_split = d_split / 2;
    let probes = synthetic_probes(config.head_dim, options.sample_count, options.seed);
    let distances: Vec<u64> = (1..=options.max_len / options.stride)
        .map(|i| i * options.stride)
        .collect();

    let rows = distances
        .par_iter()
        .map(|&rel| -> Result<[f64; 6]> {
            let mut sums = [0.0; 3];
            let mut maxima = [f64::NEG_INFINITY; 3];
            for (q, k) in &probes {
                let b = schedule.score(q, k, rel as f64, 0.0)?;
                let (reliable, ood) = b.split_at_pair(pair_split);
                for (i, v) in [reliable, ood, b.total].into_iter().enumerate() {
                    sums[i] += v;
                    maxima[i] = maxima[i].max(v);
                }
            }
            let n = probes.len() as f64;
            Ok([
                sums[0] / n,
                sums[1] / n,
                sums[2] / n,
                maxima[0],
                maxima[1],
                maxima[2],
            ])
        })
        .collect::<Result<Vec<_>>>()?;

    let column = |i: usize| rows.iter().map(|r| r[i]).collect::<Vec<f64>>();
    Ok(AttentionTrace {
        variant: if stack.is_empty() {
            "vanilla".into()
        } else {
            stack_label(stack)
        },
        seed: options.seed,
        sample_count: options.sample_count,
        d_split,
        rel_distances: distances,
        reliable_mean: column(0),
        ood_mean: column(1),
        total_mean: column(2),
        reliable_max: column(3),
        ood_max: column(4),
        total_max: column(5),
    })
}

pub(crate) fn write_csv<R: Serialize>(rows: impl IntoIterator<Item = R>) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer
            .serialize(row)
            .map_err(|e| RopeError::config(format!("csv encoding failed: {e}")))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| RopeError::config(format!("csv encoding failed: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
