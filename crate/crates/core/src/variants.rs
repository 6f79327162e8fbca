//! Extrapolation strategies as one scoring pipeline.
//!
//! Each variant plugs into some of four hooks: a position map (linear
//! interpolation, index clamping), an angle schedule (base scaling, fixed or
//! dynamic NTK), a per-pair decay (xPos) and a post-sum scale (truncation
//! rescaling, log-scaled attention). A [`Schedule`] resolves a stack of
//! variants against a [`RopeConfig`] once and then scores any number of
//! query/key pairs.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RopeError};
use crate::rope::{
    check_causal, pair_term, HeadVector, RopeConfig, RotaryAngles, ScoreBreakdown, DEFAULT_BASE,
};
use crate::scaling::{critical_dimension, extended_law};

pub const DEFAULT_XPOS_GAMMA: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VariantKind {
    #[serde(rename = "vanilla")]
    Vanilla,
    #[serde(rename = "base-scaled")]
    BaseScaled,
    #[serde(rename = "linear-pi")]
    LinearPi,
    #[serde(rename = "ntk-fixed")]
    NtkFixed,
    #[serde(rename = "ntk-dynamic")]
    NtkDynamic,
    #[serde(rename = "log-scaled")]
    LogScaled,
    #[serde(rename = "xpos")]
    XPos,
    #[serde(rename = "truncated")]
    Truncated,
    #[serde(rename = "position-clamp")]
    PositionClamp,
}

impl VariantKind {
    pub const ALL: [VariantKind; 9] = [
        VariantKind::Vanilla,
        VariantKind::BaseScaled,
        VariantKind::LinearPi,
        VariantKind::NtkFixed,
        VariantKind::NtkDynamic,
        VariantKind::LogScaled,
        VariantKind::XPos,
        VariantKind::Truncated,
        VariantKind::PositionClamp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VariantKind::Vanilla => "vanilla",
            VariantKind::BaseScaled => "base-scaled",
            VariantKind::LinearPi => "linear-pi",
            VariantKind::NtkFixed => "ntk-fixed",
            VariantKind::NtkDynamic => "ntk-dynamic",
            VariantKind::LogScaled => "log-scaled",
            VariantKind::XPos => "xpos",
            VariantKind::Truncated => "truncated",
            VariantKind::PositionClamp => "position-clamp",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        let kind = match name {
            "base" => VariantKind::BaseScaled,
            "clamp" => VariantKind::PositionClamp,
            "ntk" => VariantKind::NtkFixed,
            "log" => VariantKind::LogScaled,
            other => return Self::ALL.into_iter().find(|k| k.name() == other),
        };
        Some(kind)
    }
}

impl fmt::Display for VariantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A named extrapolation strategy with its parameters.
///
/// Only the fields relevant to `kind` are read. `base` defaults to the
/// config's base; `t_extra_ref` defaults to the extrapolation bound the
/// scaling law predicts for the resolved base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantSpec {
    pub kind: VariantKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_extra_ref: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keep_dims: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clamp_index: Option<u64>,
}

impl VariantSpec {
    pub fn new(kind: VariantKind) -> Self {
        Self {
            kind,
            base: None,
            lambda: None,
            alpha: None,
            gamma: None,
            t_extra_ref: None,
            keep_dims: None,
            clamp_index: None,
        }
    }

    pub fn vanilla() -> Self {
        Self::new(VariantKind::Vanilla)
    }

    pub fn base_scaled(base: f64) -> Self {
        Self {
            base: Some(base),
            ..Self::new(VariantKind::BaseScaled)
        }
    }

    pub fn linear_pi(lambda: f64) -> Self {
        Self {
            lambda: Some(lambda),
            ..Self::new(VariantKind::LinearPi)
        }
    }

    pub fn ntk_fixed(alpha: f64) -> Self {
        Self {
            alpha: Some(alpha),
            ..Self::new(VariantKind::NtkFixed)
        }
    }

    pub fn ntk_dynamic(t_extra_ref: Option<f64>) -> Self {
        Self {
            t_extra_ref,
            ..Self::new(VariantKind::NtkDynamic)
        }
    }

    pub fn log_scaled(t_extra_ref: Option<f64>) -> Self {
        Self {
            t_extra_ref,
            ..Self::new(VariantKind::LogScaled)
        }
    }

    pub fn xpos(gamma: f64, t_extra_ref: Option<f64>) -> Self {
        Self {
            gamma: Some(gamma),
            t_extra_ref,
            ..Self::new(VariantKind::XPos)
        }
    }

    pub fn truncated(keep_dims: usize) -> Self {
        Self {
            keep_dims: Some(keep_dims),
            ..Self::new(VariantKind::Truncated)
        }
    }

    pub fn position_clamp(clamp_index: u64) -> Self {
        Self {
            clamp_index: Some(clamp_index),
            ..Self::new(VariantKind::PositionClamp)
        }
    }

    pub fn with_base(mut self, base: f64) -> Self {
        self.base = Some(base);
        self
    }

    pub fn gamma(&self) -> f64 {
        self.gamma.unwrap_or(DEFAULT_XPOS_GAMMA)
    }

    /// Checks the parameters the kind consumes.
    pub fn validate(&self) -> Result<()> {
        if let Some(base) = self.base {
            if !base.is_finite() || base <= 1.0 {
                return Err(RopeError::spec(format!(
                    "{}: base must be > 1, got {base}",
                    self.kind
                )));
            }
        }
        if let Some(r) = self.t_extra_ref {
            if self.uses_reference() && (!r.is_finite() || r <= 1.0) {
                return Err(RopeError::spec(format!(
                    "{}: t_extra_ref must be > 1, got {r}",
                    self.kind
                )));
            }
        }
        match self.kind {
            VariantKind::Vanilla | VariantKind::NtkDynamic | VariantKind::LogScaled => {}
            VariantKind::BaseScaled => {
                if self.base.is_none() {
                    return Err(RopeError::spec("base-scaled requires a base"));
                }
            }
            VariantKind::LinearPi => match self.lambda {
                Some(l) if l.is_finite() && l > 0.0 => {}
                other => {
                    return Err(RopeError::spec(format!(
                        "linear-pi requires lambda > 0, got {other:?}"
                    )))
                }
            },
            VariantKind::NtkFixed => match self.alpha {
                Some(a) if a.is_finite() && a >= 1.0 => {}
                other => {
                    return Err(RopeError::spec(format!(
                        "ntk-fixed requires alpha >= 1, got {other:?}"
                    )))
                }
            },
            VariantKind::XPos => {
                let g = self.gamma();
                if !g.is_finite() || g <= 0.0 {
                    return Err(RopeError::spec(format!("xpos requires gamma > 0, got {g}")));
                }
            }
            VariantKind::Truncated => match self.keep_dims {
                Some(k) if k >= 2 && k % 2 == 0 => {}
                other => {
                    return Err(RopeError::spec(format!(
                        "truncated requires an even keep_dims >= 2, got {other:?}"
                    )))
                }
            },
            VariantKind::PositionClamp => match self.clamp_index {
                Some(c) if c >= 1 => {}
                other => {
                    return Err(RopeError::spec(format!(
                        "position-clamp requires clamp_index >= 1, got {other:?}"
                    )))
                }
            },
        }
        Ok(())
    }

    fn uses_reference(&self) -> bool {
        matches!(
            self.kind,
            VariantKind::NtkDynamic | VariantKind::LogScaled | VariantKind::XPos
        )
    }

    /// Position after this variant's position map, before and after clamping.
    pub fn mapped_position(&self, t: f64) -> MappedPosition {
        let unclamped = match (self.kind, self.lambda) {
            (VariantKind::LinearPi, Some(lambda)) => t / lambda,
            _ => t,
        };
        let clamped = match (self.kind, self.clamp_index) {
            (VariantKind::PositionClamp, Some(c)) => unclamped.min(c as f64),
            _ => unclamped,
        };
        MappedPosition { unclamped, clamped }
    }
}

impl fmt::Display for VariantSpec {
    /// Shorthand form accepted by [`FromStr`].
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut params: Vec<String> = Vec::new();
        match self.kind {
            VariantKind::Vanilla => {}
            VariantKind::BaseScaled => params.extend(self.base.map(|b| b.to_string())),
            VariantKind::LinearPi => params.extend(self.lambda.map(|l| l.to_string())),
            VariantKind::NtkFixed => params.extend(self.alpha.map(|a| a.to_string())),
            VariantKind::NtkDynamic | VariantKind::LogScaled => {
                params.extend(self.t_extra_ref.map(|r| r.to_string()))
            }
            VariantKind::XPos => {
                params.push(self.gamma().to_string());
                params.extend(self.t_extra_ref.map(|r| r.to_string()));
            }
            VariantKind::Truncated => params.extend(self.keep_dims.map(|k| k.to_string())),
            VariantKind::PositionClamp => params.extend(self.clamp_index.map(|c| c.to_string())),
        }
        f.write_str(self.kind.name())?;
        if !params.is_empty() {
            write!(f, ":{}", params.join(","))?;
        }
        if self.kind != VariantKind::BaseScaled {
            if let Some(base) = self.base {
                write!(f, "@{base}")?;
            }
        }
        Ok(())
    }
}

impl FromStr for VariantSpec {
    type Err = RopeError;

    /// Parses `kind[:param[,param]][@base]`, e.g. `ntk-fixed:8`,
    /// `truncated:92`, `xpos:0.4,16384`, `log-scaled@500`.
    fn from_str(text: &str) -> Result<Self> {
        let text = text.trim();
        let (body, base) = match text.split_once('@') {
            Some((body, base)) => (body, Some(parse_num::<f64>(base, "base")?)),
            None => (text, None),
        };
        let (name, params) = match body.split_once([':', '=']) {
            Some((name, params)) => (name, params.split(',').map(str::trim).collect::<Vec<_>>()),
            None => (body, Vec::new()),
        };
        let kind = VariantKind::from_name(name.trim())
            .ok_or_else(|| RopeError::spec(format!("unknown variant kind `{name}`")))?;

        let max_params = if kind == VariantKind::XPos { 2 } else { 1 };
        if params.len() > max_params || (kind == VariantKind::Vanilla && !params.is_empty()) {
            return Err(RopeError::spec(format!("too many parameters in `{text}`")));
        }
        let first = params.first().copied();
        let need = |what: &str| {
            first.ok_or_else(|| RopeError::spec(format!("{kind} needs a {what} parameter")))
        };

        let mut spec = match kind {
            VariantKind::Vanilla => VariantSpec::vanilla(),
            VariantKind::BaseScaled => VariantSpec::base_scaled(parse_num(need("base")?, "base")?),
            VariantKind::LinearPi => VariantSpec::linear_pi(parse_num(need("lambda")?, "lambda")?),
            VariantKind::NtkFixed => VariantSpec::ntk_fixed(parse_num(need("alpha")?, "alpha")?),
            VariantKind::NtkDynamic => {
                VariantSpec::ntk_dynamic(first.map(|p| parse_num(p, "t_extra_ref")).transpose()?)
            }
            VariantKind::LogScaled => {
                VariantSpec::log_scaled(first.map(|p| parse_num(p, "t_extra_ref")).transpose()?)
            }
            VariantKind::XPos => {
                let gamma = first.map(|p| parse_num(p, "gamma")).transpose()?;
                let reference = params
                    .get(1)
                    .map(|p| parse_num(p, "t_extra_ref"))
                    .transpose()?;
                VariantSpec::xpos(gamma.unwrap_or(DEFAULT_XPOS_GAMMA), reference)
            }
            VariantKind::Truncated => {
                VariantSpec::truncated(parse_num(need("keep_dims")?, "keep_dims")?)
            }
            VariantKind::PositionClamp => {
                VariantSpec::position_clamp(parse_num(need("clamp_index")?, "clamp_index")?)
            }
        };
        if let Some(base) = base {
            spec.base = Some(base);
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn parse_num<T: FromStr>(text: &str, what: &str) -> Result<T> {
    text.trim()
        .parse()
        .map_err(|_| RopeError::spec(format!("cannot parse {what} from `{text}`")))
}

/// Parses a `+`-joined stack of shorthand variants, e.g. `base:500+log-scaled`.
pub fn parse_stack(text: &str) -> Result<Vec<VariantSpec>> {
    text.split('+').map(str::parse).collect()
}

pub fn stack_label(stack: &[VariantSpec]) -> String {
    stack
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("+")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MappedPosition {
    /// Position after interpolation.
    pub unclamped: f64,
    /// Position seen by pairs beyond the critical dimension.
    pub clamped: f64,
}

/// NTK coefficient at inference length `t`: `max(1, 2^(ceil(log2(t/ref))+1) − 1)`.
pub fn dynamic_ntk_alpha(t: f64, t_extra_ref: f64) -> f64 {
    if t <= t_extra_ref {
        return 1.0;
    }
    let steps = (t / t_extra_ref).log2().ceil();
    (2f64.powf(steps + 1.0) - 1.0).max(1.0)
}

/// Log-scaled attention factor `max(1, log_ref(t))`.
pub fn log_scale_factor(t: f64, t_extra_ref: f64) -> f64 {
    if t <= 1.0 {
        return 1.0;
    }
    (t.ln() / t_extra_ref.ln()).max(1.0)
}

/// xPos per-pair decay `ζ_n^(rel/ref)` with `ζ_n = (γ + 2n/d)/(γ + 1)`.
pub fn xpos_decay(
    n: usize,
    rel: f64,
    config: &RopeConfig,
    gamma: f64,
    t_extra_ref: f64,
) -> Result<f64> {
    let pairs = config.pairs();
    if n >= pairs {
        return Err(RopeError::Index { index: n, pairs });
    }
    Ok(xpos_zeta(n, config.head_dim, gamma).powf(rel / t_extra_ref))
}

fn xpos_zeta(n: usize, head_dim: usize, gamma: f64) -> f64 {
    (gamma + 2.0 * n as f64 / head_dim as f64) / (gamma + 1.0)
}

/// A variant stack resolved against a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    head_dim: usize,
    base: f64,
    fixed_alpha: f64,
    dynamic_ref: Option<f64>,
    lambda: f64,
    xpos: Option<(f64, f64)>,
    keep_pairs: usize,
    clamp: Option<(f64, usize)>,
    log_ref: Option<f64>,
}

impl Schedule {
    pub fn new(stack: &[VariantSpec], config: &RopeConfig) -> Result<Self> {
        config.validate()?;
        let mut seen = Vec::new();
        let mut base: Option<f64> = None;
        for spec in stack {
            spec.validate()?;
            if spec.kind != VariantKind::Vanilla {
                if seen.contains(&spec.kind) {
                    return Err(RopeError::spec(format!(
                        "{} appears twice in one stack",
                        spec.kind
                    )));
                }
                seen.push(spec.kind);
            }
            if let Some(b) = spec.base {
                match base {
                    Some(prev) if prev != b => {
                        return Err(RopeError::spec(format!(
                            "conflicting bases {prev} and {b} in one stack"
                        )))
                    }
                    _ => base = Some(b),
                }
            }
        }
        let base = base.unwrap_or(config.base);
        let d = config.head_dim;

        // Bound predicted for the resolved base, used when a variant leaves
        // t_extra_ref unset.
        let mut predicted: Option<f64> = None;
        let mut reference = |spec: &VariantSpec| -> Result<f64> {
            if let Some(r) = spec.t_extra_ref {
                return Ok(r);
            }
            if let Some(p) = predicted {
                return Ok(p);
            }
            let p = extended_law(&config.with_base(base)?)?.extrapolation_bound;
            predicted = Some(p);
            Ok(p)
        };

        let mut schedule = Schedule {
            head_dim: d,
            base,
            fixed_alpha: 1.0,
            dynamic_ref: None,
            lambda: 1.0,
            xpos: None,
            keep_pairs: d / 2,
            clamp: None,
            log_ref: None,
        };
        for spec in stack {
            match spec.kind {
                VariantKind::Vanilla | VariantKind::BaseScaled => {}
                VariantKind::LinearPi => schedule.lambda = spec.lambda.unwrap_or(1.0),
                VariantKind::NtkFixed => schedule.fixed_alpha = spec.alpha.unwrap_or(1.0),
                VariantKind::NtkDynamic => schedule.dynamic_ref = Some(reference(spec)?),
                VariantKind::LogScaled => schedule.log_ref = Some(reference(spec)?),
                VariantKind::XPos => schedule.xpos = Some((spec.gamma(), reference(spec)?)),
                VariantKind::Truncated => {
                    let keep = spec.keep_dims.unwrap_or(d);
                    if keep > d {
                        return Err(RopeError::spec(format!(
                            "truncated keep_dims {keep} exceeds head_dim {d}"
                        )));
                    }
                    schedule.keep_pairs = keep / 2;
                }
                VariantKind::PositionClamp => {
                    let boundary = critical_dimension(d, DEFAULT_BASE, config.train_len as f64)?;
                    let index = spec.clamp_index.unwrap_or(u64::MAX) as f64;
                    schedule.clamp = Some((index, boundary / 2));
                }
            }
        }
        Ok(schedule)
    }

    pub fn base(&self) -> f64 {
        self.base
    }

    pub fn head_dim(&self) -> usize {
        self.head_dim
    }

    /// Total NTK coefficient at inference position `t`.
    pub fn alpha_at(&self, t: f64) -> f64 {
        let dynamic = self.dynamic_ref.map_or(1.0, |r| dynamic_ntk_alpha(t, r));
        self.fixed_alpha * dynamic
    }

    pub fn angles_at(&self, t: f64) -> Result<RotaryAngles> {
        RotaryAngles::from_base(self.head_dim, self.base * self.alpha_at(t))
    }

    /// Multiplier applied after the per-pair sum.
    pub fn post_scale(&self, t: f64) -> f64 {
        let pairs = self.head_dim / 2;
        let truncation = if self.keep_pairs < pairs {
            (pairs as f64 / self.keep_pairs as f64).sqrt()
        } else {
            1.0
        };
        let log = self.log_ref.map_or(1.0, |r| log_scale_factor(t, r));
        truncation * log
    }

    pub fn score(&self, q: &HeadVector, k: &HeadVector, t: f64, s: f64) -> Result<ScoreBreakdown> {
        q.check_len(self.head_dim)?;
        k.check_len(self.head_dim)?;
        check_causal(t, s)?;
        let angles = self.angles_at(t)?;
        let (t_map, s_map) = (t / self.lambda, s / self.lambda);
        let (t_clamped, s_clamped, clamp_from) = match self.clamp {
            Some((index, from)) => (t_map.min(index), s_map.min(index), from),
            None => (t_map, s_map, usize::MAX),
        };
        let rel = t - s;
        let post = self.post_scale(t);
        let (q, k) = (q.as_slice(), k.as_slice());

        let terms = angles
            .theta
            .iter()
            .enumerate()
            .map(|(n, theta)| {
                if n >= self.keep_pairs {
                    return 0.0;
                }
                let phase = if n >= clamp_from {
                    (t_clamped - s_clamped) * theta
                } else {
                    (t_map - s_map) * theta
                };
                let mut term = pair_term(q, k, n, phase);
                if let Some((gamma, reference)) = self.xpos {
                    term *= xpos_zeta(n, self.head_dim, gamma).powf(rel / reference);
                }
                term * post
            })
            .collect();
        Ok(ScoreBreakdown::from_terms(terms))
    }
}

/// Angle schedule a single variant uses at inference position `t`.
pub fn effective_angles(
    variant: &VariantSpec,
    config: &RopeConfig,
    t: f64,
) -> Result<RotaryAngles> {
    Schedule::new(std::slice::from_ref(variant), config)?.angles_at(t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub q: HeadVector,
    pub k: HeadVector,
    pub t: f64,
    pub s: f64,
    pub config: RopeConfig,
    pub variant: VariantSpec,
}

pub fn score(request: &ScoreRequest) -> Result<ScoreBreakdown> {
    Schedule::new(std::slice::from_ref(&request.variant), &request.config)?
        .score(&request.q, &request.k, request.t, request.s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub name: String,
    pub spec: VariantSpec,
}

/// Presets for the strategies compared in the experiments.
///
/// Inference-time variants leave `t_extra_ref` unset; it resolves to the
/// predicted bound for the config's base, which is the tuning length for
/// bases at or below the critical base (base 500 in particular).
pub fn list_variants() -> Vec<CatalogEntry> {
    const BASES: [f64; 12] = [
        500.0,
        652.0,
        1304.0,
        2608.0,
        10_000.0,
        40_000.0,
        80_000.0,
        120_000.0,
        160_000.0,
        400_000.0,
        600_000.0,
        1_000_000.0,
    ];
    let mut entries: Vec<CatalogEntry> = vec![CatalogEntry {
        name: "vanilla".into(),
        spec: VariantSpec::vanilla(),
    }];
    entries.extend(BASES.iter().map(|&b| CatalogEntry {
        name: format!("base={b}"),
        spec: VariantSpec::base_scaled(b),
    }));
    let others = [
        VariantSpec::ntk_fixed(8.0),
        VariantSpec::linear_pi(2.0),
        VariantSpec::linear_pi(4.0),
        VariantSpec::ntk_dynamic(None),
        VariantSpec::log_scaled(None),
        VariantSpec::xpos(DEFAULT_XPOS_GAMMA, None),
        VariantSpec::truncated(92),
        VariantSpec::position_clamp(4096),
    ];
    entries.extend(others.into_iter().map(|spec| CatalogEntry {
        name: spec.to_string(),
        spec,
    }));
    entries
}
