//! Rotary position embedding math, extrapolation variants, the closed-form
//! scaling laws that predict how far a RoPE model extrapolates, and
//! synthetic attention-score diagnostics.

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod rope;
pub mod scaling;
pub mod variants;

pub use diagnostics::{
    ood_split, phase_coverage, score_trace, synthetic_probes, unseen_phase_flags, AttentionTrace,
    CoverageReport, PhaseClass, TraceOptions,
};
pub use error::{Result, RopeError};
pub use rope::{
    apply_rotation, attention_score_complex, attention_score_real, relative_phase, rotary_angles,
    rotate_pairs, HeadVector, RopeConfig, RotaryAngles, ScoreBreakdown,
};
pub use scaling::{
    critical_base, critical_dimension, extended_law, extrapolation_bound, period,
    smaller_base_pivots, Branch, Pivots, ScalingReport,
};
pub use variants::{
    dynamic_ntk_alpha, effective_angles, list_variants, log_scale_factor, parse_stack, score,
    xpos_decay, CatalogEntry, Schedule, ScoreRequest, VariantKind, VariantSpec,
};
