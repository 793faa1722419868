//! Bid summaries, control-relative markers, the Mann-Whitney U test and
//! effect-size tiers.

mod effect;
mod mann_whitney;
mod marker;
mod summary;

use thiserror::Error;

pub use effect::{apply_bonferroni, effect_size, EffectSize, EffectTier, SIGNIFICANCE_LEVEL};
pub use mann_whitney::{
    mann_whitney_u, mann_whitney_u_normal, TestMethod, UTestResult, EXACT_MAX_TOTAL,
};
pub use marker::{classify_marker, classify_marker_values, MarkerClass, TIE_TOLERANCE};
pub use summary::{median, summarize, summarize_values, BidSummary, StdKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("sample is empty")]
    EmptySample,
    #[error("sample contains a non-finite value")]
    NonFinite,
}
