use serde::{Deserialize, Serialize};

use super::UTestResult;

/// Rejection threshold for the two-sided test.
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EffectTier {
    Small,
    Medium,
    Large,
}

impl EffectTier {
    /// `r < 0.3` small, `0.3 <= r <= 0.5` medium, `r > 0.5` large.
    pub fn for_r(r: f64) -> Self {
        if r < 0.3 {
            EffectTier::Small
        } else if r <= 0.5 {
            EffectTier::Medium
        } else {
            EffectTier::Large
        }
    }
}

/// Effect size `r = |z| / sqrt(n1 + n2)` of a rank test. Only defined when
/// the test is significant; otherwise it renders as `--`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectSize {
    pub r: f64,
    pub tier: Option<EffectTier>,
    pub defined: bool,
}

impl EffectSize {
    /// Classify an already computed `(p, r)` pair.
    pub fn from_p_and_r(p: f64, r: f64) -> Self {
        let r = r.abs();
        if p < SIGNIFICANCE_LEVEL {
            EffectSize {
                r,
                tier: Some(EffectTier::for_r(r)),
                defined: true,
            }
        } else {
            EffectSize {
                r,
                tier: None,
                defined: false,
            }
        }
    }
}

pub fn effect_size(test: &UTestResult, n1: usize, n2: usize) -> EffectSize {
    let r = test.z.abs() / ((n1 + n2) as f64).sqrt();
    EffectSize::from_p_and_r(test.p, r)
}

/// Bonferroni adjustment for `comparisons` simultaneous tests.
pub fn apply_bonferroni(p: f64, comparisons: usize) -> f64 {
    (p * comparisons.max(1) as f64).min(1.0)
}
