use serde::{Deserialize, Serialize};

use super::BidSummary;

/// Position of a persona's mean bid relative to the control's mean and
/// standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MarkerClass {
    /// Above the control mean, within one standard deviation.
    Up,
    /// Above control mean + std.
    UpBeyondStd,
    /// At or below the control mean, within one standard deviation.
    Down,
    /// Below control mean - std.
    DownBeyondStd,
}

impl MarkerClass {
    pub fn is_up(self) -> bool {
        matches!(self, MarkerClass::Up | MarkerClass::UpBeyondStd)
    }

    /// Machine glyph: `^`, `^!`, `v`, `v!`.
    pub fn glyph(self) -> &'static str {
        match self {
            MarkerClass::Up => "^",
            MarkerClass::UpBeyondStd => "^!",
            MarkerClass::Down => "v",
            MarkerClass::DownBeyondStd => "v!",
        }
    }

    pub fn arrow(self) -> &'static str {
        match self {
            MarkerClass::Up => "↑",
            MarkerClass::UpBeyondStd => "⇑",
            MarkerClass::Down => "↓",
            MarkerClass::DownBeyondStd => "⇓",
        }
    }
}

/// Values closer than this compare as equal, so that decimal inputs such as
/// `0.13 + 0.20` versus `0.33` land on the tie side of a boundary.
pub const TIE_TOLERANCE: f64 = 1e-9;

pub fn classify_marker(persona: &BidSummary, control: &BidSummary) -> MarkerClass {
    classify_marker_values(persona.avg, control.avg, control.std)
}

/// Ties with the control mean classify `Down`; landing exactly on a
/// mean +/- std boundary stays inside the band.
pub fn classify_marker_values(persona_avg: f64, control_avg: f64, control_std: f64) -> MarkerClass {
    let above = |a: f64, b: f64| a - b > TIE_TOLERANCE;
    if above(persona_avg, control_avg + control_std) {
        MarkerClass::UpBeyondStd
    } else if above(persona_avg, control_avg) {
        MarkerClass::Up
    } else if above(control_avg - control_std, persona_avg) {
        MarkerClass::DownBeyondStd
    } else {
        MarkerClass::Down
    }
}
