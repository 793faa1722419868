use serde::{Deserialize, Serialize};

use super::{GroundTruth, SimError};
use crate::audit::AdvertiserVerdict;

/// Confusion counts of advertiser-level non-compliance verdicts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evaluation {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
}

impl Evaluation {
    /// Undefined when nothing was flagged.
    pub fn precision(&self) -> Option<f64> {
        let flagged = self.true_positives + self.false_positives;
        (flagged > 0).then(|| self.true_positives as f64 / flagged as f64)
    }

    /// Vacuously 1 when there is nothing to find.
    pub fn recall(&self) -> f64 {
        let positives = self.true_positives + self.false_negatives;
        if positives == 0 {
            1.0
        } else {
            self.true_positives as f64 / positives as f64
        }
    }

    pub fn merge(&mut self, other: &Evaluation) {
        self.true_positives += other.true_positives;
        self.false_positives += other.false_positives;
        self.false_negatives += other.false_negatives;
        self.true_negatives += other.true_negatives;
    }
}

/// Score verdicts against the simulator's profile labels. Every advertiser
/// in the ground truth is scored; one without a verdict counts as unflagged.
pub fn evaluate_audit(
    run_id: Option<&str>,
    verdicts: &[AdvertiserVerdict],
    truth: &GroundTruth,
) -> Result<Evaluation, SimError> {
    if run_id != Some(truth.run_id.as_str()) {
        return Err(SimError::RunMismatch {
            expected: truth.run_id.clone(),
            found: run_id.unwrap_or("<none>").to_string(),
        });
    }
    let mut eval = Evaluation::default();
    for (advertiser, profile) in &truth.profiles {
        let flagged = verdicts
            .iter()
            .any(|v| v.advertiser == *advertiser && v.flagged);
        match (flagged, !profile.is_compliant()) {
            (true, true) => eval.true_positives += 1,
            (true, false) => eval.false_positives += 1,
            (false, true) => eval.false_negatives += 1,
            (false, false) => eval.true_negatives += 1,
        }
    }
    Ok(eval)
}
