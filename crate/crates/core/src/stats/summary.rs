use serde::{Deserialize, Serialize};

use crate::model::BidRecord;

/// Which variance denominator a summary uses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum StdKind {
    /// Divide by `n`.
    #[default]
    Population,
    /// Divide by `n - 1` (zero for a single value).
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BidSummary {
    pub n: usize,
    pub avg: f64,
    pub std: f64,
}

/// Mean and standard deviation of the CPMs. `None` is the no-data sentinel,
/// rendered as `--` in reports.
pub fn summarize(bids: &[&BidRecord], kind: StdKind) -> Option<BidSummary> {
    let values: Vec<f64> = bids.iter().map(|b| b.cpm).collect();
    summarize_values(&values, kind)
}

pub fn summarize_values(values: &[f64], kind: StdKind) -> Option<BidSummary> {
    if values.is_empty() {
        return None;
    }
    let n = values.len();
    let avg = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - avg).powi(2)).sum();
    let denom = match kind {
        StdKind::Population => n as f64,
        StdKind::Sample if n > 1 => (n - 1) as f64,
        StdKind::Sample => 1.0,
    };
    Some(BidSummary {
        n,
        avg,
        std: (ss / denom).sqrt(),
    })
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    Some(if sorted.len().is_multiple_of(2) {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    } else {
        sorted[mid]
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_sample_has_zero_std() {
        let s = summarize_values(&[1.0, 1.0, 1.0], StdKind::Population).unwrap();
        assert_eq!((s.n, s.avg, s.std), (3, 1.0, 0.0));
    }

    #[test]
    fn population_std_by_hand() {
        // mean 0.25, deviations +-0.25, population variance 0.0625
        let s = summarize_values(&[0.0, 0.5], StdKind::Population).unwrap();
        assert_eq!(s.avg, 0.25);
        assert_eq!(s.std, 0.25);
        let sample = summarize_values(&[0.0, 0.5], StdKind::Sample).unwrap();
        assert!((sample.std - 0.125f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn empty_is_no_data() {
        assert!(summarize_values(&[], StdKind::Population).is_none());
        assert!(summarize(&[], StdKind::Population).is_none());
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[0.1, 0.3]), Some(0.2));
        assert_eq!(median(&[5.0, 1.0, 3.0]), Some(3.0));
        assert_eq!(median(&[]), None);
    }
}
