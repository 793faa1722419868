//! Verdicts and report tables: persona bids against the control, opt-out
//! against opt-in, bids from advertisers that never saw the persona, and
//! advertiser prevalence.

mod bid_table;
mod consent;
mod prevalence;
pub mod render;
mod unknown;
mod verdict;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Consent, Mechanism, Regime};
use crate::stats::StdKind;

pub use bid_table::{build_bid_table, build_bid_tables, BidCell, BidTable, BidTableRow};
pub use consent::{compare_consent, consent_table, ConsentRow, ConsentTable};
pub use prevalence::{advertiser_prevalence, format_percent, PrevalenceRow, PrevalenceTable};
pub use unknown::{
    unknown_advertiser_bids, ControlRestriction, LeakedSet, UnknownCell, UnknownRow, UnknownTable,
};
pub use verdict::{
    advertiser_verdicts, assemble_verdicts, flag_rule, AdvertiserVerdict, AuditVerdict, ConsentSide,
};

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("no control bids for {regime}/{mechanism}/{consent}, but persona bids exist")]
    MissingControl {
        regime: Regime,
        mechanism: Mechanism,
        consent: Consent,
    },
    #[error("leaked set lists advertisers for the control persona")]
    LeakedControl,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Knobs shared by the report builders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditOptions {
    pub std_kind: StdKind,
    /// Multiply each opt-out/opt-in p-value by the number of tests in the run.
    pub bonferroni: bool,
    pub control_restriction: ControlRestriction,
    /// Drop a CMP from the prevalence mean when the advertiser never bid on
    /// its sites, instead of counting it as 0%.
    pub prevalence_exclude_absent: bool,
    pub prevalence_top_k: usize,
    /// Bids required on each side before an advertiser's cell is judged.
    pub min_advertiser_bids: usize,
    /// Share of judged cells that must be flagged to flag the advertiser.
    pub advertiser_flag_fraction: f64,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self {
            std_kind: StdKind::Population,
            bonferroni: false,
            control_restriction: ControlRestriction::UnionOfLeaked,
            prevalence_exclude_absent: false,
            prevalence_top_k: 5,
            min_advertiser_bids: 8,
            advertiser_flag_fraction: 0.5,
        }
    }
}
