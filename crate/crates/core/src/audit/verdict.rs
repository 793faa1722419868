use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AuditOptions, BidTable, ConsentTable, LeakedSet};
use crate::ingest::Sessions;
use crate::model::{Consent, Mechanism, Persona, Regime};
use crate::stats::{
    classify_marker, mann_whitney_u, summarize_values, BidSummary, EffectSize, MarkerClass,
    StdKind, UTestResult, SIGNIFICANCE_LEVEL,
};
use crate::sync::SyncEvent;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsentSide {
    pub summary: Option<BidSummary>,
    pub marker: Option<MarkerClass>,
}

/// Evidence and flag for one persona under one regime and mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditVerdict {
    pub regime: Regime,
    pub mechanism: Mechanism,
    pub persona: Persona,
    pub opt_out: ConsentSide,
    pub opt_in: ConsentSide,
    pub test: Option<UTestResult>,
    pub p: Option<f64>,
    pub effect: Option<EffectSize>,
    pub non_compliance_flag: bool,
}

/// Targeting persisted after opting out and opting out did not measurably
/// lower the bids.
///
/// The opt-out mean must sit above the control mean. The flag then holds
/// unless opt-out bids are significantly *lower* than opt-in bids; a
/// significant difference in the other direction is more targeting, not
/// less, and keeps the flag.
pub fn flag_rule(opt_out_marker: Option<MarkerClass>, p: Option<f64>, opt_out_lower: bool) -> bool {
    let targeted = opt_out_marker.is_some_and(MarkerClass::is_up);
    let consent_lowered = p.is_some_and(|p| p < SIGNIFICANCE_LEVEL) && opt_out_lower;
    targeted && !consent_lowered
}

/// One verdict per category persona, regime and mechanism.
pub fn assemble_verdicts(bid_tables: &[BidTable], consent: &ConsentTable) -> Vec<AuditVerdict> {
    let mut out = Vec::new();
    for table in bid_tables {
        for &mechanism in Mechanism::ALL {
            for persona in Persona::categories() {
                let side = |consent| {
                    table.cell(persona, mechanism, consent).map_or(
                        ConsentSide {
                            summary: None,
                            marker: None,
                        },
                        |c| ConsentSide {
                            summary: c.summary,
                            marker: c.marker,
                        },
                    )
                };
                let opt_out = side(Consent::OptOut);
                let row = consent.get(table.regime, mechanism, persona);
                let test = row.and_then(|r| r.test);
                let p = row.and_then(|r| r.p);
                let lower = match (row, test) {
                    (Some(r), Some(t)) => t.first_is_lower(r.n_opt_out, r.n_opt_in),
                    _ => false,
                };
                out.push(AuditVerdict {
                    regime: table.regime,
                    mechanism,
                    persona,
                    opt_out,
                    opt_in: side(Consent::OptIn),
                    test,
                    p,
                    effect: row.and_then(|r| r.effect),
                    non_compliance_flag: flag_rule(opt_out.marker, p, lower),
                });
            }
        }
    }
    out
}

/// Non-compliance judgement for one advertiser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvertiserVerdict {
    pub advertiser: String,
    /// Regime/mechanism/persona cells with enough of this advertiser's bids
    /// to judge, restricted to personas leaked to the advertiser.
    pub cells_judged: usize,
    pub cells_flagged: usize,
    /// Syncs of this advertiser's identifiers observed after opting out.
    pub opt_out_syncs: usize,
    pub flagged: bool,
}

/// Apply the flag rule to a single advertiser's bids in one cell: opt-out
/// against its own control bids for the marker, opt-out against opt-in for
/// the test.
pub(crate) fn judge_cell(
    opt_out: &[f64],
    opt_in: &[f64],
    control: &[f64],
    std_kind: StdKind,
) -> bool {
    let marker = match (
        summarize_values(opt_out, std_kind),
        summarize_values(control, std_kind),
    ) {
        (Some(s), Some(c)) => Some(classify_marker(&s, &c)),
        _ => None,
    };
    let test = mann_whitney_u(opt_out, opt_in).ok();
    let lower = test.is_some_and(|t| t.first_is_lower(opt_out.len(), opt_in.len()));
    flag_rule(marker, test.map(|t| t.p), lower)
}

/// Per-advertiser verdicts. An advertiser is flagged when more than
/// `advertiser_flag_fraction` of its judged cells are flagged, or when any
/// of its identifiers was synced to another party after opting out.
pub fn advertiser_verdicts(
    sessions: &Sessions,
    leaked: &LeakedSet,
    syncs: &[SyncEvent],
    options: &AuditOptions,
) -> Vec<AdvertiserVerdict> {
    type Key<'a> = (&'a str, Regime, Mechanism, Consent, Persona);
    let mut cpms: BTreeMap<Key, Vec<f64>> = BTreeMap::new();
    let mut advertisers: BTreeSet<&str> = BTreeSet::new();
    for bid in sessions.bids() {
        advertisers.insert(&bid.advertiser);
        cpms.entry((
            &bid.advertiser,
            bid.regime,
            bid.mechanism,
            bid.consent,
            bid.persona,
        ))
        .or_default()
        .push(bid.cpm);
    }
    let mut opt_out_syncs: BTreeMap<&str, usize> = BTreeMap::new();
    for s in syncs
        .iter()
        .filter(|s| s.session.consent == Consent::OptOut)
    {
        *opt_out_syncs.entry(&s.sender).or_default() += 1;
    }
    for sender in opt_out_syncs.keys() {
        advertisers.insert(sender);
    }

    let empty = Vec::new();
    let advertisers: Vec<&str> = advertisers.into_iter().collect();
    advertisers
        .par_iter()
        .map(|&advertiser| {
            let get = |r, m, c, p| cpms.get(&(advertiser, r, m, c, p)).unwrap_or(&empty);
            let (mut judged, mut flagged) = (0, 0);
            for &regime in Regime::ALL {
                for &mechanism in Mechanism::ALL {
                    let control = get(regime, mechanism, Consent::OptOut, Persona::Control);
                    for persona in Persona::categories().filter(|&p| leaked.contains(p, advertiser))
                    {
                        let out = get(regime, mechanism, Consent::OptOut, persona);
                        let inn = get(regime, mechanism, Consent::OptIn, persona);
                        let min = options.min_advertiser_bids.max(1);
                        if out.len() < min || inn.len() < min || control.len() < min {
                            continue;
                        }
                        judged += 1;
                        if judge_cell(out, inn, control, options.std_kind) {
                            flagged += 1;
                        }
                    }
                }
            }
            let syncs = opt_out_syncs.get(advertiser).copied().unwrap_or(0);
            let by_bids =
                judged > 0 && flagged as f64 > options.advertiser_flag_fraction * judged as f64;
            AdvertiserVerdict {
                advertiser: advertiser.to_string(),
                cells_judged: judged,
                cells_flagged: flagged,
                opt_out_syncs: syncs,
                flagged: by_bids || syncs > 0,
            }
        })
        .collect()
}
