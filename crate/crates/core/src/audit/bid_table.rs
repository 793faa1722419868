use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::AuditError;
use crate::ingest::Sessions;
use crate::model::{BidRecord, ConfigKey, Consent, Mechanism, Persona, Regime};
use crate::stats::{classify_marker, summarize, BidSummary, MarkerClass, StdKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BidCell {
    pub summary: Option<BidSummary>,
    /// Relative to the control of the same column; never set on the control row.
    pub marker: Option<MarkerClass>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidTableRow {
    pub persona: Persona,
    /// One cell per entry of [`BidTable::columns`].
    pub cells: Vec<BidCell>,
}

/// Mean and std of all bids per persona, for every mechanism and consent
/// state of one regime. Rows are the 16 categories followed by the control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidTable {
    pub regime: Regime,
    pub columns: Vec<(Mechanism, Consent)>,
    pub rows: Vec<BidTableRow>,
}

impl BidTable {
    pub fn cell(
        &self,
        persona: Persona,
        mechanism: Mechanism,
        consent: Consent,
    ) -> Option<&BidCell> {
        let col = self
            .columns
            .iter()
            .position(|c| *c == (mechanism, consent))?;
        self.rows
            .iter()
            .find(|r| r.persona == persona)
            .map(|r| &r.cells[col])
    }
}

pub(crate) fn table_columns() -> Vec<(Mechanism, Consent)> {
    Mechanism::ALL
        .iter()
        .flat_map(|&m| Consent::ALL.iter().map(move |&c| (m, c)))
        .collect()
}

/// Bid table for one regime.
///
/// A column whose personas have bids but whose control has none is an error:
/// markers have no baseline there.
pub fn build_bid_table(
    sessions: &Sessions,
    regime: Regime,
    std_kind: StdKind,
) -> Result<BidTable, AuditError> {
    build(&sessions.bids_by_config(), regime, std_kind)
}

/// Bid tables for every regime, in regime order.
pub fn build_bid_tables(
    sessions: &Sessions,
    std_kind: StdKind,
) -> Result<Vec<BidTable>, AuditError> {
    let by_config = sessions.bids_by_config();
    Regime::ALL
        .par_iter()
        .map(|&regime| build(&by_config, regime, std_kind))
        .collect()
}

fn build(
    by_config: &BTreeMap<ConfigKey, Vec<&BidRecord>>,
    regime: Regime,
    std_kind: StdKind,
) -> Result<BidTable, AuditError> {
    let columns = table_columns();
    let summary_of = |persona, (mechanism, consent): (Mechanism, Consent)| {
        let key = ConfigKey {
            regime,
            mechanism,
            consent,
            persona,
        };
        by_config
            .get(&key)
            .and_then(|bids| summarize(bids, std_kind))
    };

    let mut controls = Vec::with_capacity(columns.len());
    for &(mechanism, consent) in &columns {
        let control = summary_of(Persona::Control, (mechanism, consent));
        let persona_data =
            Persona::categories().any(|p| summary_of(p, (mechanism, consent)).is_some());
        if control.is_none() && persona_data {
            return Err(AuditError::MissingControl {
                regime,
                mechanism,
                consent,
            });
        }
        controls.push(control);
    }

    let rows = Persona::ALL
        .iter()
        .map(|&persona| BidTableRow {
            persona,
            cells: columns
                .iter()
                .zip(&controls)
                .map(|(&col, control)| {
                    let summary = summary_of(persona, col);
                    let marker = match (summary, control) {
                        (Some(s), Some(c)) if !persona.is_control() => Some(classify_marker(&s, c)),
                        _ => None,
                    };
                    BidCell { summary, marker }
                })
                .collect(),
        })
        .collect();
    Ok(BidTable {
        regime,
        columns,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::partition_sessions;
    use crate::model::Iteration;

    fn bid(persona: Persona, consent: Consent, cpm: f64) -> BidRecord {
        BidRecord {
            persona,
            site: "site.de".into(),
            advertiser: "appnexus.com".into(),
            cpm,
            regime: Regime::Gdpr,
            mechanism: Mechanism::OneTrust,
            consent,
            iteration: Iteration::new(1).unwrap(),
            timestamp: 0,
        }
    }

    #[test]
    fn adult_above_control_band() {
        // control mean 0.04, population std 0.04
        let bids = vec![
            bid(Persona::Control, Consent::OptOut, 0.0),
            bid(Persona::Control, Consent::OptOut, 0.08),
            bid(Persona::Adult, Consent::OptOut, 0.25),
        ];
        let sessions = partition_sessions(bids, vec![]);
        let table = build_bid_table(&sessions, Regime::Gdpr, StdKind::Population).unwrap();
        assert_eq!(table.rows.len(), 17);
        assert_eq!(table.columns.len(), 6);
        let adult = table
            .cell(Persona::Adult, Mechanism::OneTrust, Consent::OptOut)
            .unwrap();
        assert_eq!(adult.marker, Some(MarkerClass::UpBeyondStd));
        let control = table
            .cell(Persona::Control, Mechanism::OneTrust, Consent::OptOut)
            .unwrap();
        assert_eq!(control.marker, None);
        assert!(control.summary.is_some());
    }

    #[test]
    fn persona_without_bids_is_empty() {
        let sessions = partition_sessions(
            vec![
                bid(Persona::Control, Consent::OptOut, 0.1),
                bid(Persona::Adult, Consent::OptOut, 0.2),
            ],
            vec![],
        );
        let table = build_bid_table(&sessions, Regime::Gdpr, StdKind::Population).unwrap();
        let health = table
            .cell(Persona::Health, Mechanism::OneTrust, Consent::OptOut)
            .unwrap();
        assert_eq!(health.summary, None);
        assert_eq!(health.marker, None);
    }

    #[test]
    fn personas_equal_to_control_are_down() {
        let mut bids = vec![bid(Persona::Control, Consent::OptIn, 0.3)];
        bids.extend(Persona::categories().map(|p| bid(p, Consent::OptIn, 0.3)));
        let table = build_bid_table(
            &partition_sessions(bids, vec![]),
            Regime::Gdpr,
            StdKind::Population,
        )
        .unwrap();
        for p in Persona::categories() {
            let cell = table.cell(p, Mechanism::OneTrust, Consent::OptIn).unwrap();
            assert_eq!(cell.marker, Some(MarkerClass::Down));
        }
    }

    #[test]
    fn missing_control_is_an_error() {
        let sessions = partition_sessions(vec![bid(Persona::Adult, Consent::OptOut, 0.2)], vec![]);
        assert!(matches!(
            build_bid_table(&sessions, Regime::Gdpr, StdKind::Population),
            Err(AuditError::MissingControl {
                mechanism: Mechanism::OneTrust,
                consent: Consent::OptOut,
                ..
            })
        ));
    }
}
