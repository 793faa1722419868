use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::AuditError;
use crate::ingest::Sessions;
use crate::model::{ConfigKey, Consent, Mechanism, Persona, Regime};
use crate::stats::{classify_marker, median, summarize_values, BidSummary, MarkerClass, StdKind};

/// Advertisers each persona's interests were exposed to while the persona was
/// being built.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakedSet {
    /// Identifier of the simulation run that produced the set, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
    pub leaked: BTreeMap<Persona, BTreeSet<String>>,
}

impl LeakedSet {
    pub fn get(&self, persona: Persona) -> impl Iterator<Item = &str> {
        self.leaked
            .get(&persona)
            .into_iter()
            .flatten()
            .map(String::as_str)
    }

    pub fn contains(&self, persona: Persona, advertiser: &str) -> bool {
        self.leaked
            .get(&persona)
            .is_some_and(|set| set.contains(advertiser))
    }

    /// Every advertiser leaked to by any persona.
    pub fn union(&self) -> BTreeSet<&str> {
        self.leaked.values().flatten().map(String::as_str).collect()
    }

    /// The control persona leaks nothing.
    pub fn validate(&self) -> Result<(), AuditError> {
        match self.leaked.get(&Persona::Control) {
            Some(set) if !set.is_empty() => Err(AuditError::LeakedControl),
            _ => Ok(()),
        }
    }
}

/// Which of the control's bids the unknown-advertiser report compares against.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ControlRestriction {
    /// Drop advertisers leaked to by any persona.
    #[default]
    UnionOfLeaked,
    /// Keep every control bid.
    Unrestricted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnknownCell {
    /// Mean and std of the per-advertiser medians; `n` counts advertisers.
    pub summary: Option<BidSummary>,
    pub marker: Option<MarkerClass>,
    /// Bids that survived the restriction.
    pub bids: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnknownRow {
    pub persona: Persona,
    pub cells: Vec<UnknownCell>,
}

/// Opt-out bids from advertisers a persona was never exposed to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnknownTable {
    pub columns: Vec<(Regime, Mechanism)>,
    pub rows: Vec<UnknownRow>,
}

impl UnknownTable {
    pub fn cell(
        &self,
        persona: Persona,
        regime: Regime,
        mechanism: Mechanism,
    ) -> Option<&UnknownCell> {
        let col = self
            .columns
            .iter()
            .position(|c| *c == (regime, mechanism))?;
        self.rows
            .iter()
            .find(|r| r.persona == persona)
            .map(|r| &r.cells[col])
    }
}

/// For each persona and opt-out configuration, keep bids from advertisers
/// outside the persona's leaked set, take each advertiser's median bid, and
/// summarize those medians. The control row is restricted per `restriction`.
pub fn unknown_advertiser_bids(
    sessions: &Sessions,
    leaked: &LeakedSet,
    restriction: ControlRestriction,
    std_kind: StdKind,
) -> UnknownTable {
    let by_config = sessions.bids_by_config();
    let union = leaked.union();
    let columns: Vec<(Regime, Mechanism)> = Regime::ALL
        .iter()
        .flat_map(|&r| Mechanism::ALL.iter().map(move |&m| (r, m)))
        .collect();

    let cell_of = |persona: Persona, (regime, mechanism): (Regime, Mechanism)| {
        let key = ConfigKey {
            regime,
            mechanism,
            consent: Consent::OptOut,
            persona,
        };
        let unknown = |advertiser: &str| {
            if persona.is_control() {
                restriction == ControlRestriction::Unrestricted || !union.contains(advertiser)
            } else {
                !leaked.contains(persona, advertiser)
            }
        };
        let mut per_advertiser: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for bid in by_config.get(&key).into_iter().flatten() {
            if unknown(&bid.advertiser) {
                per_advertiser
                    .entry(&bid.advertiser)
                    .or_default()
                    .push(bid.cpm);
            }
        }
        let bids = per_advertiser.values().map(Vec::len).sum();
        let medians: Vec<f64> = per_advertiser.values().filter_map(|v| median(v)).collect();
        (summarize_values(&medians, std_kind), bids)
    };

    let controls: Vec<_> = columns
        .iter()
        .map(|&c| cell_of(Persona::Control, c).0)
        .collect();
    let rows = Persona::ALL
        .iter()
        .map(|&persona| UnknownRow {
            persona,
            cells: columns
                .iter()
                .zip(&controls)
                .map(|(&col, control)| {
                    let (summary, bids) = cell_of(persona, col);
                    let marker = match (summary, control) {
                        (Some(s), Some(c)) if !persona.is_control() => Some(classify_marker(&s, c)),
                        _ => None,
                    };
                    UnknownCell {
                        summary,
                        marker,
                        bids,
                    }
                })
                .collect(),
        })
        .collect();
    UnknownTable { columns, rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::partition_sessions;
    use crate::model::{BidRecord, Iteration};
    use proptest::prelude::*;

    fn bid(persona: Persona, advertiser: &str, cpm: f64) -> BidRecord {
        BidRecord {
            persona,
            site: "pub.de".into(),
            advertiser: advertiser.into(),
            cpm,
            regime: Regime::Gdpr,
            mechanism: Mechanism::OneTrust,
            consent: Consent::OptOut,
            iteration: Iteration::new(1).unwrap(),
            timestamp: 0,
        }
    }

    fn leaked(pairs: &[(Persona, &str)]) -> LeakedSet {
        let mut set = LeakedSet::default();
        for (p, a) in pairs {
            set.leaked.entry(*p).or_default().insert(a.to_string());
        }
        set
    }

    #[test]
    fn single_unknown_advertiser_median() {
        let sessions = partition_sessions(
            vec![
                bid(Persona::Health, "x.com", 0.1),
                bid(Persona::Health, "x.com", 0.3),
                bid(Persona::Health, "known.com", 9.0),
            ],
            vec![],
        );
        let table = unknown_advertiser_bids(
            &sessions,
            &leaked(&[(Persona::Health, "known.com")]),
            ControlRestriction::UnionOfLeaked,
            StdKind::Population,
        );
        let cell = table
            .cell(Persona::Health, Regime::Gdpr, Mechanism::OneTrust)
            .unwrap();
        let s = cell.summary.unwrap();
        assert!((s.avg - 0.2).abs() < 1e-15);
        assert_eq!(s.std, 0.0);
        assert_eq!(s.n, 1);
        assert_eq!(cell.bids, 2);
    }

    #[test]
    fn fully_leaked_persona_is_empty() {
        let sessions = partition_sessions(vec![bid(Persona::Arts, "a.com", 0.4)], vec![]);
        let table = unknown_advertiser_bids(
            &sessions,
            &leaked(&[(Persona::Arts, "a.com")]),
            ControlRestriction::UnionOfLeaked,
            StdKind::Population,
        );
        let cell = table
            .cell(Persona::Arts, Regime::Gdpr, Mechanism::OneTrust)
            .unwrap();
        assert_eq!(cell.summary, None);
        assert_eq!(cell.marker, None);
    }

    #[test]
    fn control_restriction_uses_union() {
        let sessions = partition_sessions(
            vec![
                bid(Persona::Control, "a.com", 5.0),
                bid(Persona::Control, "c.com", 0.04),
                bid(Persona::Health, "c.com", 2.43),
            ],
            vec![],
        );
        let set = leaked(&[(Persona::Arts, "a.com")]);
        let restricted = unknown_advertiser_bids(
            &sessions,
            &set,
            ControlRestriction::UnionOfLeaked,
            StdKind::Population,
        );
        let control = restricted
            .cell(Persona::Control, Regime::Gdpr, Mechanism::OneTrust)
            .unwrap();
        assert_eq!(control.summary.unwrap().avg, 0.04);
        let health = restricted
            .cell(Persona::Health, Regime::Gdpr, Mechanism::OneTrust)
            .unwrap();
        assert_eq!(health.marker, Some(MarkerClass::UpBeyondStd));

        let open = unknown_advertiser_bids(
            &sessions,
            &set,
            ControlRestriction::Unrestricted,
            StdKind::Population,
        );
        let control = open
            .cell(Persona::Control, Regime::Gdpr, Mechanism::OneTrust)
            .unwrap();
        assert_eq!(control.summary.unwrap().n, 2);
    }

    #[test]
    fn leaked_control_is_rejected() {
        assert!(leaked(&[(Persona::Control, "a.com")]).validate().is_err());
        assert!(leaked(&[(Persona::Adult, "a.com")]).validate().is_ok());
    }

    #[test]
    fn json_shape() {
        let mut set = leaked(&[(Persona::Adult, "a.com")]);
        set.run_id = Some("r1".into());
        let text = serde_json::to_string(&set).unwrap();
        assert_eq!(text, r#"{"run_id":"r1","leaked":{"Adult":["a.com"]}}"#);
        assert_eq!(serde_json::from_str::<LeakedSet>(&text).unwrap(), set);
    }

    proptest! {
        #[test]
        fn restriction_never_adds_bids(
            spec in proptest::collection::vec((0..17usize, 0..5usize, 1u32..500), 0..60),
            leak in proptest::collection::vec((0..16usize, 0..5usize), 0..20),
        ) {
            let names = ["a.com", "b.com", "c.com", "d.com", "e.com"];
            let bids: Vec<_> = spec
                .iter()
                .map(|&(p, a, c)| bid(Persona::ALL[p], names[a], c as f64 / 100.0))
                .collect();
            let set = leaked(&leak.iter().map(|&(p, a)| (Persona::ALL[p], names[a])).collect::<Vec<_>>());
            let sessions = partition_sessions(bids.clone(), vec![]);
            let table = unknown_advertiser_bids(&sessions, &set, ControlRestriction::UnionOfLeaked, StdKind::Population);
            for row in &table.rows {
                let all = bids.iter().filter(|b| b.persona == row.persona).count();
                let cell = table.cell(row.persona, Regime::Gdpr, Mechanism::OneTrust).unwrap();
                prop_assert!(cell.bids <= all);
            }
        }
    }
}
