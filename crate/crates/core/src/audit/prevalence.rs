use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::ingest::Sessions;
use crate::model::{Consent, Mechanism, Persona, Regime};

/// The CMPs whose opt-out sites are averaged.
const CMPS: [Mechanism; 2] = [Mechanism::OneTrust, Mechanism::CookieBot];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrevalenceRow {
    pub advertiser: String,
    /// Per regime, the mean over the CMPs of the share of the 16 category
    /// personas the advertiser bid on, in percent. `None` only when every CMP
    /// was excluded as absent.
    pub pct: BTreeMap<Regime, Option<f64>>,
}

impl PrevalenceRow {
    fn rank_key(&self) -> f64 {
        let values: Vec<f64> = self.pct.values().map(|p| p.unwrap_or(0.0)).collect();
        values.iter().sum::<f64>() / values.len().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrevalenceTable {
    /// Sorted by the mean across regimes, descending, then by name.
    pub rows: Vec<PrevalenceRow>,
}

/// Percentage with two decimals, halves rounded away from zero
/// (`90.625` prints as `90.63`).
pub fn format_percent(pct: f64) -> String {
    format!("{:.2}", (pct * 100.0).round() / 100.0)
}

/// How many category personas each advertiser bid on after opting out,
/// averaged over OneTrust and CookieBot sites.
///
/// Every advertiser in the bid log gets a row. An advertiser that never bid
/// on a CMP's opt-out sites counts 0% for that CMP, or is left out of the
/// mean with `exclude_absent`. `top_k == 0` keeps every row.
pub fn advertiser_prevalence(
    sessions: &Sessions,
    exclude_absent: bool,
    top_k: usize,
) -> PrevalenceTable {
    let mut personas: BTreeMap<(&str, Regime, Mechanism), BTreeSet<Persona>> = BTreeMap::new();
    let mut present: BTreeSet<(&str, Regime, Mechanism)> = BTreeSet::new();
    let mut advertisers: BTreeSet<&str> = BTreeSet::new();
    for bid in sessions.bids() {
        advertisers.insert(&bid.advertiser);
        if bid.consent != Consent::OptOut || !CMPS.contains(&bid.mechanism) {
            continue;
        }
        let key = (bid.advertiser.as_str(), bid.regime, bid.mechanism);
        present.insert(key);
        if !bid.persona.is_control() {
            personas.entry(key).or_default().insert(bid.persona);
        }
    }

    let mut rows: Vec<PrevalenceRow> = advertisers
        .into_iter()
        .map(|advertiser| {
            let pct = Regime::ALL
                .iter()
                .map(|&regime| {
                    let shares: Vec<f64> = CMPS
                        .iter()
                        .filter(|&&m| !exclude_absent || present.contains(&(advertiser, regime, m)))
                        .map(|&m| {
                            let n = personas
                                .get(&(advertiser, regime, m))
                                .map_or(0, BTreeSet::len);
                            n as f64 / Persona::CATEGORY_COUNT as f64 * 100.0
                        })
                        .collect();
                    let mean = (!shares.is_empty())
                        .then(|| shares.iter().sum::<f64>() / shares.len() as f64);
                    (regime, mean)
                })
                .collect();
            PrevalenceRow {
                advertiser: advertiser.to_string(),
                pct,
            }
        })
        .collect();

    rows.sort_by(|a, b| {
        b.rank_key()
            .total_cmp(&a.rank_key())
            .then_with(|| a.advertiser.cmp(&b.advertiser))
    });
    if top_k > 0 {
        rows.truncate(top_k);
    }
    PrevalenceTable { rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::partition_sessions;
    use crate::model::{BidRecord, Iteration};
    use proptest::prelude::*;

    fn bid(advertiser: &str, persona: Persona, regime: Regime, mechanism: Mechanism) -> BidRecord {
        BidRecord {
            persona,
            site: "pub.com".into(),
            advertiser: advertiser.into(),
            cpm: 0.2,
            regime,
            mechanism,
            consent: Consent::OptOut,
            iteration: Iteration::new(1).unwrap(),
            timestamp: 0,
        }
    }

    fn spread(advertiser: &str, regime: Regime, mechanism: Mechanism, n: usize) -> Vec<BidRecord> {
        Persona::categories()
            .take(n)
            .map(|p| bid(advertiser, p, regime, mechanism))
            .collect()
    }

    #[test]
    fn sixteen_and_fourteen_personas() {
        let mut bids = spread("appnexus.com", Regime::Gdpr, Mechanism::OneTrust, 16);
        bids.extend(spread(
            "appnexus.com",
            Regime::Gdpr,
            Mechanism::CookieBot,
            14,
        ));
        bids.extend(spread(
            "pubmatic.com",
            Regime::Ccpa,
            Mechanism::OneTrust,
            16,
        ));
        bids.extend(spread(
            "pubmatic.com",
            Regime::Ccpa,
            Mechanism::CookieBot,
            16,
        ));
        let table = advertiser_prevalence(&partition_sessions(bids, vec![]), false, 5);
        let appnexus = table
            .rows
            .iter()
            .find(|r| r.advertiser == "appnexus.com")
            .unwrap();
        assert_eq!(appnexus.pct[&Regime::Gdpr], Some(93.75));
        assert_eq!(appnexus.pct[&Regime::Ccpa], Some(0.0));
        let pubmatic = table
            .rows
            .iter()
            .find(|r| r.advertiser == "pubmatic.com")
            .unwrap();
        assert_eq!(
            format_percent(pubmatic.pct[&Regime::Ccpa].unwrap()),
            "100.00"
        );
    }

    #[test]
    fn halves_round_up() {
        assert_eq!(format_percent(90.625), "90.63");
        assert_eq!(format_percent(71.875), "71.88");
        assert_eq!(format_percent(6.25), "6.25");
    }

    #[test]
    fn absent_cmp_can_be_excluded() {
        let bids = spread("x.com", Regime::Gdpr, Mechanism::OneTrust, 16);
        let sessions = partition_sessions(bids, vec![]);
        let zero = advertiser_prevalence(&sessions, false, 0);
        assert_eq!(zero.rows[0].pct[&Regime::Gdpr], Some(50.0));
        let excluded = advertiser_prevalence(&sessions, true, 0);
        assert_eq!(excluded.rows[0].pct[&Regime::Gdpr], Some(100.0));
        assert_eq!(excluded.rows[0].pct[&Regime::Ccpa], None);
    }

    #[test]
    fn non_bidders_are_zero_and_ranked_last() {
        let mut bids = spread("a.com", Regime::Gdpr, Mechanism::OneTrust, 3);
        let mut nai = bid("z.com", Persona::Adult, Regime::Gdpr, Mechanism::Nai);
        nai.consent = Consent::OptIn;
        bids.push(nai);
        let table = advertiser_prevalence(&partition_sessions(bids, vec![]), false, 5);
        let names: Vec<_> = table.rows.iter().map(|r| r.advertiser.as_str()).collect();
        assert_eq!(names, vec!["a.com", "z.com"]);
        assert!(table.rows[1].pct.values().all(|p| *p == Some(0.0)));
    }

    proptest! {
        #[test]
        fn percentages_stay_in_range(
            spec in proptest::collection::vec((0..4usize, 0..17usize, 0..2usize, 0..3usize), 0..80)
        ) {
            let names = ["a.com", "b.com", "c.com", "d.com"];
            let bids: Vec<_> = spec
                .iter()
                .map(|&(a, p, r, m)| bid(names[a], Persona::ALL[p], Regime::ALL[r], Mechanism::ALL[m]))
                .collect();
            for exclude in [false, true] {
                let table = advertiser_prevalence(&partition_sessions(bids.clone(), vec![]), exclude, 0);
                for row in &table.rows {
                    for p in row.pct.values().flatten() {
                        prop_assert!((0.0..=100.0).contains(p));
                    }
                }
            }
        }
    }
}
