use std::collections::BTreeMap;

use crate::model::{BidRecord, ConfigKey, HttpEvent, Persona, SessionKey};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SessionBucket {
    pub bids: Vec<BidRecord>,
    pub events: Vec<HttpEvent>,
}

/// Records grouped by crawl session, iterated in `SessionKey` order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Sessions {
    buckets: BTreeMap<SessionKey, SessionBucket>,
}

/// Group bids and events by session. Every input record lands in exactly one
/// bucket, and input order is preserved inside each bucket.
pub fn partition_sessions(bids: Vec<BidRecord>, events: Vec<HttpEvent>) -> Sessions {
    let mut buckets: BTreeMap<SessionKey, SessionBucket> = BTreeMap::new();
    for bid in bids {
        buckets.entry(bid.session()).or_default().bids.push(bid);
    }
    for event in events {
        buckets.entry(event.session).or_default().events.push(event);
    }
    Sessions { buckets }
}

impl Sessions {
    pub fn len(&self) -> usize {
        self.buckets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty()
    }

    pub fn get(&self, key: &SessionKey) -> Option<&SessionBucket> {
        self.buckets.get(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SessionKey, &SessionBucket)> {
        self.buckets.iter()
    }

    pub fn bids(&self) -> impl Iterator<Item = &BidRecord> {
        self.buckets.values().flat_map(|b| b.bids.iter())
    }

    pub fn events(&self) -> impl Iterator<Item = &HttpEvent> {
        self.buckets.values().flat_map(|b| b.events.iter())
    }

    /// Bids of one configuration pooled across its iterations.
    pub fn config_bids(&self, key: ConfigKey) -> impl Iterator<Item = &BidRecord> {
        self.buckets
            .iter()
            .filter(move |(k, _)| k.config() == key)
            .flat_map(|(_, b)| b.bids.iter())
    }

    /// Bids grouped by configuration, iterations pooled.
    pub fn bids_by_config(&self) -> BTreeMap<ConfigKey, Vec<&BidRecord>> {
        let mut out: BTreeMap<ConfigKey, Vec<&BidRecord>> = BTreeMap::new();
        for (key, bucket) in &self.buckets {
            out.entry(key.config())
                .or_default()
                .extend(bucket.bids.iter());
        }
        out
    }

    /// Events grouped by configuration, in session order.
    pub fn events_by_config(&self) -> BTreeMap<ConfigKey, Vec<&HttpEvent>> {
        let mut out: BTreeMap<ConfigKey, Vec<&HttpEvent>> = BTreeMap::new();
        for (key, bucket) in &self.buckets {
            out.entry(key.config())
                .or_default()
                .extend(bucket.events.iter());
        }
        out
    }

    /// Events grouped by persona, in session order.
    pub fn events_by_persona(&self) -> BTreeMap<Persona, Vec<&HttpEvent>> {
        let mut out: BTreeMap<Persona, Vec<&HttpEvent>> = BTreeMap::new();
        for (key, bucket) in &self.buckets {
            out.entry(key.persona)
                .or_default()
                .extend(bucket.events.iter());
        }
        out
    }

    /// Every configuration with at least one bid or event.
    pub fn configs(&self) -> Vec<ConfigKey> {
        let mut keys: Vec<ConfigKey> = self.buckets.keys().map(|k| k.config()).collect();
        keys.sort();
        keys.dedup();
        keys
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Consent, Iteration, Mechanism, Regime};
    use proptest::prelude::*;

    fn bid(
        persona: Persona,
        regime: Regime,
        consent: Consent,
        iteration: u8,
        cpm: f64,
    ) -> BidRecord {
        BidRecord {
            persona,
            site: "site.com".into(),
            advertiser: "adv.com".into(),
            cpm,
            regime,
            mechanism: Mechanism::OneTrust,
            consent,
            iteration: Iteration::new(iteration).unwrap(),
            timestamp: 0,
        }
    }

    #[test]
    fn iterations_split_into_buckets() {
        let bids: Vec<_> = (0..6)
            .map(|i| {
                bid(
                    Persona::Adult,
                    Regime::Gdpr,
                    Consent::OptOut,
                    (i % 3) as u8 + 1,
                    0.1,
                )
            })
            .collect();
        let sessions = partition_sessions(bids, vec![]);
        assert_eq!(sessions.len(), 3);
        assert!(sessions.iter().all(|(_, b)| b.bids.len() == 2));
    }

    #[test]
    fn consent_and_regime_split_keys() {
        let sessions = partition_sessions(
            vec![
                bid(Persona::Adult, Regime::Gdpr, Consent::OptOut, 1, 0.1),
                bid(Persona::Adult, Regime::Gdpr, Consent::OptIn, 1, 0.1),
            ],
            vec![],
        );
        assert_eq!(sessions.len(), 2);

        let mixed = partition_sessions(
            vec![
                bid(Persona::Adult, Regime::Gdpr, Consent::OptOut, 1, 0.1),
                bid(Persona::Adult, Regime::Ccpa, Consent::OptOut, 1, 0.2),
            ],
            vec![],
        );
        let regimes: Vec<_> = mixed.iter().map(|(k, _)| k.regime).collect();
        assert_eq!(regimes, vec![Regime::Gdpr, Regime::Ccpa]);
    }

    proptest! {
        #[test]
        fn buckets_form_a_partition(
            spec in proptest::collection::vec((0..17usize, 0..2usize, 0..2usize, 1u8..=3, 0u32..1000), 0..60)
        ) {
            let bids: Vec<BidRecord> = spec
                .iter()
                .map(|&(p, r, c, it, cents)| {
                    bid(Persona::ALL[p], Regime::ALL[r], Consent::ALL[c], it, cents as f64 / 100.0)
                })
                .collect();
            let sessions = partition_sessions(bids.clone(), vec![]);
            let mut total = 0;
            let mut prev: Option<SessionKey> = None;
            for (key, bucket) in sessions.iter() {
                prop_assert!(bucket.bids.iter().all(|b| b.session() == *key));
                if let Some(p) = prev {
                    prop_assert!(p < *key);
                }
                prev = Some(*key);
                total += bucket.bids.len();
            }
            prop_assert_eq!(total, bids.len());
            let mut flattened: Vec<_> = sessions.bids().cloned().collect();
            let mut original = bids;
            let order = |a: &BidRecord, b: &BidRecord| {
                a.session().cmp(&b.session()).then(a.cpm.total_cmp(&b.cpm))
            };
            flattened.sort_by(order);
            original.sort_by(order);
            prop_assert_eq!(flattened, original);
        }
    }
}
