use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::SyncEvent;
use crate::ingest::{party_of_url, Sessions};
use crate::model::{ConfigKey, HttpEvent};

/// Cookie-sync activity of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncStatsRow {
    pub config: ConfigKey,
    /// Number of detected sync events.
    pub events: usize,
    /// Observed advertisers that sent or received at least one identifier.
    pub participating: usize,
    pub observed: usize,
    /// `participating / observed` as a percentage; `None` without events or
    /// without observed advertisers.
    pub pct: Option<f64>,
}

impl SyncStatsRow {
    pub fn pct_text(&self) -> String {
        match self.pct {
            Some(p) => format!("{p:.1}"),
            None => "--".to_string(),
        }
    }
}

/// Third parties seen in a set of events: the party of every request whose
/// referrer belongs to a different registrable domain.
pub fn observed_advertisers<'a, I>(events: I) -> BTreeSet<String>
where
    I: IntoIterator<Item = &'a HttpEvent>,
{
    events
        .into_iter()
        .filter(|e| match &e.referrer {
            Some(r) => party_of_url(r).is_ok_and(|p| p != e.party),
            None => false,
        })
        .map(|e| e.party.clone())
        .collect()
}

/// Event count and participation percentage per configuration. Rows follow
/// configuration order and cover every configuration with traffic.
pub fn sync_stats(syncs: &[SyncEvent], sessions: &Sessions) -> Vec<SyncStatsRow> {
    let mut by_config: BTreeMap<ConfigKey, Vec<&SyncEvent>> = BTreeMap::new();
    for config in sessions.events_by_config().keys() {
        by_config.entry(*config).or_default();
    }
    for s in syncs.iter().filter(|s| s.sender != s.receiver) {
        by_config.entry(s.session.config()).or_default().push(s);
    }
    let events = sessions.events_by_config();

    by_config
        .into_iter()
        .map(|(config, flows)| {
            let observed = observed_advertisers(events.get(&config).into_iter().flatten().copied());
            let participating = flows
                .iter()
                .flat_map(|s| [&s.sender, &s.receiver])
                .filter(|p| observed.contains(*p))
                .collect::<BTreeSet<_>>()
                .len();
            let pct = (!flows.is_empty() && !observed.is_empty())
                .then(|| participating as f64 / observed.len() as f64 * 100.0);
            SyncStatsRow {
                config,
                events: flows.len(),
                participating,
                observed: observed.len(),
                pct,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::partition_sessions;
    use crate::model::{Consent, Iteration, Mechanism, Persona, Regime, SessionKey};
    use crate::sync::{Channel, Encoding, IdSource, IdentifierCandidate};

    fn session() -> SessionKey {
        SessionKey {
            persona: Persona::Adult,
            regime: Regime::Gdpr,
            mechanism: Mechanism::OneTrust,
            consent: Consent::OptIn,
            iteration: Iteration::new(1).unwrap(),
        }
    }

    fn ad_request(id: usize, party: &str) -> HttpEvent {
        HttpEvent {
            event_id: format!("e{id}"),
            session: session(),
            url: format!("https://{party}/bid"),
            party: party.into(),
            request_headers: vec![],
            response_headers: vec![],
            cookies_sent: vec![],
            cookies_set: vec![],
            referrer: Some("https://news-site.com/".into()),
            redirect_from: None,
        }
    }

    fn sync(n: usize, sender: &str, receiver: &str) -> SyncEvent {
        SyncEvent {
            event_id: format!("s{n}"),
            session: session(),
            sender: sender.into(),
            receiver: receiver.into(),
            identifier: IdentifierCandidate {
                owner: sender.into(),
                name: "uid".into(),
                value: "x7Kq2mP9wZ".into(),
                source: IdSource::CookieSet,
            },
            encoding: Encoding::Plain,
            channel: Channel::UrlComponent,
        }
    }

    #[test]
    fn three_of_four_participate() {
        let parties = ["a.com", "b.com", "c.com", "d.com"];
        let events: Vec<_> = parties
            .iter()
            .enumerate()
            .map(|(i, p)| ad_request(i, p))
            .collect();
        let sessions = partition_sessions(vec![], events);
        let syncs: Vec<_> = (0..24)
            .map(|i| sync(i, "a.com", if i % 2 == 0 { "b.com" } else { "c.com" }))
            .collect();
        let rows = sync_stats(&syncs, &sessions);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].events, 24);
        assert_eq!(rows[0].pct_text(), "75.0");
    }

    #[test]
    fn no_events_renders_dash() {
        let sessions = partition_sessions(vec![], vec![ad_request(0, "a.com")]);
        let rows = sync_stats(&[], &sessions);
        assert_eq!(rows[0].events, 0);
        assert_eq!(rows[0].pct_text(), "--");
    }

    #[test]
    fn self_sync_is_excluded() {
        let sessions = partition_sessions(vec![], vec![ad_request(0, "a.com")]);
        let rows = sync_stats(&[sync(0, "a.com", "a.com")], &sessions);
        assert_eq!(rows[0].events, 0);
        assert_eq!(rows[0].pct, None);
    }

    #[test]
    fn first_party_requests_are_not_advertisers() {
        let mut page = ad_request(9, "news-site.com");
        page.referrer = Some("https://www.news-site.com/".into());
        let observed = observed_advertisers([&page, &ad_request(1, "a.com")]);
        assert_eq!(
            observed.into_iter().collect::<Vec<_>>(),
            vec!["a.com".to_string()]
        );
    }
}
