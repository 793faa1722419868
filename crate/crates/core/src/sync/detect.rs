use std::collections::{BTreeSet, HashMap};

use aho_corasick::{AhoCorasick, AhoCorasickKind};
use percent_encoding::percent_decode_str;
use serde::{Deserialize, Serialize};

use super::encoding::search_tokens;
use super::{Encoding, IdentifierCandidate};
use crate::model::{HttpEvent, SessionKey};

/// Where in the outgoing request the identifier was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Channel {
    UrlComponent,
    Header,
    RedirectChain,
}

/// One identifier flowing from its owner to another party.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncEvent {
    pub event_id: String,
    pub session: SessionKey,
    pub sender: String,
    pub receiver: String,
    pub identifier: IdentifierCandidate,
    pub encoding: Encoding,
    pub channel: Channel,
}

/// Request text that reaches the receiving party, split by channel.
struct Haystacks {
    url: Vec<String>,
    headers: Vec<String>,
    referrer: Vec<String>,
}

fn haystacks(event: &HttpEvent) -> Haystacks {
    let target = match url::Url::parse(&event.url) {
        Ok(u) => u[url::Position::BeforePath..url::Position::AfterQuery].to_string(),
        Err(_) => event.url.clone(),
    };
    let mut url = vec![decoded(&target)];
    url.push(target);
    let headers = event
        .request_headers
        .iter()
        .filter(|h| !h.name.eq_ignore_ascii_case("cookie"))
        .flat_map(|h| [h.value.clone(), decoded(&h.value)])
        .collect();
    let referrer = match (&event.redirect_from, &event.referrer) {
        (Some(_), Some(r)) => vec![r.clone(), decoded(r)],
        _ => Vec::new(),
    };
    Haystacks {
        url,
        headers,
        referrer,
    }
}

fn decoded(s: &str) -> String {
    percent_decode_str(s).decode_utf8_lossy().into_owned()
}

/// Find every identifier (or one of its encodings) carried in a request to a
/// party other than its owner.
///
/// Tokens are matched as substrings of the URL path and query (raw and
/// percent-decoded), of non-cookie request header values, and of the referrer
/// of a redirected request. A URL hit on a redirected request is reported as
/// `RedirectChain`. Output is sorted by event id, then encoding.
pub fn detect_syncs<'a, I>(events: I, ids: &[IdentifierCandidate]) -> Vec<SyncEvent>
where
    I: IntoIterator<Item = &'a HttpEvent>,
{
    let mut owners_of_token: HashMap<String, Vec<(usize, Encoding)>> = HashMap::new();
    for (index, id) in ids.iter().enumerate() {
        if id.value.is_empty() {
            continue;
        }
        for (encoding, token) in search_tokens(&id.value) {
            owners_of_token
                .entry(token)
                .or_default()
                .push((index, encoding));
        }
    }
    let patterns: Vec<&String> = owners_of_token.keys().collect();
    if patterns.is_empty() {
        return Vec::new();
    }
    // one automaton per call over short haystacks: cheap construction wins
    let matcher = AhoCorasick::builder()
        .kind(Some(AhoCorasickKind::NoncontiguousNFA))
        .build(&patterns)
        .expect("identifier tokens form a valid automaton");

    let mut found = Vec::new();
    for event in events {
        let hay = haystacks(event);
        // (identifier index, encoding) -> strongest channel seen
        let mut hits: HashMap<(usize, Encoding), Channel> = HashMap::new();
        let mut scan = |texts: &[String], channel: Channel| {
            for text in texts {
                for m in matcher.find_overlapping_iter(text.as_str()) {
                    for &(index, encoding) in &owners_of_token[patterns[m.pattern().as_usize()]] {
                        if ids[index].owner == event.party {
                            continue;
                        }
                        hits.entry((index, encoding)).or_insert(channel);
                    }
                }
            }
        };
        let url_channel = if event.redirect_from.is_some() {
            Channel::RedirectChain
        } else {
            Channel::UrlComponent
        };
        scan(&hay.url, url_channel);
        scan(&hay.headers, Channel::Header);
        scan(&hay.referrer, Channel::RedirectChain);

        // one event per (owner, value, encoding); duplicate names of the same
        // value under one owner collapse onto the first candidate
        let mut seen = BTreeSet::new();
        let mut hits: Vec<_> = hits.into_iter().collect();
        hits.sort_by_key(|&((index, encoding), _)| (encoding, index));
        for ((index, encoding), channel) in hits {
            let id = &ids[index];
            if !seen.insert((id.owner.as_str(), id.value.as_str(), encoding)) {
                continue;
            }
            found.push(SyncEvent {
                event_id: event.event_id.clone(),
                session: event.session,
                sender: id.owner.clone(),
                receiver: event.party.clone(),
                identifier: id.clone(),
                encoding,
                channel,
            });
        }
    }
    found.sort_by(|a, b| {
        (
            &a.event_id,
            a.encoding,
            &a.identifier.owner,
            &a.identifier.name,
        )
            .cmp(&(
                &b.event_id,
                b.encoding,
                &b.identifier.owner,
                &b.identifier.name,
            ))
    });
    found
}
