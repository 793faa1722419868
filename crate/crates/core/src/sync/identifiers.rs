use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::encoding::search_tokens;
use crate::model::HttpEvent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IdSource {
    /// A cookie set by, or sent to, the owning party.
    CookieSet,
    /// A header outside the standard-header list.
    NonStandardHeader,
}

/// A value that plausibly identifies the user to its owner.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct IdentifierCandidate {
    pub owner: String,
    pub name: String,
    pub value: String,
    pub source: IdSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractOptions {
    pub min_id_length: usize,
    /// Shannon entropy floor, bits per character.
    pub min_entropy: f64,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self {
            min_id_length: 8,
            min_entropy: 2.5,
        }
    }
}

/// Counts of values that were looked at and dropped.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractDiagnostics {
    pub too_short: usize,
    pub low_entropy: usize,
    pub deny_listed: usize,
    /// Values already owned by another party (or an encoding of one).
    pub claimed_elsewhere: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub candidates: Vec<IdentifierCandidate>,
    pub diagnostics: ExtractDiagnostics,
}

/// Header names treated as standard; anything else is a candidate source.
const STANDARD_HEADERS: &[&str] = &[
    "accept",
    "accept-ch",
    "accept-charset",
    "accept-encoding",
    "accept-language",
    "accept-patch",
    "accept-ranges",
    "access-control-allow-credentials",
    "access-control-allow-headers",
    "access-control-allow-methods",
    "access-control-allow-origin",
    "access-control-expose-headers",
    "access-control-max-age",
    "access-control-request-headers",
    "access-control-request-method",
    "age",
    "allow",
    "alt-svc",
    "authorization",
    "cache-control",
    "connection",
    "content-disposition",
    "content-encoding",
    "content-language",
    "content-length",
    "content-location",
    "content-range",
    "content-security-policy",
    "content-security-policy-report-only",
    "content-type",
    "cookie",
    "cross-origin-embedder-policy",
    "cross-origin-opener-policy",
    "cross-origin-resource-policy",
    "date",
    "dnt",
    "etag",
    "expect",
    "expect-ct",
    "expires",
    "forwarded",
    "from",
    "host",
    "if-match",
    "if-modified-since",
    "if-none-match",
    "if-range",
    "if-unmodified-since",
    "keep-alive",
    "last-modified",
    "link",
    "location",
    "max-forwards",
    "nel",
    "origin",
    "p3p",
    "permissions-policy",
    "pragma",
    "priority",
    "proxy-authenticate",
    "proxy-authorization",
    "range",
    "referer",
    "referrer-policy",
    "refresh",
    "report-to",
    "retry-after",
    "sec-ch-ua",
    "sec-ch-ua-mobile",
    "sec-ch-ua-platform",
    "sec-fetch-dest",
    "sec-fetch-mode",
    "sec-fetch-site",
    "sec-fetch-user",
    "server",
    "server-timing",
    "set-cookie",
    "strict-transport-security",
    "te",
    "timing-allow-origin",
    "trailer",
    "transfer-encoding",
    "upgrade",
    "upgrade-insecure-requests",
    "user-agent",
    "vary",
    "via",
    "warning",
    "www-authenticate",
    "x-content-type-options",
    "x-dns-prefetch-control",
    "x-forwarded-for",
    "x-forwarded-host",
    "x-forwarded-proto",
    "x-frame-options",
    "x-powered-by",
    "x-requested-with",
    "x-xss-protection",
];

pub fn is_standard_header(name: &str) -> bool {
    let lower = name.to_ascii_lowercase();
    STANDARD_HEADERS.binary_search(&lower.as_str()).is_ok()
}

/// Shannon entropy of the character distribution, in bits per character.
pub fn shannon_entropy(value: &str) -> f64 {
    let mut counts: HashMap<char, usize> = HashMap::new();
    let mut total = 0usize;
    for c in value.chars() {
        *counts.entry(c).or_default() += 1;
        total += 1;
    }
    if total == 0 {
        return 0.0;
    }
    counts
        .values()
        .map(|&n| {
            let p = n as f64 / total as f64;
            -p * p.log2()
        })
        .sum()
}

const CONSTANTS: &[&str] = &[
    "true",
    "false",
    "null",
    "undefined",
    "none",
    "yes",
    "no",
    "enabled",
    "disabled",
    "granted",
    "denied",
];

/// Values that never identify a user regardless of length: boolean-ish
/// constants, locale tags, dates and epoch timestamps.
pub fn is_deny_listed(value: &str) -> bool {
    let v = value.trim();
    CONSTANTS.iter().any(|c| v.eq_ignore_ascii_case(c))
        || is_locale_tag(v)
        || is_date_shaped(v)
        || is_epoch_timestamp(v)
}

fn is_locale_tag(v: &str) -> bool {
    let mut parts = v.split(['-', '_']);
    let Some(lang) = parts.next() else {
        return false;
    };
    if !(2..=3).contains(&lang.len()) || !lang.chars().all(|c| c.is_ascii_alphabetic()) {
        return false;
    }
    let rest: Vec<&str> = parts.collect();
    // script (Hant), region (US) or numeric region (419)
    let subtag = |p: &&str| {
        (p.len() == 4 && p.chars().all(|c| c.is_ascii_alphabetic()))
            || (p.len() == 2 && p.chars().all(|c| c.is_ascii_alphabetic()))
            || (p.len() == 3 && p.chars().all(|c| c.is_ascii_digit()))
    };
    rest.len() <= 2 && rest.iter().all(subtag)
}

fn is_date_shaped(v: &str) -> bool {
    let digits = v.chars().filter(|c| c.is_ascii_digit()).count();
    let separators = v
        .chars()
        .filter(|c| matches!(c, '-' | '/' | ':' | '.' | 'T' | 'Z' | ' ' | '+'))
        .count();
    digits >= 6 && separators >= 2 && digits + separators == v.chars().count()
}

fn is_epoch_timestamp(v: &str) -> bool {
    (v.len() == 10 || v.len() == 13) && v.starts_with('1') && v.chars().all(|c| c.is_ascii_digit())
}

/// Collect identifier candidates from cookies and non-standard headers.
///
/// Each value is owned by the first party observed holding it; later
/// appearances elsewhere (including any encoding of an owned value) are
/// flows, not new identifiers. Each `(owner, name)` keeps its latest value.
pub fn extract_identifiers<'a, I>(events: I, options: &ExtractOptions) -> Extraction
where
    I: IntoIterator<Item = &'a HttpEvent>,
{
    let mut diagnostics = ExtractDiagnostics::default();
    let mut claimed: HashMap<String, String> = HashMap::new();
    let mut latest: BTreeMap<(String, String), (String, IdSource)> = BTreeMap::new();

    for event in events {
        let owner = &event.party;
        let response_side = event
            .cookies_set
            .iter()
            .map(|c| (c, IdSource::CookieSet))
            .chain(
                event
                    .response_headers
                    .iter()
                    .filter(|h| !is_standard_header(&h.name))
                    .map(|h| (h, IdSource::NonStandardHeader)),
            );
        let request_side = event
            .cookies_sent
            .iter()
            .map(|c| (c, IdSource::CookieSet))
            .chain(
                event
                    .request_headers
                    .iter()
                    .filter(|h| !is_standard_header(&h.name))
                    .map(|h| (h, IdSource::NonStandardHeader)),
            );

        for (pair, source) in request_side.chain(response_side) {
            let value = pair.value.trim();
            if is_deny_listed(value) {
                diagnostics.deny_listed += 1;
                continue;
            }
            if value.chars().count() < options.min_id_length {
                diagnostics.too_short += 1;
                continue;
            }
            if shannon_entropy(value) < options.min_entropy {
                diagnostics.low_entropy += 1;
                continue;
            }
            match claimed.get(value) {
                Some(existing) if existing != owner => {
                    diagnostics.claimed_elsewhere += 1;
                    continue;
                }
                Some(_) => {}
                None => {
                    for (_, token) in search_tokens(value) {
                        claimed.entry(token).or_insert_with(|| owner.clone());
                    }
                }
            }
            let name = match source {
                IdSource::CookieSet => pair.name.clone(),
                IdSource::NonStandardHeader => pair.name.to_ascii_lowercase(),
            };
            latest.insert((owner.clone(), name), (value.to_string(), source));
        }
    }

    let candidates = latest
        .into_iter()
        .map(|((owner, name), (value, source))| IdentifierCandidate {
            owner,
            name,
            value,
            source,
        })
        .collect();
    Extraction {
        candidates,
        diagnostics,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Consent, Iteration, Mechanism, NameValue, Persona, Regime, SessionKey};

    fn event(id: &str, party: &str) -> HttpEvent {
        HttpEvent {
            event_id: id.into(),
            session: SessionKey {
                persona: Persona::Adult,
                regime: Regime::Gdpr,
                mechanism: Mechanism::OneTrust,
                consent: Consent::OptOut,
                iteration: Iteration::new(1).unwrap(),
            },
            url: format!("https://{party}/"),
            party: party.into(),
            request_headers: vec![],
            response_headers: vec![],
            cookies_sent: vec![],
            cookies_set: vec![],
            referrer: None,
            redirect_from: None,
        }
    }

    #[test]
    fn header_list_is_sorted() {
        assert!(STANDARD_HEADERS.windows(2).all(|w| w[0] < w[1]));
        assert!(is_standard_header("Content-Type"));
        assert!(!is_standard_header("X-Uid"));
    }

    #[test]
    fn cookie_uid_is_a_candidate() {
        let mut e = event("e1", "tracker.com");
        e.cookies_set.push(NameValue::new("uid", "a3f9c2d17b"));
        let out = extract_identifiers([&e], &ExtractOptions::default());
        assert_eq!(
            out.candidates,
            vec![IdentifierCandidate {
                owner: "tracker.com".into(),
                name: "uid".into(),
                value: "a3f9c2d17b".into(),
                source: IdSource::CookieSet,
            }]
        );
    }

    #[test]
    fn locale_cookie_is_deny_listed() {
        let mut e = event("e1", "tracker.com");
        e.cookies_set.push(NameValue::new("lang", "en-US"));
        e.cookies_set.push(NameValue::new("locale", "zh_Hant_TW"));
        e.cookies_set
            .push(NameValue::new("seen", "2021-03-14T10:00:00Z"));
        e.cookies_set.push(NameValue::new("t", "1616000000000"));
        e.cookies_set.push(NameValue::new("ok", "undefined"));
        let out = extract_identifiers([&e], &ExtractOptions::default());
        assert!(out.candidates.is_empty());
        assert_eq!(out.diagnostics.deny_listed, 5);
        assert!(!is_deny_listed("abc-1234"));
        assert!(is_deny_listed("es-419"));
    }

    #[test]
    fn nonstandard_response_header_is_a_candidate() {
        let mut e = event("e1", "tracker.com");
        e.response_headers
            .push(NameValue::new("X-Uid", "9f86d081884c7d659a2feaa0c55ad015"));
        e.response_headers.push(NameValue::new(
            "Content-Type",
            "application/javascript; charset=utf-8",
        ));
        let out = extract_identifiers([&e], &ExtractOptions::default());
        assert_eq!(out.candidates.len(), 1);
        assert_eq!(out.candidates[0].name, "x-uid");
        assert_eq!(out.candidates[0].source, IdSource::NonStandardHeader);
    }

    #[test]
    fn low_entropy_values_are_counted() {
        let mut e = event("e1", "tracker.com");
        e.cookies_set.push(NameValue::new("pad", "aaaaaaaaaaaa"));
        let out = extract_identifiers([&e], &ExtractOptions::default());
        assert!(out.candidates.is_empty());
        assert_eq!(out.diagnostics.low_entropy, 1);
    }

    #[test]
    fn first_owner_keeps_the_value() {
        let mut a = event("e1", "a.com");
        a.cookies_set.push(NameValue::new("uid", "7c1e94b2d05f"));
        let mut b = event("e2", "b.com");
        b.request_headers
            .push(NameValue::new("X-Partner-Uid", "7c1e94b2d05f"));
        let mut c = event("e3", "c.com");
        c.request_headers.push(NameValue::new(
            "X-Partner-Uid",
            crate::sync::Encoding::Sha1.apply("7c1e94b2d05f"),
        ));
        let out = extract_identifiers([&a, &b, &c], &ExtractOptions::default());
        assert_eq!(out.candidates.len(), 1);
        assert_eq!(out.candidates[0].owner, "a.com");
        assert_eq!(out.diagnostics.claimed_elsewhere, 2);
    }

    #[test]
    fn latest_value_wins_per_owner_and_name() {
        let mut first = event("e1", "a.com");
        first
            .cookies_set
            .push(NameValue::new("uid", "7c1e94b2d05f"));
        let mut second = event("e2", "a.com");
        second
            .cookies_set
            .push(NameValue::new("uid", "e0b4a91f33c8"));
        let out = extract_identifiers([&first, &second], &ExtractOptions::default());
        assert_eq!(out.candidates.len(), 1);
        assert_eq!(out.candidates[0].value, "e0b4a91f33c8");
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(shannon_entropy(""), 0.0);
        assert_eq!(shannon_entropy("aaaa"), 0.0);
        assert!((shannon_entropy("abcd") - 2.0).abs() < 1e-12);
    }
}
