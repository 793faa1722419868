use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::domain::party_of_url;
use super::{split_header, IngestError, ParseReport, Rejection, LOG_HEADER};
use crate::model::{HttpEvent, Iteration, NameValue, SessionKey};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HttpLog {
    pub events: Vec<HttpEvent>,
    pub report: ParseReport,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct Document {
    entries: Vec<Entry>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    event_id: String,
    session: RawSession,
    request: Message,
    response: Message,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    referrer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    redirect_from: Option<String>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawSession {
    persona: String,
    regime: String,
    mechanism: String,
    consent: String,
    iteration: u8,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct Message {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    url: Option<String>,
    #[serde(default)]
    headers: Vec<NameValue>,
    #[serde(default)]
    cookies: Vec<NameValue>,
}

/// Parse the archive-style HTTP log.
///
/// Entries with unknown session labels or unparseable URLs are rejected
/// individually. Duplicate event ids and redirect links that do not resolve to
/// an event of the same session fail the whole parse.
pub fn parse_http_log(input: &str) -> Result<HttpLog, IngestError> {
    let Some(body) = split_header(input)? else {
        return Ok(HttpLog::default());
    };
    if body.trim().is_empty() {
        return Ok(HttpLog::default());
    }
    let doc: Document =
        serde_json::from_str(body).map_err(|e| IngestError::Document(e.to_string()))?;

    let mut log = HttpLog::default();
    let mut seen = HashSet::new();
    for (index, entry) in doc.entries.into_iter().enumerate() {
        if !seen.insert(entry.event_id.clone()) {
            return Err(IngestError::Event {
                event_id: entry.event_id,
                reason: "duplicate event_id".into(),
            });
        }
        match convert(index, entry)? {
            Ok(event) => log.events.push(event),
            Err(rejection) => log.report.rejected.push(rejection),
        }
    }

    let sessions: HashMap<&str, SessionKey> = log
        .events
        .iter()
        .map(|e| (e.event_id.as_str(), e.session))
        .collect();
    for event in &log.events {
        let Some(from) = &event.redirect_from else {
            continue;
        };
        match sessions.get(from.as_str()) {
            None => {
                return Err(IngestError::Event {
                    event_id: event.event_id.clone(),
                    reason: format!("redirect_from names missing event `{from}`"),
                })
            }
            Some(key) if *key != event.session => {
                return Err(IngestError::Event {
                    event_id: event.event_id.clone(),
                    reason: format!("redirect_from `{from}` belongs to another session"),
                })
            }
            Some(_) => {}
        }
    }
    log.report.accepted = log.events.len();
    Ok(log)
}

fn convert(index: usize, entry: Entry) -> Result<Result<HttpEvent, Rejection>, IngestError> {
    let reject = |field: &str, value: &str, reason: String| Rejection {
        position: index,
        field: field.to_string(),
        value: value.to_string(),
        reason,
    };
    let s = &entry.session;
    let session = (|| -> Result<SessionKey, Rejection> {
        let label = |field: &str, raw: &str, e: crate::model::UnknownLabel| {
            reject(field, raw, e.to_string())
        };
        Ok(SessionKey {
            persona: s
                .persona
                .parse()
                .map_err(|e| label("session.persona", &s.persona, e))?,
            regime: s
                .regime
                .parse()
                .map_err(|e| label("session.regime", &s.regime, e))?,
            mechanism: s
                .mechanism
                .parse()
                .map_err(|e| label("session.mechanism", &s.mechanism, e))?,
            consent: s
                .consent
                .parse()
                .map_err(|e| label("session.consent", &s.consent, e))?,
            iteration: Iteration::new(s.iteration).ok_or_else(|| {
                reject(
                    "session.iteration",
                    &s.iteration.to_string(),
                    "expected 1..=3".into(),
                )
            })?,
        })
    })();
    let session = match session {
        Ok(key) => key,
        Err(r) => return Ok(Err(r)),
    };
    if entry.event_id.is_empty() {
        return Err(IngestError::Document(format!(
            "entry {index} has an empty event_id"
        )));
    }
    let Some(url) = entry.request.url else {
        return Ok(Err(reject("request.url", "", "missing URL".into())));
    };
    let party = match party_of_url(&url) {
        Ok(p) => p,
        Err(e) => return Ok(Err(reject("request.url", &url, e.to_string()))),
    };
    Ok(Ok(HttpEvent {
        event_id: entry.event_id,
        session,
        url,
        party,
        request_headers: entry.request.headers,
        response_headers: entry.response.headers,
        cookies_sent: entry.request.cookies,
        cookies_set: entry.response.cookies,
        referrer: entry.referrer,
        redirect_from: entry.redirect_from,
    }))
}

/// Serialize events as an HTTP log: the header line, then a JSON document with
/// one entry per line.
pub fn write_http_log(events: &[HttpEvent]) -> String {
    let mut out = String::with_capacity(64 + events.len() * 400);
    out.push_str(LOG_HEADER);
    out.push_str("\n{\"entries\":[");
    for (i, e) in events.iter().enumerate() {
        let entry = Entry {
            event_id: e.event_id.clone(),
            session: RawSession {
                persona: e.session.persona.as_str().into(),
                regime: e.session.regime.as_str().into(),
                mechanism: e.session.mechanism.as_str().into(),
                consent: e.session.consent.as_str().into(),
                iteration: e.session.iteration.get(),
            },
            request: Message {
                url: Some(e.url.clone()),
                headers: e.request_headers.clone(),
                cookies: e.cookies_sent.clone(),
            },
            response: Message {
                url: None,
                headers: e.response_headers.clone(),
                cookies: e.cookies_set.clone(),
            },
            referrer: e.referrer.clone(),
            redirect_from: e.redirect_from.clone(),
        };
        out.push_str(if i == 0 { "\n" } else { ",\n" });
        out.push_str(&serde_json::to_string(&entry).expect("entry serializes"));
    }
    out.push_str("\n]}\n");
    out
}
