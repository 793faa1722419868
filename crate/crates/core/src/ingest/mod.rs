//! Parsing of bid logs and HTTP event logs, and partitioning of the parsed
//! records into crawl sessions.

mod bidlog;
pub mod domain;
mod httplog;
mod partition;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bidlog::{parse_bid_log, write_bid_log, BidLog};
pub use domain::{party_of_url, registrable_domain};
pub use httplog::{parse_http_log, write_http_log, HttpLog};
pub use partition::{partition_sessions, SessionBucket, Sessions};

/// First line of every log this crate reads or writes.
pub const LOG_HEADER: &str = "consent-audit-log/1";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: field `{field}`: {reason}")]
    Malformed {
        line: usize,
        field: String,
        reason: String,
    },
    #[error("expected log header `{LOG_HEADER}`, found `{found}`")]
    Header { found: String },
    #[error("malformed HTTP log: {0}")]
    Document(String),
    #[error("event `{event_id}`: {reason}")]
    Event { event_id: String, reason: String },
    #[error("invalid URL `{url}`: {reason}")]
    Url { url: String, reason: String },
}

/// A record that was skipped rather than failing the whole parse.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    /// 1-based line number for bid logs, 0-based entry index for HTTP logs.
    pub position: usize,
    pub field: String,
    pub value: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseReport {
    pub accepted: usize,
    pub rejected: Vec<Rejection>,
}

impl ParseReport {
    pub fn is_clean(&self) -> bool {
        self.rejected.is_empty()
    }
}

/// Split off the version header. An empty (or all-blank) stream has no header
/// and no records.
fn split_header(input: &str) -> Result<Option<&str>, IngestError> {
    let trimmed = input.trim_start_matches('\u{feff}');
    if trimmed.trim().is_empty() {
        return Ok(None);
    }
    let (first, rest) = match trimmed.find('\n') {
        Some(idx) => (&trimmed[..idx], &trimmed[idx + 1..]),
        None => (trimmed, ""),
    };
    let first = first.trim_end_matches('\r');
    if first.trim() != LOG_HEADER {
        return Err(IngestError::Header {
            found: first.chars().take(64).collect(),
        });
    }
    Ok(Some(rest))
}
