//! Client-side data-sharing detection: find user identifiers in cookies and
//! non-standard headers, then look for those identifiers (plain or encoded)
//! in traffic bound for other parties.

mod detect;
mod encoding;
mod identifiers;
mod stats;

use thiserror::Error;

pub use detect::{detect_syncs, Channel, SyncEvent};
pub use encoding::{encode_variants, Encoding};
pub use identifiers::{
    extract_identifiers, is_deny_listed, is_standard_header, shannon_entropy, ExtractDiagnostics,
    ExtractOptions, Extraction, IdSource, IdentifierCandidate,
};
pub use stats::{observed_advertisers, sync_stats, SyncStatsRow};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SyncError {
    #[error("identifier value is empty")]
    EmptyValue,
    #[error("unknown encoding `{0}`")]
    UnknownEncoding(String),
}
