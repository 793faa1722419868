use std::collections::BTreeMap;
use std::fmt;

use base64::engine::general_purpose::{STANDARD, STANDARD_NO_PAD, URL_SAFE, URL_SAFE_NO_PAD};
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha1::Sha1;
use sha2::{Digest, Sha256};

use super::SyncError;

/// How an identifier was transformed before being passed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Encoding {
    Plain,
    Base64,
    #[serde(rename = "SHA1")]
    Sha1,
    #[serde(rename = "SHA256")]
    Sha256,
}

impl Encoding {
    pub const ALL: [Encoding; 4] = [
        Encoding::Plain,
        Encoding::Base64,
        Encoding::Sha1,
        Encoding::Sha256,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Encoding::Plain => "Plain",
            Encoding::Base64 => "Base64",
            Encoding::Sha1 => "SHA1",
            Encoding::Sha256 => "SHA256",
        }
    }

    /// Canonical token of `value` under this encoding: the value itself,
    /// padded standard-alphabet Base64, or a lowercase hex digest.
    pub fn apply(self, value: &str) -> String {
        match self {
            Encoding::Plain => value.to_string(),
            Encoding::Base64 => STANDARD.encode(value),
            Encoding::Sha1 => hex::encode(Sha1::digest(value.as_bytes())),
            Encoding::Sha256 => hex::encode(Sha256::digest(value.as_bytes())),
        }
    }
}

impl fmt::Display for Encoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Encoding {
    type Err = SyncError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Encoding::ALL
            .into_iter()
            .find(|e| {
                e.as_str().eq_ignore_ascii_case(s)
                    || (s.eq_ignore_ascii_case("SHA2") && *e == Encoding::Sha256)
            })
            .ok_or_else(|| SyncError::UnknownEncoding(s.to_string()))
    }
}

/// The four canonical tokens of an identifier, one per encoding.
pub fn encode_variants(value: &str) -> Result<BTreeMap<Encoding, String>, SyncError> {
    if value.is_empty() {
        return Err(SyncError::EmptyValue);
    }
    Ok(Encoding::ALL
        .into_iter()
        .map(|e| (e, e.apply(value)))
        .collect())
}

/// Every spelling searched for when matching an identifier: the canonical
/// tokens plus unpadded and URL-safe Base64 and uppercase hex digests.
pub(crate) fn search_tokens(value: &str) -> Vec<(Encoding, String)> {
    let mut tokens = vec![(Encoding::Plain, value.to_string())];
    for engine in [&STANDARD, &STANDARD_NO_PAD, &URL_SAFE, &URL_SAFE_NO_PAD] {
        tokens.push((Encoding::Base64, engine.encode(value)));
    }
    for e in [Encoding::Sha1, Encoding::Sha256] {
        let lower = e.apply(value);
        tokens.push((e, lower.to_ascii_uppercase()));
        tokens.push((e, lower));
    }
    tokens.sort();
    tokens.dedup();
    tokens
}
