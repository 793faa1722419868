//! Registrable-domain (eTLD+1) reduction.
//!
//! Backed by the public-suffix snapshot compiled into the `psl` crate. The
//! snapshot is pinned through `Cargo.lock`, so results never depend on the
//! network or on when the tool runs.

use url::Url;

use super::IngestError;

/// Reduce a host name to its registrable domain.
///
/// Hosts that have no registrable domain (IP literals, bare public suffixes,
/// single-label names such as `localhost`) reduce to themselves.
pub fn registrable_domain(host: &str) -> String {
    let host = host.trim_end_matches('.').to_ascii_lowercase();
    if host.parse::<std::net::IpAddr>().is_ok() || host.starts_with('[') {
        return host;
    }
    match psl::domain_str(&host) {
        Some(domain) => domain.to_string(),
        None => host,
    }
}

/// Registrable domain of an absolute URL.
pub fn party_of_url(raw: &str) -> Result<String, IngestError> {
    let url = Url::parse(raw).map_err(|e| IngestError::Url {
        url: raw.to_string(),
        reason: e.to_string(),
    })?;
    let host = url.host_str().ok_or_else(|| IngestError::Url {
        url: raw.to_string(),
        reason: "URL has no host".to_string(),
    })?;
    Ok(registrable_domain(host))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multi_label_suffix() {
        assert_eq!(
            party_of_url("https://ads.example.co.uk/sync").unwrap(),
            "example.co.uk"
        );
        assert_eq!(registrable_domain("a.b.tracker.com"), "tracker.com");
        assert_eq!(registrable_domain("Tracker.COM."), "tracker.com");
    }

    #[test]
    fn degenerate_hosts_reduce_to_themselves() {
        assert_eq!(registrable_domain("127.0.0.1"), "127.0.0.1");
        assert_eq!(registrable_domain("co.uk"), "co.uk");
    }

    #[test]
    fn reduction_is_idempotent() {
        for host in [
            "x.y.example.co.uk",
            "sync.adnxs.com",
            "foo.github.io",
            "a.b.c.de",
        ] {
            let once = registrable_domain(host);
            assert_eq!(registrable_domain(&once), once);
        }
    }

    #[test]
    fn relative_url_is_rejected() {
        assert!(matches!(
            party_of_url("/sync?id=1"),
            Err(IngestError::Url { .. })
        ));
        assert!(matches!(
            party_of_url("data:text/plain,hi"),
            Err(IngestError::Url { .. })
        ));
    }
}
