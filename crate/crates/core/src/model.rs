//! Canonical record types shared by every stage of the pipeline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// A label that does not belong to one of the closed experimental sets.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown {kind} label `{value}`")]
pub struct UnknownLabel {
    pub kind: &'static str,
    pub value: String,
}

macro_rules! label_enum {
    (
        $(#[$meta:meta])*
        $name:ident, $kind:literal, { $($variant:ident => $text:literal $(| $alias:literal)*),+ $(,)? }
    ) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = UnknownLabel;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                $(
                    if s.eq_ignore_ascii_case($text) $(|| s.eq_ignore_ascii_case($alias))* {
                        return Ok($name::$variant);
                    }
                )+
                Err(UnknownLabel { kind: $kind, value: s.to_string() })
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.serialize_str(self.as_str())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let raw = String::deserialize(deserializer)?;
                raw.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

label_enum!(
    /// The sixteen interest categories plus the empty-profile control.
    Persona, "persona", {
        Adult => "Adult",
        Arts => "Arts" | "Art",
        Business => "Business",
        Computers => "Computers",
        Games => "Games",
        Health => "Health",
        Home => "Home",
        Kids => "Kids",
        News => "News",
        Recreation => "Recreation",
        Reference => "Reference",
        Regional => "Regional",
        Science => "Science",
        Shopping => "Shopping",
        Society => "Society",
        Sports => "Sports",
        Control => "Control",
    }
);

impl Persona {
    /// Number of interest categories (control excluded).
    pub const CATEGORY_COUNT: usize = 16;

    pub fn is_control(self) -> bool {
        self == Persona::Control
    }

    pub fn categories() -> impl Iterator<Item = Persona> {
        Persona::ALL.iter().copied().filter(|p| !p.is_control())
    }
}

label_enum!(
    /// Jurisdiction under which consent was registered.
    Regime, "regime", {
        Gdpr => "GDPR",
        Ccpa => "CCPA",
    }
);

label_enum!(
    /// How consent was conveyed to advertisers.
    Mechanism, "mechanism", {
        OneTrust => "OneTrust",
        CookieBot => "CookieBot",
        Nai => "NAI",
    }
);

label_enum!(
    Consent, "consent", {
        OptOut => "OptOut",
        OptIn => "OptIn",
    }
);

/// Bid-collection visit number, always in `1..=3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct Iteration(u8);

impl Iteration {
    pub const MAX: u8 = 3;

    pub fn new(value: u8) -> Option<Self> {
        (1..=Self::MAX).contains(&value).then_some(Iteration(value))
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = Iteration> {
        (1..=Self::MAX).map(Iteration)
    }
}

impl<'de> Deserialize<'de> for Iteration {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = u8::deserialize(deserializer)?;
        Iteration::new(raw)
            .ok_or_else(|| serde::de::Error::custom(format!("iteration {raw} outside 1..=3")))
    }
}

impl fmt::Display for Iteration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Experimental configuration of one crawl session. Field order defines the
/// lexicographic ordering used for report rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SessionKey {
    pub persona: Persona,
    pub regime: Regime,
    pub mechanism: Mechanism,
    pub consent: Consent,
    pub iteration: Iteration,
}

impl SessionKey {
    pub fn config(&self) -> ConfigKey {
        ConfigKey {
            regime: self.regime,
            mechanism: self.mechanism,
            consent: self.consent,
            persona: self.persona,
        }
    }
}

/// A session key with the iteration collapsed; the unit that report cells
/// aggregate over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConfigKey {
    pub regime: Regime,
    pub mechanism: Mechanism,
    pub consent: Consent,
    pub persona: Persona,
}

/// One header-bidding bid captured from a page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidRecord {
    pub persona: Persona,
    pub site: String,
    pub advertiser: String,
    /// USD per thousand impressions.
    pub cpm: f64,
    pub regime: Regime,
    pub mechanism: Mechanism,
    pub consent: Consent,
    pub iteration: Iteration,
    /// Milliseconds since the Unix epoch. Carried through, never used in verdicts.
    #[serde(rename = "ts")]
    pub timestamp: i64,
}

impl BidRecord {
    pub fn session(&self) -> SessionKey {
        SessionKey {
            persona: self.persona,
            regime: self.regime,
            mechanism: self.mechanism,
            consent: self.consent,
            iteration: self.iteration,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NameValue {
    pub name: String,
    pub value: String,
}

impl NameValue {
    pub fn new(name: impl Into<String>, value: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            value: value.into(),
        }
    }
}

/// One request/response pair observed during a crawl.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpEvent {
    pub event_id: String,
    pub session: SessionKey,
    pub url: String,
    /// Registrable domain of `url`.
    pub party: String,
    pub request_headers: Vec<NameValue>,
    pub response_headers: Vec<NameValue>,
    pub cookies_sent: Vec<NameValue>,
    pub cookies_set: Vec<NameValue>,
    pub referrer: Option<String>,
    pub redirect_from: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn persona_labels_are_closed() {
        assert_eq!(Persona::ALL.len(), 17);
        assert_eq!(Persona::categories().count(), Persona::CATEGORY_COUNT);
        assert_eq!("adult".parse::<Persona>().unwrap(), Persona::Adult);
        assert_eq!("Art".parse::<Persona>().unwrap(), Persona::Arts);
        let err = "Gardening".parse::<Persona>().unwrap_err();
        assert_eq!(err.kind, "persona");
    }

    #[test]
    fn iteration_bounds() {
        assert!(Iteration::new(0).is_none());
        assert!(Iteration::new(4).is_none());
        assert_eq!(Iteration::all().count(), 3);
    }

    #[test]
    fn session_keys_sort_by_persona_first() {
        let a = SessionKey {
            persona: Persona::Adult,
            regime: Regime::Ccpa,
            mechanism: Mechanism::Nai,
            consent: Consent::OptIn,
            iteration: Iteration::new(3).unwrap(),
        };
        let b = SessionKey {
            persona: Persona::Arts,
            regime: Regime::Gdpr,
            mechanism: Mechanism::OneTrust,
            consent: Consent::OptOut,
            iteration: Iteration::new(1).unwrap(),
        };
        assert!(a < b);
    }

    #[test]
    fn enum_serde_uses_canonical_labels() {
        assert_eq!(serde_json::to_string(&Mechanism::Nai).unwrap(), "\"NAI\"");
        assert_eq!(
            serde_json::from_str::<Regime>("\"gdpr\"").unwrap(),
            Regime::Gdpr
        );
    }
}
