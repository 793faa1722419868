use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::SimError;
use crate::model::{Mechanism, Persona, Regime};
use crate::sync::{Channel, Encoding};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Profile {
    /// Drops persona knowledge and stops syncing once the user opts out.
    Compliant,
    /// Keeps bidding on persona knowledge after an opt-out.
    NonCompliantProcessor,
    /// Keeps bidding on persona knowledge and keeps forwarding identifiers
    /// to its partners after an opt-out.
    NonCompliantSharer,
}

impl Profile {
    pub fn is_compliant(self) -> bool {
        self == Profile::Compliant
    }
}

/// A sync edge. Encoding and channel are drawn per edge when left out.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Partner {
    pub to: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoding: Option<Encoding>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<Channel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdvertiserProfile {
    /// Registrable domain of the advertiser, e.g. `appnexus.com`.
    pub identity: String,
    pub profile: Profile,
    /// Log-space location of the CPM distribution.
    pub base_mu: f64,
    pub base_sigma: f64,
    /// Multiplier applied to the CPM when persona knowledge is used.
    #[serde(default = "default_uplift")]
    pub uplift: f64,
    /// Chance that the advertiser operates in a given interest category.
    #[serde(default = "default_reach")]
    pub reach: f64,
    #[serde(default)]
    pub partners: Vec<Partner>,
}

fn default_uplift() -> f64 {
    1.0
}

fn default_reach() -> f64 {
    0.6
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersonaSpec {
    pub category: Persona,
    /// Category sites visited while building the persona.
    #[serde(default)]
    pub sites_visited: Option<usize>,
}

impl PersonaSpec {
    /// One-hot interest over the 16 categories; all zeros for the control.
    pub fn interest_vector(&self) -> [bool; Persona::CATEGORY_COUNT] {
        let mut v = [false; Persona::CATEGORY_COUNT];
        if let Some(i) = Persona::categories().position(|p| p == self.category) {
            v[i] = true;
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    #[serde(default = "default_iterations")]
    pub iterations: u8,
    #[serde(default = "default_bids_per_visit")]
    pub bids_per_visit: usize,
    /// Category sites visited per persona when a persona does not say.
    #[serde(default = "default_sites_per_persona")]
    pub sites_per_persona: usize,
    /// Chance that an operating advertiser is present on one category site.
    #[serde(default = "default_site_presence")]
    pub site_presence: f64,
    /// Publisher sites per regime and mechanism in the measurement phase.
    #[serde(default = "default_measurement_sites")]
    pub measurement_sites: usize,
    /// Advertisers bidding on each measurement site.
    #[serde(default = "default_advertisers_per_site")]
    pub advertisers_per_site: usize,
    #[serde(default = "all_regimes")]
    pub regimes: Vec<Regime>,
    #[serde(default = "all_mechanisms")]
    pub mechanisms: Vec<Mechanism>,
    /// Defaults to the 16 categories plus the control.
    #[serde(default = "all_personas")]
    pub personas: Vec<PersonaSpec>,
    pub advertisers: Vec<AdvertiserProfile>,
}

fn default_iterations() -> u8 {
    3
}
fn default_bids_per_visit() -> usize {
    50
}
fn default_sites_per_persona() -> usize {
    50
}
fn default_site_presence() -> f64 {
    0.1
}
fn default_measurement_sites() -> usize {
    4
}
fn default_advertisers_per_site() -> usize {
    5
}
fn all_regimes() -> Vec<Regime> {
    Regime::ALL.to_vec()
}
fn all_mechanisms() -> Vec<Mechanism> {
    Mechanism::ALL.to_vec()
}
fn all_personas() -> Vec<PersonaSpec> {
    Persona::ALL
        .iter()
        .map(|&category| PersonaSpec {
            category,
            sites_visited: None,
        })
        .collect()
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let config: SimConfig = toml::from_str(text).map_err(|e| SimError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let invalid = |msg: String| Err(SimError::Invalid(msg));
        if self.personas.is_empty() {
            return invalid("no personas".into());
        }
        let mut personas = BTreeSet::new();
        for p in &self.personas {
            if !personas.insert(p.category) {
                return invalid(format!("persona {} listed twice", p.category));
            }
        }
        if self.advertisers.is_empty() {
            return invalid("no advertisers".into());
        }
        if self.regimes.is_empty() || self.mechanisms.is_empty() {
            return invalid("at least one regime and one mechanism are required".into());
        }
        if !(1..=3).contains(&self.iterations) {
            return invalid(format!("iterations must be 1..=3, got {}", self.iterations));
        }
        if self.bids_per_visit == 0 || self.measurement_sites == 0 {
            return invalid("bids_per_visit and measurement_sites must be positive".into());
        }
        if self.advertisers_per_site == 0 || self.advertisers_per_site > self.advertisers.len() {
            return invalid(format!(
                "advertisers_per_site must be 1..={}, got {}",
                self.advertisers.len(),
                self.advertisers_per_site
            ));
        }
        if !(0.0..=1.0).contains(&self.site_presence) {
            return invalid("site_presence must lie in [0, 1]".into());
        }
        let identities: BTreeSet<&str> = self
            .advertisers
            .iter()
            .map(|a| a.identity.as_str())
            .collect();
        if identities.len() != self.advertisers.len() {
            return invalid("advertiser identities must be unique".into());
        }
        for a in &self.advertisers {
            let name = &a.identity;
            if name.is_empty() || !name.contains('.') || name.contains(['/', ' ', '?']) {
                return invalid(format!("advertiser identity `{name}` is not a domain"));
            }
            if !a.uplift.is_finite() || a.uplift < 1.0 {
                return invalid(format!("{name}: uplift must be >= 1, got {}", a.uplift));
            }
            if !a.base_mu.is_finite() || !a.base_sigma.is_finite() || a.base_sigma < 0.0 {
                return invalid(format!(
                    "{name}: base_mu must be finite and base_sigma >= 0"
                ));
            }
            if !(0.0..=1.0).contains(&a.reach) {
                return invalid(format!("{name}: reach must lie in [0, 1]"));
            }
            for p in &a.partners {
                if p.to == *name {
                    return invalid(format!("{name}: partners must not include itself"));
                }
                if !identities.contains(p.to.as_str()) {
                    return invalid(format!("{name}: unknown partner `{}`", p.to));
                }
            }
        }
        Ok(())
    }

    /// Stable identifier of this exact scenario, seed included.
    pub fn run_id(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(&Sha256::digest(&canonical)[..8])
    }

    pub fn advertiser(&self, identity: &str) -> Option<&AdvertiserProfile> {
        self.advertisers.iter().find(|a| a.identity == identity)
    }
}
