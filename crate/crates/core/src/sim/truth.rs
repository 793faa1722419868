use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::Profile;
use crate::audit::LeakedSet;
use crate::model::{ConfigKey, Iteration, SessionKey};
use crate::sync::{Channel, Encoding};

/// An advertiser learning a persona's interests from a sync partner.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct KnowledgeEdge {
    pub config: ConfigKey,
    /// Visit during which the identifier was forwarded; the receiver bids on
    /// the knowledge from the next visit on.
    pub iteration: Iteration,
    pub from: String,
    pub to: String,
}

/// An identifier flow the simulator wrote into the HTTP log.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PlantedFlow {
    /// The request that carried the identifier to the receiver.
    pub event_id: String,
    pub session: SessionKey,
    pub sender: String,
    pub receiver: String,
    pub value: String,
    pub encoding: Encoding,
    pub channel: Channel,
}

/// Advertisers holding a persona's interests at the end of one measurement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeHolders {
    pub config: ConfigKey,
    pub advertisers: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub run_id: String,
    pub seed: u64,
    pub profiles: BTreeMap<String, Profile>,
    pub leaked: LeakedSet,
    pub knowledge_edges: Vec<KnowledgeEdge>,
    pub holders: Vec<KnowledgeHolders>,
    pub planted: Vec<PlantedFlow>,
}

impl GroundTruth {
    pub fn non_compliant(&self) -> BTreeSet<&str> {
        self.profiles
            .iter()
            .filter(|(_, p)| !p.is_compliant())
            .map(|(a, _)| a.as_str())
            .collect()
    }
}
