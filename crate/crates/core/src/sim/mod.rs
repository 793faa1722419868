//! Seeded ad-ecosystem simulator with ground-truth labels.
//!
//! Advertisers carry a compliance profile, a log-normal CPM model with a
//! multiplicative uplift for known interests, and sync partnerships. The
//! simulator walks the measurement protocol (persona building, then opt-out
//! or opt-in sessions with three bid-collection visits) and records what
//! every advertiser knew and forwarded.

mod config;
mod engine;
mod evaluate;
mod rng;
mod truth;

use thiserror::Error;

pub use config::{AdvertiserProfile, Partner, PersonaSpec, Profile, SimConfig};
pub use engine::{simulate, SimOutput};
pub use evaluate::{evaluate_audit, Evaluation};
pub use truth::{GroundTruth, KnowledgeEdge, KnowledgeHolders, PlantedFlow};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("verdicts belong to run `{found}`, ground truth to run `{expected}`")]
    RunMismatch { expected: String, found: String },
}
