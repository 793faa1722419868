//! Compliance auditing for advertisers that keep processing or sharing user
//! data after an opt-out.
//!
//! The crate turns bid logs and HTTP logs into the audit's evidence: bid
//! summaries against an empty-profile control, opt-out versus opt-in rank
//! tests, bids from advertisers that never saw the persona, and cookie-sync
//! flows. A seeded ad-ecosystem simulator with ground-truth labels closes the
//! loop so the whole inference chain can be scored.

pub mod audit;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod sim;
pub mod stats;
pub mod sync;

pub use model::{
    BidRecord, ConfigKey, Consent, HttpEvent, Iteration, Mechanism, NameValue, Persona, Regime,
    SessionKey,
};
