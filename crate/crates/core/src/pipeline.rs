//! End-to-end wiring: logs to reports, and simulate-audit-evaluate loops.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audit::{
    advertiser_prevalence, advertiser_verdicts, assemble_verdicts, build_bid_tables, consent_table,
    render, unknown_advertiser_bids, AdvertiserVerdict, AuditError, AuditOptions, AuditVerdict,
    BidTable, ConsentTable, LeakedSet, PrevalenceTable, UnknownTable,
};
use crate::ingest::{partition_sessions, Sessions};
use crate::model::Regime;
use crate::sim::{evaluate_audit, simulate, Evaluation, SimConfig, SimError};
use crate::sync::{
    detect_syncs, extract_identifiers, sync_stats, ExtractDiagnostics, ExtractOptions, SyncEvent,
    SyncStatsRow,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Audit(#[from] AuditError),
}

/// Sync events of a whole log plus what identifier extraction discarded.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SyncScan {
    pub syncs: Vec<SyncEvent>,
    pub diagnostics: ExtractDiagnostics,
}

/// Every measurement configuration is its own browser profile, so
/// identifiers are extracted and matched within one configuration at a time.
pub fn scan_syncs(sessions: &Sessions, options: &ExtractOptions) -> SyncScan {
    let by_config: Vec<_> = sessions.events_by_config().into_iter().collect();
    let per_config: Vec<_> = by_config
        .par_iter()
        .map(|(_, events)| {
            let extraction = extract_identifiers(events.iter().copied(), options);
            let syncs = detect_syncs(events.iter().copied(), &extraction.candidates);
            (syncs, extraction.diagnostics)
        })
        .collect();
    let mut scan = SyncScan::default();
    for (syncs, d) in per_config {
        scan.syncs.extend(syncs);
        scan.diagnostics.too_short += d.too_short;
        scan.diagnostics.low_entropy += d.low_entropy;
        scan.diagnostics.deny_listed += d.deny_listed;
        scan.diagnostics.claimed_elsewhere += d.claimed_elsewhere;
    }
    scan
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub run_id: Option<String>,
    pub bid_tables: Vec<BidTable>,
    pub consent: ConsentTable,
    pub unknown: UnknownTable,
    pub prevalence: PrevalenceTable,
    pub verdicts: Vec<AuditVerdict>,
    pub advertisers: Vec<AdvertiserVerdict>,
    pub syncs: Vec<SyncEvent>,
    pub sync_stats: Vec<SyncStatsRow>,
}

impl AuditReport {
    /// The report tables in a fixed order, ready for rendering.
    pub fn tables(&self) -> Vec<render::Table> {
        let mut tables: Vec<_> = self
            .bid_tables
            .iter()
            .map(render::bid_table_report)
            .collect();
        tables.push(render::consent_report(&self.consent));
        tables.push(render::unknown_report(&self.unknown));
        tables.push(render::prevalence_report(&self.prevalence));
        for &regime in Regime::ALL {
            if self.sync_stats.iter().any(|r| r.config.regime == regime) {
                tables.push(render::sync_report(&self.sync_stats, regime));
            }
        }
        tables
    }
}

pub fn run_audit(
    sessions: &Sessions,
    leaked: &LeakedSet,
    options: &AuditOptions,
    extract: &ExtractOptions,
) -> Result<AuditReport, AuditError> {
    leaked.validate()?;
    let bid_tables = build_bid_tables(sessions, options.std_kind)?;
    let consent = consent_table(sessions, options.bonferroni);
    let verdicts = assemble_verdicts(&bid_tables, &consent);
    let unknown = unknown_advertiser_bids(
        sessions,
        leaked,
        options.control_restriction,
        options.std_kind,
    );
    let prevalence = advertiser_prevalence(
        sessions,
        options.prevalence_exclude_absent,
        options.prevalence_top_k,
    );
    let syncs = scan_syncs(sessions, extract).syncs;
    let stats = sync_stats(&syncs, sessions);
    let advertisers = advertiser_verdicts(sessions, leaked, &syncs, options);
    Ok(AuditReport {
        run_id: leaked.run_id.clone(),
        bid_tables,
        consent,
        unknown,
        prevalence,
        verdicts,
        advertisers,
        syncs,
        sync_stats: stats,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedEvaluation {
    pub seed: u64,
    pub evaluation: Evaluation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub per_seed: Vec<SeedEvaluation>,
    pub aggregate: Evaluation,
}

/// Simulate, audit and score one seed.
pub fn validate_seed(
    config: &SimConfig,
    options: &AuditOptions,
    extract: &ExtractOptions,
) -> Result<Evaluation, PipelineError> {
    let out = simulate(config)?;
    let sessions = partition_sessions(out.bids, out.events);
    let report = run_audit(&sessions, &out.leaked, options, extract)?;
    Ok(evaluate_audit(
        report.run_id.as_deref(),
        &report.advertisers,
        &out.truth,
    )?)
}

/// Run `seeds` consecutive seeds starting at the scenario's own.
pub fn validate_scenario(
    config: &SimConfig,
    seeds: u64,
    options: &AuditOptions,
    extract: &ExtractOptions,
) -> Result<Validation, PipelineError> {
    let per_seed = (0..seeds)
        .into_par_iter()
        .map(|i| {
            let seed = config.seed.wrapping_add(i);
            validate_seed(&config.clone().with_seed(seed), options, extract)
                .map(|evaluation| SeedEvaluation { seed, evaluation })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut aggregate = Evaluation::default();
    for s in &per_seed {
        aggregate.merge(&s.evaluation);
    }
    Ok(Validation {
        per_seed,
        aggregate,
    })
}
