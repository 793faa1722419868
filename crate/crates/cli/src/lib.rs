//! Command-line front end: simulate, sync-scan, audit, report, validate.

mod manifest;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use consent_audit::audit::render::{self, Format, Table};
use consent_audit::audit::{AuditError, AuditOptions, ControlRestriction, LeakedSet};
use consent_audit::ingest::{
    parse_bid_log, parse_http_log, partition_sessions, write_bid_log, write_http_log, IngestError,
    ParseReport,
};
use consent_audit::model::Regime;
use consent_audit::pipeline::{run_audit, scan_syncs, validate_scenario, PipelineError};
use consent_audit::sim::{simulate, SimConfig, SimError};
use consent_audit::stats::StdKind;
use consent_audit::sync::{sync_stats, ExtractOptions};
use serde::Serialize;
use thiserror::Error;

use manifest::{read_input, OutputDir};
pub use manifest::{FileDigest, RunManifest, MANIFEST_NAME};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Ingest {
        path: PathBuf,
        #[source]
        source: IngestError,
    },
    #[error("{path}: {reason}")]
    Invalid { path: PathBuf, reason: String },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error("validation floors not met: {0}")]
    Floors(String),
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Sim(e) => CliError::Sim(e),
            PipelineError::Audit(e) => CliError::Audit(e),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Audit(AuditError::Io { .. }) => 2,
            CliError::Floors(_) => 3,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "consent-audit",
    version,
    about = "Audit advertisers against registered opt-out consent"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the synthetic ecosystem and write its logs and ground truth.
    Simulate(SimulateArgs),
    /// Find identifier flows between parties in an HTTP log.
    SyncScan(SyncScanArgs),
    /// Build the report tables and verdicts from a bid log and an HTTP log.
    Audit(AuditArgs),
    /// Re-render the tables of an earlier audit in another format.
    Report(ReportArgs),
    /// Simulate, audit and score a scenario over several seeds.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Scenario file (TOML).
    #[arg(long, alias = "scenario")]
    config: PathBuf,
    /// Override the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ExtractArgs {
    /// Shortest value considered an identifier.
    #[arg(long, default_value_t = 8)]
    min_id_length: usize,
    /// Shannon entropy floor for identifiers, in bits per character.
    #[arg(long, default_value_t = 2.5)]
    min_entropy: f64,
}

impl ExtractArgs {
    fn options(&self) -> ExtractOptions {
        ExtractOptions {
            min_id_length: self.min_id_length,
            min_entropy: self.min_entropy,
        }
    }
}

#[derive(Debug, Args)]
struct SyncScanArgs {
    #[arg(long)]
    http: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    extract: ExtractArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StdArg {
    Population,
    Sample,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ControlArg {
    /// Drop advertisers in any persona's leaked set from the control.
    Union,
    /// Compare against every control bid.
    All,
}

#[derive(Debug, Args)]
struct AuditFlags {
    /// Variance denominator for reported standard deviations.
    #[arg(long, value_enum, default_value_t = StdArg::Population)]
    std: StdArg,
    /// Bonferroni-adjust the opt-out/opt-in p-values.
    #[arg(long)]
    bonferroni: bool,
    /// Control bids used by the unknown-advertiser table.
    #[arg(long, value_enum, default_value_t = ControlArg::Union)]
    control: ControlArg,
    /// Leave a CMP out of an advertiser's prevalence when it never bid there.
    #[arg(long)]
    exclude_absent: bool,
    /// Rows kept in the prevalence table; 0 keeps all.
    #[arg(long, default_value_t = 5)]
    top_k: usize,
    /// Bids needed on each side before an advertiser's cell is judged.
    #[arg(long, default_value_t = 8)]
    min_advertiser_bids: usize,
    /// Share of judged cells that must be flagged to flag an advertiser.
    #[arg(long, default_value_t = 0.5)]
    flag_fraction: f64,
    #[command(flatten)]
    extract: ExtractArgs,
}

impl AuditFlags {
    fn options(&self) -> Result<AuditOptions, CliError> {
        if !(0.0..=1.0).contains(&self.flag_fraction) {
            return Err(CliError::Usage(format!(
                "--flag-fraction must lie in [0, 1], got {}",
                self.flag_fraction
            )));
        }
        Ok(AuditOptions {
            std_kind: match self.std {
                StdArg::Population => StdKind::Population,
                StdArg::Sample => StdKind::Sample,
            },
            bonferroni: self.bonferroni,
            control_restriction: match self.control {
                ControlArg::Union => ControlRestriction::UnionOfLeaked,
                ControlArg::All => ControlRestriction::Unrestricted,
            },
            prevalence_exclude_absent: self.exclude_absent,
            prevalence_top_k: self.top_k,
            min_advertiser_bids: self.min_advertiser_bids,
            advertiser_flag_fraction: self.flag_fraction,
        })
    }
}

#[derive(Debug, Args)]
struct AuditArgs {
    #[arg(long)]
    bids: PathBuf,
    #[arg(long)]
    http: PathBuf,
    /// Leaked-set file (JSON) from persona building.
    #[arg(long)]
    leaked: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// csv, structured (JSON lines) or markdown.
    #[arg(long, default_value = "csv")]
    format: Format,
    #[command(flatten)]
    flags: AuditFlags,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// `tables.json` written by `audit`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    format: Format,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long, alias = "config")]
    scenario: PathBuf,
    /// Number of consecutive seeds, starting at the scenario's.
    #[arg(long, default_value_t = 30)]
    seeds: u64,
    #[arg(long, default_value_t = 0.9)]
    min_precision: f64,
    #[arg(long, default_value_t = 0.9)]
    min_recall: f64,
    /// Also write the per-seed scores and a manifest here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    flags: AuditFlags,
}

/// Parse `argv` (program name first), run the subcommand and return the
/// process exit code. Diagnostics go to `stderr`, results to `stdout`.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                return 1;
            }
            let _ = write!(stdout, "{text}");
            return 0;
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(&a, stdout),
        Command::SyncScan(a) => cmd_sync_scan(&a, stdout, stderr),
        Command::Audit(a) => cmd_audit(&a, stdout, stderr),
        Command::Report(a) => cmd_report(&a, stdout),
        Command::Validate(a) => cmd_validate(&a, stdout),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn jsonl<T: Serialize>(items: &[T]) -> String {
    render::to_jsonl(items)
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s
}

fn warn_rejections(stderr: &mut dyn Write, path: &Path, report: &ParseReport) {
    if !report.is_clean() {
        let _ = writeln!(
            stderr,
            "warning: {}: skipped {} record(s), kept {}",
            path.display(),
            report.rejected.len(),
            report.accepted
        );
    }
}

fn cmd_simulate(a: &SimulateArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let input = read_input(&a.config)?;
    let mut config = SimConfig::from_toml(&input.text)?;
    if let Some(seed) = a.seed {
        config = config.with_seed(seed);
    }
    let out = simulate(&config)?;
    let mut dir = OutputDir::new(&a.out);
    dir.add("bids.log", write_bid_log(&out.bids));
    dir.add("http.log", write_http_log(&out.events));
    dir.add("leaked.json", pretty(&out.leaked));
    dir.add("truth.json", pretty(&out.truth));
    dir.finish("simulate", vec![input.digest], Some(config.seed))?;
    let _ = writeln!(
        stdout,
        "run {}: {} bids, {} requests, {} planted flows",
        out.truth.run_id,
        out.bids.len(),
        out.events.len(),
        out.truth.planted.len()
    );
    Ok(())
}

fn ingest_err(path: &Path) -> impl FnOnce(IngestError) -> CliError + '_ {
    move |source| CliError::Ingest {
        path: path.to_path_buf(),
        source,
    }
}

fn cmd_sync_scan(
    a: &SyncScanArgs,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<(), CliError> {
    let input = read_input(&a.http)?;
    let log = parse_http_log(&input.text).map_err(ingest_err(&a.http))?;
    warn_rejections(stderr, &a.http, &log.report);
    let sessions = partition_sessions(Vec::new(), log.events);
    let scan = scan_syncs(&sessions, &a.extract.options());
    let stats = sync_stats(&scan.syncs, &sessions);

    let mut dir = OutputDir::new(&a.out);
    dir.add("syncs.jsonl", jsonl(&scan.syncs));
    for &regime in Regime::ALL {
        if stats.iter().any(|r| r.config.regime == regime) {
            let table = render::sync_report(&stats, regime);
            dir.add(
                format!("{}.csv", table.name),
                render::render(&table, Format::Csv),
            );
        }
    }
    dir.finish("sync-scan", vec![input.digest], None)?;
    let d = &scan.diagnostics;
    let _ = writeln!(
        stdout,
        "{} sync events; dropped candidates: {} short, {} low-entropy, {} deny-listed, {} claimed elsewhere",
        scan.syncs.len(),
        d.too_short,
        d.low_entropy,
        d.deny_listed,
        d.claimed_elsewhere
    );
    Ok(())
}

fn cmd_audit(
    a: &AuditArgs,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<(), CliError> {
    let options = a.flags.options()?;
    let bids_in = read_input(&a.bids)?;
    let http_in = read_input(&a.http)?;
    let leaked_in = read_input(&a.leaked)?;
    let bids = parse_bid_log(&bids_in.text).map_err(ingest_err(&a.bids))?;
    warn_rejections(stderr, &a.bids, &bids.report);
    let http = parse_http_log(&http_in.text).map_err(ingest_err(&a.http))?;
    warn_rejections(stderr, &a.http, &http.report);
    let leaked: LeakedSet =
        serde_json::from_str(&leaked_in.text).map_err(|e| CliError::Invalid {
            path: a.leaked.clone(),
            reason: e.to_string(),
        })?;

    let sessions = partition_sessions(bids.records, http.events);
    let report = run_audit(&sessions, &leaked, &options, &a.flags.extract.options())?;
    let tables = report.tables();

    let mut dir = OutputDir::new(&a.out);
    for table in &tables {
        dir.add(
            format!("{}.{}", table.name, a.format.extension()),
            render::render(table, a.format),
        );
    }
    dir.add("verdicts.jsonl", jsonl(&report.verdicts));
    dir.add("advertisers.jsonl", jsonl(&report.advertisers));
    dir.add("syncs.jsonl", jsonl(&report.syncs));
    dir.add("tables.json", pretty(&tables));
    dir.finish(
        "audit",
        vec![bids_in.digest, http_in.digest, leaked_in.digest],
        None,
    )?;
    let flagged_cells = report
        .verdicts
        .iter()
        .filter(|v| v.non_compliance_flag)
        .count();
    let flagged: Vec<&str> = report
        .advertisers
        .iter()
        .filter(|v| v.flagged)
        .map(|v| v.advertiser.as_str())
        .collect();
    let _ = writeln!(
        stdout,
        "{} of {} persona cells flagged; advertisers flagged: {}",
        flagged_cells,
        report.verdicts.len(),
        if flagged.is_empty() {
            "none".to_string()
        } else {
            flagged.join(", ")
        }
    );
    Ok(())
}

fn cmd_report(a: &ReportArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let input = read_input(&a.input)?;
    let tables: Vec<Table> = serde_json::from_str(&input.text).map_err(|e| CliError::Invalid {
        path: a.input.clone(),
        reason: e.to_string(),
    })?;
    let mut dir = OutputDir::new(&a.out);
    for table in &tables {
        dir.add(
            format!("{}.{}", table.name, a.format.extension()),
            render::render(table, a.format),
        );
    }
    dir.finish("report", vec![input.digest], None)?;
    let _ = writeln!(stdout, "{} tables rendered", tables.len());
    Ok(())
}

#[derive(Serialize)]
struct ValidationFile<'a> {
    scenario_seed: u64,
    seeds: u64,
    min_precision: f64,
    min_recall: f64,
    precision: Option<f64>,
    recall: f64,
    passed: bool,
    #[serde(flatten)]
    validation: &'a consent_audit::pipeline::Validation,
}

fn show_precision(p: Option<f64>) -> String {
    p.map_or_else(|| "--".to_string(), |p| format!("{p:.3}"))
}

fn cmd_validate(a: &ValidateArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let options = a.flags.options()?;
    if a.seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    let input = read_input(&a.scenario)?;
    let config = SimConfig::from_toml(&input.text)?;
    let validation = validate_scenario(&config, a.seeds, &options, &a.flags.extract.options())?;

    for s in &validation.per_seed {
        let e = &s.evaluation;
        let _ = writeln!(
            stdout,
            "seed {:>6}: tp {} fp {} fn {} tn {}  precision {}  recall {:.3}",
            s.seed,
            e.true_positives,
            e.false_positives,
            e.false_negatives,
            e.true_negatives,
            show_precision(e.precision()),
            e.recall()
        );
    }
    let total = validation.aggregate;
    let precision = total.precision();
    let recall = total.recall();
    // No flags at all leaves precision undefined; recall then decides.
    let passed = precision.is_none_or(|p| p >= a.min_precision) && recall >= a.min_recall;
    let _ = writeln!(
        stdout,
        "aggregate over {} seeds: precision {}  recall {:.3}",
        a.seeds,
        show_precision(precision),
        recall
    );

    if let Some(out) = &a.out {
        let mut dir = OutputDir::new(out);
        dir.add(
            "validation.json",
            pretty(&ValidationFile {
                scenario_seed: config.seed,
                seeds: a.seeds,
                min_precision: a.min_precision,
                min_recall: a.min_recall,
                precision,
                recall,
                passed,
                validation: &validation,
            }),
        );
        dir.finish("validate", vec![input.digest], Some(config.seed))?;
    }
    if passed {
        Ok(())
    } else {
        Err(CliError::Floors(format!(
            "precision {} (floor {}), recall {:.3} (floor {})",
            show_precision(precision),
            a.min_precision,
            recall,
            a.min_recall
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(args.iter().copied(), &mut out, &mut err);
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        let (code, out, err) = run_capture(&["consent-audit", "audit", "--frobnicate"]);
        assert_eq!(code, 1);
        assert!(out.is_empty());
        assert!(err.contains("Usage"), "{err}");
    }

    #[test]
    fn help_goes_to_stdout() {
        let (code, out, _) = run_capture(&["consent-audit", "--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("sync-scan"));
    }

    #[test]
    fn missing_input_is_io_error() {
        let (code, _, err) = run_capture(&[
            "consent-audit",
            "simulate",
            "--config",
            "/nonexistent/scenario.toml",
            "--out",
            "/tmp/unused",
        ]);
        assert_eq!(code, 2);
        assert!(err.contains("/nonexistent/scenario.toml"));
    }

    #[test]
    fn exit_codes_by_error_kind() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), 1);
        assert_eq!(CliError::Sim(SimError::Invalid("x".into())).exit_code(), 1);
        assert_eq!(CliError::Floors("x".into()).exit_code(), 3);
        let io = || std::io::Error::new(std::io::ErrorKind::NotFound, "gone");
        assert_eq!(
            CliError::Io {
                path: "p".into(),
                source: io()
            }
            .exit_code(),
            2
        );
        assert_eq!(
            CliError::Audit(AuditError::Io {
                path: "p".into(),
                source: io()
            })
            .exit_code(),
            2
        );
    }
}
