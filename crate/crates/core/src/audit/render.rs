//! Report rendering. Every report is first lowered to a [`Table`] of typed
//! cells; the three output formats are views of that table.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{format_percent, AuditError, BidTable, ConsentTable, PrevalenceTable, UnknownTable};
use crate::model::{Mechanism, Persona, Regime};
use crate::stats::MarkerClass;
use crate::sync::SyncStatsRow;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    /// One JSON record per value cell.
    Structured,
    Markdown,
}

impl Format {
    pub const ALL: [Format; 3] = [Format::Csv, Format::Structured, Format::Markdown];

    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Structured => "jsonl",
            Format::Markdown => "md",
        }
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "structured" | "jsonl" | "json" => Ok(Format::Structured),
            "markdown" | "md" => Ok(Format::Markdown),
            other => Err(format!("unknown report format `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Cell {
    /// Absent data, printed `--`.
    Missing,
    Text(String),
    Count(usize),
    Value {
        value: f64,
        marker: Option<MarkerClass>,
    },
    /// Percentage printed with two decimals.
    Percent(f64),
    /// Percentage printed with one decimal.
    Percent1(f64),
}

impl Cell {
    fn value(v: Option<f64>, marker: Option<MarkerClass>) -> Cell {
        v.map_or(Cell::Missing, |value| Cell::Value { value, marker })
    }

    fn text(&self, markdown: bool) -> String {
        match self {
            Cell::Missing => "--".to_string(),
            Cell::Text(t) => t.clone(),
            Cell::Count(n) => n.to_string(),
            Cell::Value { value, marker } => {
                let mut s = format_value(*value);
                if let Some(m) = marker {
                    s.push_str(if markdown { m.arrow() } else { m.glyph() });
                }
                s
            }
            Cell::Percent(p) => format_percent(*p),
            Cell::Percent1(p) => format!("{p:.1}"),
        }
    }
}

/// Two decimals, or one significant decimal in exponent form for values too
/// small to survive that (`5.0E-4`).
pub fn format_value(v: f64) -> String {
    if v == 0.0 || v.abs() >= 0.005 {
        format!("{v:.2}")
    } else {
        format!("{v:.1E}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    /// File stem, e.g. `bids_gdpr`.
    pub name: String,
    pub title: String,
    /// Column names; the first labels the rows.
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

#[derive(Serialize)]
struct Record<'a> {
    table: &'a str,
    row: String,
    column: &'a str,
    value: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    marker: Option<&'static str>,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn render(table: &Table, format: Format) -> String {
    let mut out = String::new();
    match format {
        Format::Csv => {
            let line = |cells: Vec<String>| {
                cells
                    .iter()
                    .map(|c| csv_field(c))
                    .collect::<Vec<_>>()
                    .join(",")
            };
            out.push_str(&line(table.header.clone()));
            out.push('\n');
            for row in &table.rows {
                out.push_str(&line(row.iter().map(|c| c.text(false)).collect()));
                out.push('\n');
            }
        }
        Format::Markdown => {
            let _ = writeln!(out, "## {}\n", table.title);
            let _ = writeln!(out, "| {} |", table.header.join(" | "));
            let _ = writeln!(out, "|{}", "---|".repeat(table.header.len()));
            for row in &table.rows {
                let cells: Vec<String> = row.iter().map(|c| c.text(true)).collect();
                let _ = writeln!(out, "| {} |", cells.join(" | "));
            }
        }
        Format::Structured => {
            for row in &table.rows {
                let label = row.first().map(|c| c.text(false)).unwrap_or_default();
                for (cell, column) in row.iter().zip(&table.header).skip(1) {
                    let (value, marker) = match cell {
                        Cell::Missing => (serde_json::Value::Null, None),
                        Cell::Text(t) => (t.clone().into(), None),
                        Cell::Count(n) => ((*n as u64).into(), None),
                        Cell::Value { value, marker } => {
                            ((*value).into(), marker.map(MarkerClass::glyph))
                        }
                        Cell::Percent(p) | Cell::Percent1(p) => ((*p).into(), None),
                    };
                    let record = Record {
                        table: &table.name,
                        row: label.clone(),
                        column,
                        value,
                        marker,
                    };
                    out.push_str(&serde_json::to_string(&record).expect("record serializes"));
                    out.push('\n');
                }
            }
        }
    }
    out
}

/// Write `contents` to `path`, naming the path in any error.
pub fn write_file(path: &Path, contents: &[u8]) -> Result<(), AuditError> {
    std::fs::write(path, contents).map_err(|source| AuditError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Render `table` into `dir/<name>.<ext>`.
pub fn write_table(dir: &Path, table: &Table, format: Format) -> Result<PathBuf, AuditError> {
    let path = dir.join(format!("{}.{}", table.name, format.extension()));
    write_file(&path, render(table, format).as_bytes())?;
    Ok(path)
}

/// Serialize each item as one JSON line.
pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("record serializes"));
        out.push('\n');
    }
    out
}

fn regime_slug(regime: Regime) -> String {
    regime.as_str().to_ascii_lowercase()
}

pub fn bid_table_report(table: &BidTable) -> Table {
    let mut header = vec!["Persona".to_string()];
    for (m, c) in &table.columns {
        header.push(format!("{m} {c} Avg"));
        header.push(format!("{m} {c} Std"));
    }
    let rows = table
        .rows
        .iter()
        .map(|row| {
            let mut cells = vec![Cell::Text(row.persona.to_string())];
            for cell in &row.cells {
                cells.push(Cell::value(cell.summary.map(|s| s.avg), cell.marker));
                cells.push(Cell::value(cell.summary.map(|s| s.std), None));
            }
            cells
        })
        .collect();
    Table {
        name: format!("bids_{}", regime_slug(table.regime)),
        title: format!("Ad bidding under {}", table.regime),
        header,
        rows,
    }
}

pub fn consent_report(table: &ConsentTable) -> Table {
    let mut header = vec!["Persona".to_string()];
    for r in Regime::ALL {
        for m in Mechanism::ALL {
            header.push(format!("{r} {m} P"));
            header.push(format!("{r} {m} E"));
        }
    }
    let rows = Persona::categories()
        .map(|persona| {
            let mut cells = vec![Cell::Text(persona.to_string())];
            for &r in Regime::ALL {
                for &m in Mechanism::ALL {
                    let row = table.get(r, m, persona);
                    cells.push(Cell::value(row.and_then(|r| r.p), None));
                    let e = row
                        .and_then(|r| r.effect)
                        .filter(|e| e.defined)
                        .map(|e| e.r);
                    cells.push(Cell::value(e, None));
                }
            }
            cells
        })
        .collect();
    Table {
        name: "consent_tests".into(),
        title: "Opt-out versus opt-in (Mann-Whitney U)".into(),
        header,
        rows,
    }
}

pub fn unknown_report(table: &UnknownTable) -> Table {
    let mut header = vec!["Persona".to_string()];
    for (r, m) in &table.columns {
        header.push(format!("{r} {m} Avg"));
        header.push(format!("{r} {m} Std"));
    }
    let rows = table
        .rows
        .iter()
        .map(|row| {
            let mut cells = vec![Cell::Text(row.persona.to_string())];
            for cell in &row.cells {
                cells.push(Cell::value(cell.summary.map(|s| s.avg), cell.marker));
                cells.push(Cell::value(cell.summary.map(|s| s.std), None));
            }
            cells
        })
        .collect();
    Table {
        name: "unknown_advertisers".into(),
        title: "Opt-out bids from advertisers never exposed to the persona".into(),
        header,
        rows,
    }
}

pub fn prevalence_report(table: &PrevalenceTable) -> Table {
    let mut header = vec!["Advertiser".to_string()];
    header.extend(Regime::ALL.iter().map(|r| r.to_string()));
    let rows = table
        .rows
        .iter()
        .map(|row| {
            let mut cells = vec![Cell::Text(row.advertiser.clone())];
            for r in Regime::ALL {
                cells.push(
                    row.pct
                        .get(r)
                        .copied()
                        .flatten()
                        .map_or(Cell::Missing, Cell::Percent),
                );
            }
            cells
        })
        .collect();
    Table {
        name: "prevalence".into(),
        title: "Most prevalent advertisers after opting out".into(),
        header,
        rows,
    }
}

/// Cookie-sync counts for one regime, one row per persona with an average
/// row at the bottom.
pub fn sync_report(rows: &[SyncStatsRow], regime: Regime) -> Table {
    let columns: Vec<_> = super::bid_table::table_columns();
    let mut header = vec!["Persona".to_string()];
    for (m, c) in &columns {
        header.push(format!("{m} {c} Evt"));
        header.push(format!("{m} {c} Pct"));
    }
    let find = |p: Persona, m: Mechanism, c| {
        rows.iter().find(|r| {
            r.config.regime == regime
                && r.config.persona == p
                && r.config.mechanism == m
                && r.config.consent == c
        })
    };
    let mut body: Vec<Vec<Cell>> = Persona::ALL
        .iter()
        .filter(|&&p| columns.iter().any(|&(m, c)| find(p, m, c).is_some()))
        .map(|&p| {
            let mut cells = vec![Cell::Text(p.to_string())];
            for &(m, c) in &columns {
                match find(p, m, c) {
                    Some(row) if row.events > 0 => {
                        cells.push(Cell::Count(row.events));
                        cells.push(row.pct.map_or(Cell::Missing, Cell::Percent1));
                    }
                    _ => {
                        cells.push(Cell::Missing);
                        cells.push(Cell::Missing);
                    }
                }
            }
            cells
        })
        .collect();
    if !body.is_empty() {
        let mut avg = vec![Cell::Text("Average".into())];
        for &(m, c) in &columns {
            let cats: Vec<_> = Persona::categories()
                .filter_map(|p| find(p, m, c))
                .collect();
            let events = cats.iter().map(|r| r.events).sum::<usize>() as f64
                / Persona::CATEGORY_COUNT as f64;
            let pcts: Vec<f64> = cats
                .iter()
                .filter(|r| r.events > 0)
                .filter_map(|r| r.pct)
                .collect();
            avg.push(Cell::Count(events.round() as usize));
            avg.push(if pcts.is_empty() {
                Cell::Missing
            } else {
                Cell::Percent1(pcts.iter().sum::<f64>() / pcts.len() as f64)
            });
        }
        body.push(avg);
    }
    Table {
        name: format!("syncs_{}", regime_slug(regime)),
        title: format!("Cookie syncing under {regime}"),
        header,
        rows: body,
    }
}
