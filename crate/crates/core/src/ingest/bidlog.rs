use rayon::prelude::*;
use serde::Serialize;
use serde_json::{Map, Value};

use super::{split_header, IngestError, ParseReport, Rejection, LOG_HEADER};
use crate::model::{BidRecord, Consent, Iteration, Mechanism, Persona, Regime, UnknownLabel};

const FIELDS: [&str; 9] = [
    "persona",
    "site",
    "advertiser",
    "cpm",
    "regime",
    "mechanism",
    "consent",
    "iteration",
    "ts",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BidLog {
    pub records: Vec<BidRecord>,
    pub report: ParseReport,
}

enum LineOutcome {
    Record(BidRecord),
    Rejected(Rejection),
}

/// Parse a line-delimited bid log.
///
/// Structural problems (bad JSON, missing or extra fields, negative CPM,
/// iteration outside 1..=3) abort the parse. Labels outside the closed
/// persona/regime/mechanism/consent sets only reject their own line.
pub fn parse_bid_log(input: &str) -> Result<BidLog, IngestError> {
    let Some(body) = split_header(input)? else {
        return Ok(BidLog::default());
    };
    // Line numbers are 1-based and count the header.
    let lines: Vec<(usize, &str)> = body
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 2, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();

    let outcomes: Vec<Result<LineOutcome, IngestError>> = lines
        .par_iter()
        .map(|&(line, text)| parse_line(line, text))
        .collect();

    let mut log = BidLog::default();
    for outcome in outcomes {
        match outcome? {
            LineOutcome::Record(r) => log.records.push(r),
            LineOutcome::Rejected(r) => log.report.rejected.push(r),
        }
    }
    log.report.accepted = log.records.len();
    Ok(log)
}

fn malformed(line: usize, field: &str, reason: impl Into<String>) -> IngestError {
    IngestError::Malformed {
        line,
        field: field.to_string(),
        reason: reason.into(),
    }
}

fn parse_line(line: usize, text: &str) -> Result<LineOutcome, IngestError> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| malformed(line, "<record>", e.to_string()))?;
    let Value::Object(obj) = value else {
        return Err(malformed(line, "<record>", "expected a JSON object"));
    };
    if let Some(extra) = obj.keys().find(|k| !FIELDS.contains(&k.as_str())) {
        return Err(malformed(line, extra, "unexpected field"));
    }

    let string = |field: &str| -> Result<&str, IngestError> {
        match obj.get(field) {
            Some(Value::String(s)) => Ok(s.as_str()),
            Some(_) => Err(malformed(line, field, "expected a string")),
            None => Err(malformed(line, field, "missing field")),
        }
    };

    let site = string("site")?;
    let advertiser = string("advertiser")?;
    if advertiser.is_empty() {
        return Err(malformed(line, "advertiser", "empty advertiser"));
    }
    let cpm = number(&obj, line, "cpm")?;
    if !cpm.is_finite() || cpm < 0.0 {
        return Err(malformed(
            line,
            "cpm",
            format!("cpm must be >= 0, got {cpm}"),
        ));
    }
    let iteration = number(&obj, line, "iteration")?;
    let iteration = (iteration.fract() == 0.0 && (1.0..=3.0).contains(&iteration))
        .then(|| Iteration::new(iteration as u8))
        .flatten()
        .ok_or_else(|| {
            malformed(
                line,
                "iteration",
                format!("expected 1..=3, got {iteration}"),
            )
        })?;
    let ts = match obj.get("ts") {
        Some(Value::Number(n)) => n
            .as_i64()
            .ok_or_else(|| malformed(line, "ts", "expected an integer"))?,
        Some(_) => return Err(malformed(line, "ts", "expected an integer")),
        None => return Err(malformed(line, "ts", "missing field")),
    };

    let labels = (
        label::<Persona>(string("persona")?, "persona", line),
        label::<Regime>(string("regime")?, "regime", line),
        label::<Mechanism>(string("mechanism")?, "mechanism", line),
        label::<Consent>(string("consent")?, "consent", line),
    );
    let (persona, regime, mechanism, consent) = match labels {
        (Ok(p), Ok(r), Ok(m), Ok(c)) => (p, r, m, c),
        (p, r, m, c) => {
            let rejection = [p.err(), r.err(), m.err(), c.err()]
                .into_iter()
                .flatten()
                .next()
                .expect("at least one label failed");
            return Ok(LineOutcome::Rejected(rejection));
        }
    };

    Ok(LineOutcome::Record(BidRecord {
        persona,
        site: site.to_string(),
        advertiser: advertiser.to_string(),
        cpm,
        regime,
        mechanism,
        consent,
        iteration,
        timestamp: ts,
    }))
}

fn number(obj: &Map<String, Value>, line: usize, field: &str) -> Result<f64, IngestError> {
    match obj.get(field) {
        Some(Value::Number(n)) => n
            .as_f64()
            .ok_or_else(|| malformed(line, field, "number out of range")),
        Some(_) => Err(malformed(line, field, "expected a number")),
        None => Err(malformed(line, field, "missing field")),
    }
}

fn label<T: std::str::FromStr<Err = UnknownLabel>>(
    raw: &str,
    field: &str,
    line: usize,
) -> Result<T, Rejection> {
    raw.parse().map_err(|e: UnknownLabel| Rejection {
        position: line,
        field: field.to_string(),
        value: raw.to_string(),
        reason: e.to_string(),
    })
}

#[derive(Serialize)]
struct LineOut<'a> {
    persona: &'a str,
    site: &'a str,
    advertiser: &'a str,
    cpm: f64,
    regime: &'a str,
    mechanism: &'a str,
    consent: &'a str,
    iteration: u8,
    ts: i64,
}

/// Serialize records in the normalized bid-log layout (header line, then one
/// object per line with fields in canonical order).
pub fn write_bid_log(records: &[BidRecord]) -> String {
    let mut out = String::with_capacity(64 + records.len() * 160);
    out.push_str(LOG_HEADER);
    out.push('\n');
    for r in records {
        let line = LineOut {
            persona: r.persona.as_str(),
            site: &r.site,
            advertiser: &r.advertiser,
            cpm: r.cpm,
            regime: r.regime.as_str(),
            mechanism: r.mechanism.as_str(),
            consent: r.consent.as_str(),
            iteration: r.iteration.get(),
            ts: r.timestamp,
        };
        out.push_str(&serde_json::to_string(&line).expect("bid line serializes"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(persona: &str, cpm: &str, regime: &str) -> String {
        format!(
            r#"{{"persona":"{persona}","site":"news.example.com","advertiser":"appnexus.com","cpm":{cpm},"regime":"{regime}","mechanism":"OneTrust","consent":"OptOut","iteration":1,"ts":1616000000000}}"#
        )
    }

    #[test]
    fn parses_representative_record() {
        let input = format!("{LOG_HEADER}\n{}\n", line("Adult", "0.25", "GDPR"));
        let log = parse_bid_log(&input).unwrap();
        assert_eq!(log.records.len(), 1);
        let r = &log.records[0];
        assert_eq!(r.persona, Persona::Adult);
        assert_eq!(r.cpm, 0.25);
        assert_eq!(r.regime, Regime::Gdpr);
        assert_eq!(r.mechanism, Mechanism::OneTrust);
        assert_eq!(r.consent, Consent::OptOut);
        assert!(log.report.is_clean());
    }

    #[test]
    fn empty_stream_is_empty() {
        assert!(parse_bid_log("").unwrap().records.is_empty());
        assert!(parse_bid_log("\n  \n").unwrap().records.is_empty());
        assert!(parse_bid_log(LOG_HEADER).unwrap().records.is_empty());
    }

    #[test]
    fn negative_cpm_names_the_field() {
        let input = format!("{LOG_HEADER}\n{}\n", line("Adult", "-1", "GDPR"));
        match parse_bid_log(&input) {
            Err(IngestError::Malformed { line, field, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(field, "cpm");
            }
            other => panic!("expected malformed cpm, got {other:?}"),
        }
    }

    #[test]
    fn unknown_labels_reject_only_their_line() {
        let input = format!(
            "{LOG_HEADER}\n{}\n{}\n{}\n",
            line("Adult", "0.1", "GDPR"),
            line("Gardening", "0.1", "GDPR"),
            line("Adult", "0.1", "LGPD"),
        );
        let log = parse_bid_log(&input).unwrap();
        assert_eq!(log.records.len(), 1);
        assert_eq!(log.report.rejected.len(), 2);
        assert_eq!(log.report.rejected[0].field, "persona");
        assert_eq!(log.report.rejected[0].position, 3);
        assert_eq!(log.report.rejected[1].field, "regime");
    }

    #[test]
    fn missing_header_and_extra_fields_are_errors() {
        assert!(matches!(
            parse_bid_log(&line("Adult", "0.1", "GDPR")),
            Err(IngestError::Header { .. })
        ));
        let extra = line("Adult", "0.1", "GDPR").replace("}", r#","slot":"a"}"#);
        match parse_bid_log(&format!("{LOG_HEADER}\n{extra}")) {
            Err(IngestError::Malformed { field, .. }) => assert_eq!(field, "slot"),
            other => panic!("{other:?}"),
        }
        let bad_iter = line("Adult", "0.1", "GDPR").replace("\"iteration\":1", "\"iteration\":4");
        match parse_bid_log(&format!("{LOG_HEADER}\n{bad_iter}")) {
            Err(IngestError::Malformed { field, .. }) => assert_eq!(field, "iteration"),
            other => panic!("{other:?}"),
        }
    }

    fn arb_record() -> impl Strategy<Value = BidRecord> {
        (
            0..Persona::ALL.len(),
            "[a-z]{1,8}\\.(com|co\\.uk|de)",
            "[a-z]{2,10}",
            0.0f64..50.0,
            0..2usize,
            0..3usize,
            0..2usize,
            1u8..=3,
            0i64..2_000_000_000_000,
        )
            .prop_map(|(p, site, adv, cpm, r, m, c, it, ts)| BidRecord {
                persona: Persona::ALL[p],
                site,
                advertiser: adv,
                cpm,
                regime: Regime::ALL[r],
                mechanism: Mechanism::ALL[m],
                consent: Consent::ALL[c],
                iteration: Iteration::new(it).unwrap(),
                timestamp: ts,
            })
    }

    proptest! {
        #[test]
        fn serialize_parse_round_trip(records in proptest::collection::vec(arb_record(), 0..20)) {
            let text = write_bid_log(&records);
            let parsed = parse_bid_log(&text).unwrap();
            prop_assert_eq!(&parsed.records, &records);
            prop_assert_eq!(write_bid_log(&parsed.records), text);
        }
    }

    #[test]
    fn parse_normalizes_label_case() {
        let raw = line("adult", "0.5", "gdpr");
        let log = parse_bid_log(&format!("{LOG_HEADER}\n{raw}\n")).unwrap();
        let normalized = write_bid_log(&log.records);
        assert!(normalized.contains("\"persona\":\"Adult\""));
        assert!(normalized.contains("\"regime\":\"GDPR\""));
        assert_eq!(
            write_bid_log(&parse_bid_log(&normalized).unwrap().records),
            normalized
        );
    }
}
