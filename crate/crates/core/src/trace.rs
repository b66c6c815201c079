//! Trace CSV format.
//!
//! ```text
//! t_ms,ax_g,ay_g,az_g,hr_bpm,skin_rh,action
//! 1000,0,0,1,72,40,
//! 2000,0,0,1,,,ACK
//! ```
//!
//! UTF-8, LF line endings, `.` as decimal separator. An empty field means
//! the reading is absent. `t_ms` is strictly increasing across the file.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::sample::SensorSample;

pub const HEADER: &str = "t_ms,ax_g,ay_g,az_g,hr_bpm,skin_rh,action";
const COLUMNS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    #[serde(rename = "ACK")]
    Ack,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t_ms: u64,
    pub ax_g: f64,
    pub ay_g: f64,
    pub az_g: f64,
    #[serde(default)]
    pub hr_bpm: Option<f64>,
    #[serde(default)]
    pub skin_rh: Option<f64>,
    #[serde(default)]
    pub action: Option<Action>,
}

impl TraceRecord {
    pub fn still(t_ms: u64, hr_bpm: Option<f64>, skin_rh: Option<f64>) -> Self {
        Self {
            t_ms,
            ax_g: 0.0,
            ay_g: 0.0,
            az_g: 1.0,
            hr_bpm,
            skin_rh,
            action: None,
        }
    }

    pub fn sample(&self) -> SensorSample {
        SensorSample::new(
            self.t_ms,
            [self.ax_g, self.ay_g, self.az_g],
            self.hr_bpm,
            self.skin_rh,
        )
    }

    pub fn is_ack(&self) -> bool {
        self.action == Some(Action::Ack)
    }

    /// Checks the value invariants of a single record.
    pub fn validate(&self) -> Result<(), String> {
        self.sample().validate().map_err(|f| f.to_string())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("line {line}: {reason}")]
    Parse { line: u64, reason: String },
    #[error("line {line}: timestamp does not increase")]
    NonMonotonicTimestamps { line: u64 },
    #[error("record {index}: {reason}")]
    InvalidRecord { index: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl TraceError {
    /// 1-based file line of a parse failure, when there is one.
    pub fn line(&self) -> Option<u64> {
        match self {
            TraceError::Parse { line, .. } | TraceError::NonMonotonicTimestamps { line } => {
                Some(*line)
            }
            _ => None,
        }
    }
}

fn parse_opt(field: &str, name: &str) -> Result<Option<f64>, String> {
    if field.is_empty() {
        return Ok(None);
    }
    let v: f64 = field
        .parse()
        .map_err(|_| format!("{name}: `{field}` is not a number"))?;
    if !v.is_finite() {
        return Err(format!("{name}: `{field}` is not finite"));
    }
    Ok(Some(v))
}

fn parse_req(field: &str, name: &str) -> Result<f64, String> {
    parse_opt(field, name)?.ok_or_else(|| format!("{name}: missing value"))
}

fn parse_row(row: &csv::StringRecord) -> Result<TraceRecord, String> {
    if row.len() != COLUMNS {
        return Err(format!("expected {COLUMNS} fields, found {}", row.len()));
    }
    let t_ms = row[0]
        .parse::<u64>()
        .map_err(|_| format!("t_ms: `{}` is not a non-negative integer", &row[0]))?;
    let action = match &row[6] {
        "" => None,
        "ACK" => Some(Action::Ack),
        other => return Err(format!("action: unknown `{other}`")),
    };
    let record = TraceRecord {
        t_ms,
        ax_g: parse_req(&row[1], "ax_g")?,
        ay_g: parse_req(&row[2], "ay_g")?,
        az_g: parse_req(&row[3], "az_g")?,
        hr_bpm: parse_opt(&row[4], "hr_bpm")?,
        skin_rh: parse_opt(&row[5], "skin_rh")?,
        action,
    };
    record.validate()?;
    Ok(record)
}

/// Parses a trace file. The header must match [`HEADER`] exactly; an empty
/// input is an empty trace.
pub fn parse_trace(input: impl Read) -> Result<Vec<TraceRecord>, TraceError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::None)
        .from_reader(input);
    let mut rows = reader.records();
    let mut out: Vec<TraceRecord> = Vec::new();

    match rows.next() {
        None => return Ok(out),
        Some(Err(e)) => return Err(csv_error(e)),
        Some(Ok(header)) => {
            let got = header.iter().collect::<Vec<_>>().join(",");
            if got != HEADER {
                return Err(TraceError::Parse {
                    line: 1,
                    reason: format!("expected header `{HEADER}`"),
                });
            }
        }
    }

    for row in rows {
        let row = row.map_err(csv_error)?;
        let line = row.position().map_or(0, |p| p.line());
        let record = parse_row(&row).map_err(|reason| TraceError::Parse { line, reason })?;
        if out.last().is_some_and(|prev| record.t_ms <= prev.t_ms) {
            return Err(TraceError::NonMonotonicTimestamps { line });
        }
        out.push(record);
    }
    Ok(out)
}

fn csv_error(e: csv::Error) -> TraceError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => TraceError::Io(io),
        kind => TraceError::Parse {
            line,
            reason: format!("{kind:?}"),
        },
    }
}

fn push_opt(out: &mut String, v: Option<f64>) {
    if let Some(v) = v {
        out.push_str(&v.to_string());
    }
}

/// Serializes records in the canonical trace layout.
pub fn write_trace(records: &[TraceRecord]) -> Result<String, TraceError> {
    let mut out = String::with_capacity(HEADER.len() + 1 + records.len() * 32);
    out.push_str(HEADER);
    out.push('\n');
    for (index, r) in records.iter().enumerate() {
        r.validate()
            .map_err(|reason| TraceError::InvalidRecord { index, reason })?;
        if index > 0 && r.t_ms <= records[index - 1].t_ms {
            return Err(TraceError::InvalidRecord {
                index,
                reason: "t_ms does not increase".into(),
            });
        }
        out.push_str(&format!("{},{},{},{},", r.t_ms, r.ax_g, r.ay_g, r.az_g));
        push_opt(&mut out, r.hr_bpm);
        out.push(',');
        push_opt(&mut out, r.skin_rh);
        out.push(',');
        if r.is_ack() {
            out.push_str("ACK");
        }
        out.push('\n');
    }
    Ok(out)
}
