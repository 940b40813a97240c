//! Report envelopes and tables.
//!
//! Every JSON report is `{format, version, command, content_hash, timestamp,
//! timing?, body}`. The body holds everything that is a function of the inputs;
//! `content_hash` is the SHA-256 of its compact serialization. Wall-clock
//! values (the timestamp and timings) live outside the body, so two runs with
//! the same inputs produce byte-identical bodies.

use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use coflow::motion::TransitionEstimate;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const FORMAT: &str = "coflow-report";
pub const VERSION: u32 = 1;

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Git-style content hash: the digest of `"blob <len>\0"` followed by the
/// content.
pub fn blob_hash(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    hex(&h.finalize())
}

/// The canonical byte form of a body.
pub fn body_bytes<T: Serialize>(body: &T) -> Result<Vec<u8>> {
    serde_json::to_vec(body).map_err(|source| CliError::Json { context: "serializing report body".into(), source })
}

#[derive(Debug, Clone, Serialize)]
pub struct Envelope {
    pub format: &'static str,
    pub version: u32,
    pub command: String,
    pub content_hash: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing: Option<Value>,
    pub body: Value,
}

impl Envelope {
    pub fn new<T: Serialize>(command: &str, body: &T) -> Result<Self> {
        let bytes = body_bytes(body)?;
        let body: Value = serde_json::from_slice(&bytes)
            .map_err(|source| CliError::Json { context: "re-reading report body".into(), source })?;
        Ok(Self {
            format: FORMAT,
            version: VERSION,
            command: command.to_string(),
            content_hash: sha256_hex(&bytes),
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            timing: None,
            body,
        })
    }

    pub fn with_timing(mut self, timing: Value) -> Self {
        self.timing = Some(timing);
        self
    }

    pub fn to_pretty(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|source| CliError::Json { context: "serializing report".into(), source })
    }
}

/// Writes `text` to `path`, or to stdout when `path` is `None`.
pub fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
            }
            std::fs::write(p, text).map_err(|e| CliError::io(format!("writing {}", p.display()), e))
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| if text.ends_with('\n') { Ok(()) } else { out.write_all(b"\n") })
                .map_err(|e| CliError::io("writing stdout", e))
        }
    }
}

/// One row of an estimate table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateRow {
    pub event: String,
    pub p_hat: f64,
    /// Empty when the row is not a binomial proportion.
    pub se: Option<f64>,
    #[serde(rename = "N")]
    pub n: u64,
    pub seed: u64,
}

impl From<&TransitionEstimate> for EstimateRow {
    fn from(e: &TransitionEstimate) -> Self {
        Self { event: e.event.clone(), p_hat: e.p_hat, se: Some(e.se), n: e.n, seed: e.seed }
    }
}

pub fn estimate_csv(rows: &[EstimateRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(["event", "p_hat", "se", "N", "seed"])?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::io("flushing CSV", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}

/// Twelve significant digits.
pub fn sig12(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.11e}")
    } else {
        v.to_string()
    }
}

/// A CSV table whose numeric cells are printed with twelve significant digits.
pub struct NumericTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl NumericTable {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, cells: Vec<Cell>) {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells.into_iter().map(Cell::render).collect());
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::io("flushing CSV", e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
    }
}

pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Empty,
}

impl Cell {
    fn render(self) -> String {
        match self {
            Cell::Num(v) => sig12(v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s,
            Cell::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Num)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::Int(v as i64)
    }
}
