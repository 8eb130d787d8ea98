//! CSV tables and the append-only run registry.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One CSV cell. Numbers are written with 17 significant digits.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Num(v) => format!("{v:.16e}"),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Num)
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: Vec<&'static str>) -> Self {
        Self { header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.iter().map(Cell::render).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }
}

/// Registry line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub digest: String,
    pub timestamp: String,
    pub version: String,
    pub task: String,
    pub seed: u64,
    pub csv: Vec<PathBuf>,
    pub summary: PathBuf,
    pub passed: bool,
}

pub const REGISTRY_FILE: &str = "registry.jsonl";

pub fn append_record(dir: &Path, record: &RunRecord) -> Result<()> {
    let mut file = std::fs::OpenOptions::new().create(true).append(true).open(dir.join(REGISTRY_FILE))?;
    writeln!(file, "{}", serde_json::to_string(record)?)?;
    Ok(())
}

pub const REPORT_HEADER: &str = "digest,timestamp,version,task,seed,passed,csv";

/// Registry summary as CSV plus the line numbers that failed to parse.
pub fn summarize_registry(text: &str) -> (String, Vec<usize>, usize) {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    let mut corrupt = Vec::new();
    let mut total = 0;
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        total += 1;
        match serde_json::from_str::<RunRecord>(line) {
            Ok(r) => {
                let csv = r.csv.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(";");
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    r.digest, r.timestamp, r.version, r.task, r.seed, r.passed, csv
                ));
            }
            Err(_) => corrupt.push(k + 1),
        }
    }
    (out, corrupt, total)
}
