//! Deterministic CSV/JSON serialization shared by the simulation and
//! empirical workflows. No timestamps or host details are written, so equal
//! inputs give byte-identical files.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{FrdError, Result};

pub const RESULTS_CSV: &str = "results.csv";
pub const RESULTS_JSON: &str = "results.json";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metadata {
    pub tool: &'static str,
    pub version: &'static str,
    pub format_version: u32,
    pub command: String,
    pub rng: &'static str,
}

impl Metadata {
    pub fn new(command: &str) -> Self {
        Metadata {
            tool: "frdkit",
            version: env!("CARGO_PKG_VERSION"),
            format_version: FORMAT_VERSION,
            command: command.to_string(),
            rng: "chacha8, seeded from the master seed, stream = replication index",
        }
    }
}

pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| FrdError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| FrdError::Io(e.to_string()))
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Write `results.csv` and `results.json`, creating `dir` if needed.
pub fn write_pair(dir: &Path, csv_text: &str, json_text: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| FrdError::Io(format!("{}: {e}", dir.display())))?;
    for (name, text) in [(RESULTS_CSV, csv_text), (RESULTS_JSON, json_text)] {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| FrdError::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}
