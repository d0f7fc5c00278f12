//! Report tables and atomic file output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::{Map, Value};

/// Version of the CSV layouts and of the JSON summary.
pub const SCHEMA_VERSION: u32 = 1;

pub const CHECKS_HEADER: [&str; 7] = ["check", "t", "value", "target", "stderr", "z", "pass"];
pub const VALIDATE_HEADER: [&str; 5] = ["check", "value", "target", "tol", "pass"];
pub const RUIN_HEADER: [&str; 7] = ["u", "psi_hat", "stderr", "n", "ruined", "truncated", "oracle"];
pub const PREMIUM_HEADER: [&str; 7] = ["row", "theta1", "theta2", "p_p", "p_q", "p_p_err", "p_q_err"];
pub const PATHS_HEADER: [&str; 7] = ["path", "theta1", "theta2", "claim", "arrival", "amount", "aggregate"];

/// A named table with a fixed header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: &'static str,
    pub header: &'static [&'static str],
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &'static str, header: &'static [&'static str]) -> Table {
        Table { name, header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        Ok(w.into_inner().context("flushing CSV buffer")?)
    }

    /// Rows as JSON objects keyed by the header.
    pub fn to_json(&self) -> Value {
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let obj: Map<String, Value> =
                    self.header.iter().zip(r).map(|(h, v)| (h.to_string(), Value::String(v.clone()))).collect();
                Value::Object(obj)
            })
            .collect();
        Value::Array(rows)
    }
}

/// Shortest round-trip decimal; empty for missing values.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x}")
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Write through a temporary file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("temp file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub fn write_table(dir: &Path, table: &Table) -> Result<PathBuf> {
    let path = dir.join(format!("{}.csv", table.name));
    write_atomic(&path, &table.to_csv()?)?;
    Ok(path)
}
