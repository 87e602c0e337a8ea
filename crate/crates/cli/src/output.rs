//! CSV artifacts with a provenance header.

use crate::config::Settings;
use anyhow::Result;
use std::io::Write;
use std::path::Path;

pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Table {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

/// Full-precision float formatting (shortest round-trip form).
pub fn num(v: f64) -> String {
    format!("{v}")
}

/// Header comment lines: tool version, config hash, seed, settings.
pub fn header(kind: &str, settings: &Settings) -> String {
    let mut out = format!(
        "# spinclust {} {kind}\n# config_hash={}\n# seed={}\n",
        env!("CARGO_PKG_VERSION"),
        settings.hash(),
        settings.get::<String>("seed").ok().flatten().unwrap_or_else(|| "none".into()),
    );
    for (k, v) in settings.iter() {
        out.push_str(&format!("# {k}={v}\n"));
    }
    out
}

pub fn render(kind: &str, settings: &Settings, table: &Table) -> Result<String> {
    let mut buf = header(kind, settings).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(&table.columns)?;
        for row in &table.rows {
            w.write_record(row)?;
        }
        w.flush()?;
    }
    Ok(String::from_utf8(buf)?)
}

/// Writes to `path`, or stdout when absent.
pub fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}
