//! Reading inputs and writing JSON or CSV outputs.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::{CliError, Format};

/// A table for `--format csv`.
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Table { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn row(&mut self, cells: impl IntoIterator<Item = String>) {
        self.rows.push(cells.into_iter().collect());
    }

    fn render(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).map_err(CliError::invariant)?;
        for r in &self.rows {
            w.write_record(r).map_err(CliError::invariant)?;
        }
        w.into_inner().map_err(|e| CliError::invariant(e.to_string()))
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::schema(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::schema(format!("{}: {e}", path.display())))
}

pub fn read_value(path: &Path) -> Result<serde_json::Value, CliError> {
    read_json(path)
}

/// Writes `doc` as pretty JSON, or `table` as CSV, to `path` or stdout.
pub fn emit<T: Serialize>(path: Option<&Path>, format: Format, doc: &T, table: impl FnOnce() -> Table) -> Result<(), CliError> {
    let bytes = match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(doc).map_err(CliError::invariant)?;
            s.push('\n');
            s.into_bytes()
        }
        Format::Csv => table().render()?,
    };
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| CliError::schema(format!("{}: {e}", p.display()))),
        None => std::io::stdout().write_all(&bytes).map_err(CliError::invariant),
    }
}

/// `<dir>/<stem>.<suffix>.<ext>` next to `path`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.{suffix}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{suffix}"),
    };
    path.with_file_name(name)
}

pub fn fmt(x: f64) -> String {
    format!("{x}")
}
