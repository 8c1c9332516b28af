//! Atomic file output, CSV rows and JSON documents.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

/// Writes `bytes` to `dir/name` via a temporary file and a rename.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", target.display()));
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(bytes).map_err(io)?;
    f.sync_all().map_err(io)?;
    fs::rename(&tmp, &target).map_err(io)?;
    Ok(target)
}

/// `{:.16e}`: 17 significant digits, enough for a lossless round trip.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Self { text }
    }

    pub fn row(&mut self, fields: &[String]) {
        let _ = writeln!(self.text, "{}", fields.join(","));
    }

    pub fn write(&self, dir: &Path, name: &str) -> Result<PathBuf, CliError> {
        write_atomic(dir, name, self.text.as_bytes())
    }
}

/// Pretty JSON with sorted keys and a top-level `schema` field.
pub fn write_json<T: Serialize>(dir: &Path, name: &str, schema: &str, doc: &T) -> Result<PathBuf, CliError> {
    let mut v = serde_json::to_value(doc).map_err(|e| CliError::Io(e.to_string()))?;
    match v.as_object_mut() {
        Some(m) => {
            m.insert("schema".into(), schema.into());
        }
        None => v = serde_json::json!({ "schema": schema, "data": v }),
    }
    let mut text = serde_json::to_string_pretty(&v).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    write_atomic(dir, name, text.as_bytes())
}
