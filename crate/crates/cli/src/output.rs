//! Atomic file emission: everything is written to a temporary file in the
//! target directory and renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::Io(e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.into()))?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

/// Fixed-precision formatting so reruns are byte-identical.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.12e}")
    }
}

/// CSV with a `# config-hash` comment line followed by a header row.
pub struct CsvTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        CsvTable { header: header.iter().map(|s| s.as_ref().to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_bytes(&self, config_hash: &str) -> Result<Vec<u8>, CliError> {
        let mut out = format!("# config-hash: {config_hash}\n").into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(&self.header).map_err(csv_err)?;
            for r in &self.rows {
                w.write_record(r).map_err(csv_err)?;
            }
            w.flush()?;
        }
        Ok(out)
    }

    pub fn write(&self, path: &Path, config_hash: &str) -> Result<(), CliError> {
        write_atomic(path, &self.to_bytes(config_hash)?)
    }
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(std::io::Error::other(e))
}

pub fn out_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
