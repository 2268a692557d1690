//! Report envelopes and artifact files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use ppoisson::io::{write_binary, write_csv, FieldData};
use serde::Serialize;
use serde_json::Value;

use crate::config::FieldFormat;
use crate::error::CliError;

pub const OUT_DIR_ENV: &str = "PPOISSON_OUT_DIR";
pub const SCHEMA_VERSION: u32 = 1;

/// Every JSON document the tool emits. Only `timestamp` varies between
/// identical runs.
#[derive(Debug, Serialize)]
pub struct Envelope<T: Serialize> {
    pub schema: String,
    pub tool_version: &'static str,
    pub timestamp: u64,
    pub inputs: Value,
    pub result: T,
}

impl<T: Serialize> Envelope<T> {
    pub fn new(command: &str, inputs: Value, result: T) -> Self {
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Envelope {
            schema: format!("ppoisson/{command}/v{SCHEMA_VERSION}"),
            tool_version: env!("CARGO_PKG_VERSION"),
            timestamp,
            inputs,
            result,
        }
    }
}

/// Where artifacts go, if anywhere.
#[derive(Debug, Clone)]
pub struct Sink {
    pub dir: Option<PathBuf>,
    pub field_format: FieldFormat,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

impl Sink {
    fn create(&self, name: &str) -> Result<Option<(PathBuf, BufWriter<File>)>, CliError> {
        let Some(dir) = &self.dir else { return Ok(None) };
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let path = dir.join(name);
        let file = File::create(&path).map_err(|e| io_err(&path, e))?;
        Ok(Some((path, BufWriter::new(file))))
    }

    pub fn json<T: Serialize>(&self, name: &str, doc: &T) -> Result<(), CliError> {
        if let Some((path, mut w)) = self.create(&format!("{name}.json"))? {
            serde_json::to_writer_pretty(&mut w, doc).map_err(|e| io_err(&path, e))?;
            writeln!(w).and_then(|_| w.flush()).map_err(|e| io_err(&path, e))?;
        }
        Ok(())
    }

    pub fn text(&self, name: &str, body: &str) -> Result<(), CliError> {
        if let Some((path, mut w)) = self.create(name)? {
            w.write_all(body.as_bytes()).and_then(|_| w.flush()).map_err(|e| io_err(&path, e))?;
        }
        Ok(())
    }

    pub fn field(&self, name: &str, values: &[f64]) -> Result<(), CliError> {
        let ext = match self.field_format {
            FieldFormat::Csv => "csv",
            FieldFormat::Bin => "bin",
        };
        if let Some((path, mut w)) = self.create(&format!("{name}.{ext}"))? {
            let data = FieldData::scalar(values.to_vec());
            match self.field_format {
                FieldFormat::Csv => write_csv(&mut w, &data),
                FieldFormat::Bin => write_binary(&mut w, &data),
            }
            .map_err(|e| io_err(&path, e))?;
            w.flush().map_err(|e| io_err(&path, e))?;
        }
        Ok(())
    }
}

/// CSV cell; non-finite values are left empty.
pub fn csv_real(x: f64) -> String {
    if x.is_finite() {
        format!("{x:e}")
    } else {
        String::new()
    }
}
