//! Serialization helpers shared by the modules.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Formats a float with 17 significant digits, enough to round-trip.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        // Keep the sign of negative zero out of the tables.
        return "0.0000000000000000e0".to_string();
    }
    format!("{x:.16e}")
}

/// Writes a CSV table; floats go through [`fmt_f64`].
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<CsvCell>]) -> Result<()> {
    let mut wr = csv::Writer::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
    wr.write_record(header)
        .map_err(|e| Error::Format(e.to_string()))?;
    for row in rows {
        let rec: Vec<String> = row.iter().map(CsvCell::render).collect();
        wr.write_record(&rec)
            .map_err(|e| Error::Format(e.to_string()))?;
    }
    wr.flush().map_err(|e| Error::io(path, e))
}

/// One CSV cell.
#[derive(Clone, Debug)]
pub enum CsvCell {
    F(f64),
    I(i64),
    U(u64),
    S(String),
}

impl CsvCell {
    fn render(&self) -> String {
        match self {
            CsvCell::F(x) => fmt_f64(*x),
            CsvCell::I(x) => x.to_string(),
            CsvCell::U(x) => x.to_string(),
            CsvCell::S(s) => s.clone(),
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
