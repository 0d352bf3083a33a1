//! CSV in and out. Comma separated, header row required.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone)]
pub struct Table {
    pub header: Vec<String>,
    /// One row per record.
    pub values: DMatrix<f64>,
}

pub fn read_table(path: &Path) -> CliResult<Table> {
    let file = std::fs::File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    parse_table(file, &path.display().to_string())
}

pub fn parse_table<R: std::io::Read>(input: R, name: &str) -> CliResult<Table> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(input);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Data(format!("{name}: {e}")))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header.iter().all(String::is_empty) {
        return Err(CliError::Data(format!("{name}: missing header row")));
    }
    if header.iter().any(|h| h.parse::<f64>().is_ok()) {
        return Err(CliError::Data(format!("{name}: line 1 looks like data; a header row is required")));
    }
    let width = header.len();
    let mut flat = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { pos, expected_len, len } => CliError::Data(format!(
                "{name}: line {}: expected {expected_len} fields, found {len}",
                pos.as_ref().map_or(0, |p| p.line())
            )),
            _ => CliError::Data(format!("{name}: {e}")),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| CliError::Data(format!("{name}: line {line}, column {}: cannot parse {field:?}", header[col])))?;
            if !v.is_finite() {
                return Err(CliError::Data(format!("{name}: line {line}, column {}: non-finite value", header[col])));
            }
            flat.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(CliError::Data(format!("{name}: no data rows")));
    }
    Ok(Table {
        header,
        values: DMatrix::from_row_slice(rows, width, &flat),
    })
}

/// Writes a header and rows, floats in shortest round-trip form.
pub fn write_table(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<f64>>) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let wrap = |e: csv::Error| CliError::Data(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(wrap)?;
    for r in rows {
        w.write_record(r.iter().map(|v| v.to_string())).map_err(wrap)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_serialized<T: serde::Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("report types serialize");
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}
