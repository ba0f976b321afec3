//! File formats.
//!
//! * Snapshots: one JSON header line, then the row-major matrix as
//!   little-endian `f64`. With `text`, a `# ` prefixed header line and CSV.
//! * Time series: a `# ` prefixed JSON header line, a CSV header row, then
//!   rows with `.` decimals and `\n` terminators.
//! * Summaries: pretty JSON.
//!
//! Every header embeds [`FORMAT_VERSION`] and the resolved configuration.
//! Floats are printed in shortest round-trip form, so equal inputs give
//! byte-identical files.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// Header object shared by every output file.
pub fn header(kind: &str, config: &RunConfig, extra: Value) -> Result<Value> {
    let mut h = json!({
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "config": serde_json::to_value(config)?,
    });
    if let (Value::Object(map), Value::Object(more)) = (&mut h, extra) {
        map.extend(more);
    }
    Ok(h)
}

pub fn write_snapshot(path: &Path, header: &Value, cols: usize, data: &[f64], text: bool) -> Result<()> {
    if cols == 0 || !data.len().is_multiple_of(cols) {
        return Err(Error::LengthMismatch {
            expected: cols,
            got: data.len(),
        });
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    if text {
        writeln!(w, "# {}", serde_json::to_string(header)?)?;
        for row in data.chunks(cols) {
            write_row(&mut w, row)?;
        }
    } else {
        writeln!(w, "{}", serde_json::to_string(header)?)?;
        for v in data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a binary snapshot back as `(header, data)`.
pub fn read_snapshot(path: &Path) -> Result<(Value, Vec<f64>)> {
    let bytes = fs::read(path)?;
    let nl = bytes
        .iter()
        .position(|b| *b == b'\n')
        .ok_or_else(|| Error::Config("snapshot has no header line".into()))?;
    let header: Value = serde_json::from_slice(&bytes[..nl])?;
    let body = &bytes[nl + 1..];
    if body.len() % 8 != 0 {
        return Err(Error::Config("snapshot body is not a whole number of f64".into()));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((header, data))
}

fn write_row(w: &mut impl Write, row: &[f64]) -> Result<()> {
    let mut first = true;
    for v in row {
        if !first {
            w.write_all(b",")?;
        }
        first = false;
        write!(w, "{v:?}")?;
    }
    w.write_all(b"\n")?;
    Ok(())
}

pub fn write_csv(path: &Path, header: &Value, columns: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "# {}", serde_json::to_string(header)?)?;
    writeln!(w, "{}", columns.join(","))?;
    for row in rows {
        if row.len() != columns.len() {
            return Err(Error::LengthMismatch {
                expected: columns.len(),
                got: row.len(),
            });
        }
        write_row(&mut w, row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json(path: &Path, header: &Value, body: &impl Serialize) -> Result<()> {
    let mut doc = header.clone();
    if let Value::Object(map) = &mut doc {
        map.insert("result".into(), serde_json::to_value(body)?);
    }
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;

    #[test]
    fn binary_snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::minimal(1.0, 4.0).unwrap();
        let h = header("test", &cfg, json!({"rows": 2, "cols": 3})).unwrap();
        let data = [1.0, -2.5, 3.0e-300, 0.1, f64::MIN_POSITIVE, 7.0];
        let p = dir.path().join("s.bin");
        write_snapshot(&p, &h, 3, &data, false).unwrap();
        let (h2, d2) = read_snapshot(&p).unwrap();
        assert_eq!(h, h2);
        assert_eq!(d2, data);
        assert_eq!(h2["format_version"], 1);
        assert!(write_snapshot(&p, &h, 4, &data, false).is_err());
    }

    #[test]
    fn csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::minimal(1.0, 4.0).unwrap();
        let h = header("ts", &cfg, json!({})).unwrap();
        let p = dir.path().join("ts.csv");
        write_csv(&p, &h, &["t", "x"], &[vec![0.0, 0.1], vec![0.5, 1e-20]]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# {"));
        assert_eq!(&lines[1..], &["t,x", "0.0,0.1", "0.5,1e-20"]);
    }
}
