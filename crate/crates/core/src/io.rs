//! CSV ingestion and export of sample matrices.
//!
//! Files are comma separated with a mandatory header row. Lines starting with
//! `#` are metadata and skipped on read; [`save_csv`] writes one such line with
//! a provenance record.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::SampleMatrix;
use crate::error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoadOptions {
    /// Apply the natural log to every entry; all entries must be positive.
    pub log_transform: bool,
}

/// Software version plus the plan or command that produced a file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub software: String,
    pub plan: serde_json::Value,
}

impl Provenance {
    pub fn new(plan: impl Serialize) -> Result<Self> {
        Ok(Self { software: format!("otcd {VERSION}"), plan: serde_json::to_value(plan)? })
    }

    /// One `#`-prefixed line, without the trailing newline.
    pub fn header_line(&self) -> String {
        format!("# {}", serde_json::to_string(self).expect("provenance serializes"))
    }

    /// Read back the first metadata line of a file written by [`save_csv`].
    pub fn from_header_line(line: &str) -> Option<Self> {
        serde_json::from_str(line.strip_prefix('#')?.trim()).ok()
    }
}

fn cell_error(row: usize, col: usize, name: &str, msg: String) -> Error {
    Error::Parse { location: format!("row {row}, column {} ({name})", col + 1), message: msg }
}

/// Parse CSV text; `row` in error locations counts data rows from 1.
pub fn read_csv<R: Read>(reader: R, opts: &LoadOptions) -> Result<SampleMatrix<f64>> {
    let mut rdr =
        csv::ReaderBuilder::new().has_headers(true).comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader);
    let names: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if names.is_empty() || names.iter().all(String::is_empty) {
        return Err(Error::Parse { location: "header".into(), message: "missing header row".into() });
    }
    let d = names.len();
    let mut data = Vec::new();
    let mut n = 0;
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Parse { location: format!("row {row}"), message: e.to_string() })?;
        if rec.len() != d {
            return Err(Error::Parse {
                location: format!("row {row}"),
                message: format!("expected {d} fields, found {}", rec.len()),
            });
        }
        for (j, field) in rec.iter().enumerate() {
            let v: f64 =
                field.parse().map_err(|_| cell_error(row, j, &names[j], format!("{field:?} is not a number")))?;
            if !v.is_finite() {
                return Err(cell_error(row, j, &names[j], format!("non-finite value {field}")));
            }
            let v = if opts.log_transform {
                if v <= 0.0 {
                    return Err(cell_error(
                        row,
                        j,
                        &names[j],
                        format!("log transform needs a positive value, got {v}"),
                    ));
                }
                v.ln()
            } else {
                v
            };
            data.push(v);
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Data("CSV has a header but no data rows".into()));
    }
    SampleMatrix::new(n, d, data)?.with_names(names)
}

pub fn load_csv(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<SampleMatrix<f64>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    read_csv(BufReader::new(file), opts)
}

/// Write `samples` with a header row; values use the shortest representation
/// that parses back to the same `f64`.
pub fn write_csv<W: Write>(samples: &SampleMatrix<f64>, provenance: Option<&Provenance>, mut out: W) -> Result<()> {
    if let Some(p) = provenance {
        writeln!(out, "{}", p.header_line())?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(samples.names())?;
    for row in samples.rows() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(path: impl AsRef<Path>, samples: &SampleMatrix<f64>, provenance: Option<&Provenance>) -> Result<()> {
    let file = File::create(path.as_ref())?;
    write_csv(samples, provenance, BufWriter::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load_str(s: &str, log: bool) -> Result<SampleMatrix<f64>> {
        read_csv(s.as_bytes(), &LoadOptions { log_transform: log })
    }

    #[test]
    fn parses_header_and_body() {
        let m = load_str("a,b\n1,2\n3.5,-4e-3\n", false).unwrap();
        assert_eq!((m.n(), m.d()), (2, 2));
        assert_eq!(m.names(), &["a".to_string(), "b".to_string()]);
        assert_eq!(m.get(1, 1), -4e-3);
    }

    #[test]
    fn errors_locate_the_cell() {
        let e = load_str("a,b\n1,2\n3,x\n", false).unwrap_err().to_string();
        assert!(e.contains("row 2") && e.contains("column 2") && e.contains("(b)"), "{e}");
        let e = load_str("a,b\n1,2\n3\n", false).unwrap_err().to_string();
        assert!(e.contains("row 2"), "{e}");
        let e = load_str("p,q\n1,2\n0,3\n", true).unwrap_err().to_string();
        assert!(e.contains("row 2, column 1 (p)") && e.contains("positive"), "{e}");
        assert!(load_str("a,b\n", false).is_err());
    }

    #[test]
    fn log_transform_applies_ln() {
        let m = load_str("a\n1\n2.718281828459045\n", true).unwrap();
        assert_eq!(m.get(0, 0), 0.0);
        assert!((m.get(1, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn provenance_line_is_skipped_and_recoverable() {
        let m = SampleMatrix::new(2, 1, vec![0.1, 1.0 / 3.0]).unwrap();
        let p = Provenance::new(serde_json::json!({"preset": "pcot6", "n": 2})).unwrap();
        let mut buf = Vec::new();
        write_csv(&m, Some(&p), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let first = text.lines().next().unwrap();
        assert_eq!(Provenance::from_header_line(first).unwrap(), p);
        assert_eq!(read_csv(text.as_bytes(), &LoadOptions::default()).unwrap(), m);
    }
}
