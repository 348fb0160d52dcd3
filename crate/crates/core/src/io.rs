//! CSV and JSON plumbing.
//!
//! Datasets are comma-separated with a header row `y,x1,…,xp`, one
//! observation per row. Simulation reports are written one row per
//! replication and estimator with the columns of [`REPORT_COLUMNS`].

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimators::Dataset;
use crate::montecarlo::{McReport, Summary};

pub const REPORT_COLUMNS: [&str; 8] = [
    "estimator",
    "n",
    "alpha",
    "rep",
    "sq_err",
    "norm_sq_err",
    "detect",
    "include",
];

/// Reads a dataset. Line numbers in errors are 1-based and count the header.
pub fn read_dataset<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| parse_err(1, e))?.clone();
    if header.len() < 2 {
        return Err(Error::Parse {
            line: 1,
            message: "header needs a response column and at least one predictor".into(),
        });
    }
    if &header[0] != "y" {
        return Err(Error::Parse {
            line: 1,
            message: format!("first column must be `y`, found `{}`", &header[0]),
        });
    }
    let p = header.len() - 1;
    let mut ys = Vec::new();
    let mut xs = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |pos| pos.line() as usize);
            parse_err(line, e)
        })?;
        let line = rec.position().map_or(0, |pos| pos.line() as usize);
        for (k, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                message: format!("column `{}`: `{field}` is not a number", &header[k]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("column `{}`: non-finite value", &header[k]),
                });
            }
            if k == 0 {
                ys.push(v);
            } else {
                xs.push(v);
            }
        }
    }
    let n = ys.len();
    if n == 0 {
        return Err(Error::Parse {
            line: 2,
            message: "no observations".into(),
        });
    }
    Dataset::new(DMatrix::from_row_slice(n, p, &xs), DVector::from_vec(ys))
}

pub fn read_dataset_file(path: &Path) -> Result<Dataset> {
    read_dataset(std::fs::File::open(path)?)
}

fn parse_err(line: usize, e: csv::Error) -> Error {
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

pub fn write_dataset<W: Write>(d: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    let mut header = vec!["y".to_string()];
    header.extend((1..=d.p()).map(|j| format!("x{j}")));
    w.write_record(&header)?;
    for i in 0..d.n() {
        let mut row = vec![d.y()[i].to_string()];
        row.extend(d.x().row(i).iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the per-replication rows of a report in record order.
pub fn write_report_csv<W: Write>(report: &McReport, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    w.write_record(REPORT_COLUMNS)?;
    for r in &report.records {
        w.write_record([
            r.estimator.label().to_string(),
            r.n.to_string(),
            r.alpha.map(|a| a.to_string()).unwrap_or_default(),
            r.rep.to_string(),
            r.sq_err.to_string(),
            r.norm_sq_err.to_string(),
            u8::from(r.detect).to_string(),
            u8::from(r.include).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize, W: Write>(value: &T, mut writer: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, value)?;
    writer.write_all(b"\n")?;
    Ok(())
}

pub fn write_summary_json<W: Write>(summary: &Summary, writer: W) -> Result<()> {
    write_json(summary, writer)
}

/// SHA-256 (hex) of the compact JSON encoding of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

/// Strict JSON load; unknown keys are rejected by the target type.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}
