//! Trace CSV files.

use std::io::{Read, Write};

use seboost::TraceRecord;
use thiserror::Error;

pub const HEADER: [&str; 9] = [
    "outer_step",
    "baseline_steps",
    "wall_ms",
    "train_loss",
    "test_loss",
    "boost_applied",
    "phi0",
    "phi_star",
    "evals_used",
];

#[derive(Debug, Error)]
pub enum TraceError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("unexpected header {0:?}")]
    Header(Vec<String>),
    #[error("row {row}, column `{column}`: cannot parse {value:?}")]
    Field {
        row: usize,
        column: &'static str,
        value: String,
    },
}

// `{}` on f64 prints the shortest string that parses back to the same value.
fn float(v: f64) -> String {
    format!("{v}")
}

fn optional(v: Option<f64>) -> String {
    v.map(float).unwrap_or_default()
}

pub fn write_trace<W: Write>(out: W, records: &[TraceRecord]) -> Result<(), TraceError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for r in records {
        w.write_record([
            r.outer_step.to_string(),
            r.baseline_steps.to_string(),
            float(r.wall_ms),
            float(r.train_loss),
            float(r.test_loss),
            r.boost_applied.to_string(),
            optional(r.phi0),
            optional(r.phi_star),
            r.evals_used.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_trace<R: Read>(input: R) -> Result<Vec<TraceRecord>, TraceError> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers()?;
    if header.iter().ne(HEADER) {
        return Err(TraceError::Header(header.iter().map(String::from).collect()));
    }
    let mut out = Vec::new();
    for (row, rec) in rd.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or_default();
        fn parse<T: std::str::FromStr>(row: usize, column: &'static str, s: &str) -> Result<T, TraceError> {
            s.parse().map_err(|_| TraceError::Field {
                row,
                column,
                value: s.to_string(),
            })
        }
        let opt = |i: usize| -> Result<Option<f64>, TraceError> {
            match field(i) {
                "" => Ok(None),
                s => parse(row, HEADER[i], s).map(Some),
            }
        };
        out.push(TraceRecord {
            outer_step: parse(row, HEADER[0], field(0))?,
            baseline_steps: parse(row, HEADER[1], field(1))?,
            wall_ms: parse(row, HEADER[2], field(2))?,
            train_loss: parse(row, HEADER[3], field(3))?,
            test_loss: parse(row, HEADER[4], field(4))?,
            boost_applied: parse(row, HEADER[5], field(5))?,
            phi0: opt(6)?,
            phi_star: opt(7)?,
            evals_used: parse(row, HEADER[8], field(8))?,
        });
    }
    Ok(out)
}
