//! Headered CSV input and fixed-format CSV output.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use mmddro::{Point, SummaryRow, TrialRecord};

use crate::CliError;

/// Numeric table read from a headered CSV file.
#[derive(Debug, Clone)]
pub struct Table {
    pub points: Vec<Point>,
    /// Columns named in `special`, in that order, one vector each.
    pub extra: Vec<Option<Vec<f64>>>,
}

/// Reads every column as a number. Columns named in `special` are split off;
/// everything else becomes a point coordinate.
pub fn read_table(path: &Path, special: &[&str]) -> Result<Table, CliError> {
    let shown = path.display();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Usage(format!("{shown}: {e}")))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Usage(format!("{shown}: {e}")))?
        .clone();
    let mut coords = Vec::new();
    let mut slots = vec![None; special.len()];
    for (col, name) in headers.iter().enumerate() {
        match special.iter().position(|s| *s == name) {
            Some(i) if slots[i].is_some() => {
                return Err(CliError::Usage(format!(
                    "{shown}: duplicate column `{name}`"
                )));
            }
            Some(i) => slots[i] = Some(col),
            None => coords.push(col),
        }
    }
    if coords.is_empty() {
        return Err(CliError::Usage(format!("{shown}: no coordinate columns")));
    }
    let mut points = Vec::new();
    let mut extra: Vec<Option<Vec<f64>>> = slots.iter().map(|s| s.map(|_| Vec::new())).collect();
    for (row, record) in reader.records().enumerate() {
        let line = row + 2;
        let record = record.map_err(|e| CliError::Usage(format!("{shown}: {e}")))?;
        let field = |col: usize| -> Result<f64, CliError> {
            let name = &headers[col];
            let raw = record.get(col).ok_or_else(|| {
                CliError::Usage(format!("{shown}: line {line}: missing field `{name}`"))
            })?;
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    CliError::Usage(format!(
                        "{shown}: line {line}: field `{name}` is not a finite number: `{raw}`"
                    ))
                })
        };
        points.push(
            coords
                .iter()
                .map(|&c| field(c))
                .collect::<Result<Point, _>>()?,
        );
        for (slot, out) in slots.iter().zip(extra.iter_mut()) {
            if let (Some(col), Some(values)) = (slot, out.as_mut()) {
                values.push(field(*col)?);
            }
        }
    }
    if points.is_empty() {
        return Err(CliError::Usage(format!("{shown}: no data rows")));
    }
    Ok(Table { points, extra })
}

/// Fixed 17-significant-digit rendering so output bytes do not depend on
/// formatting heuristics.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_owned()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".to_owned()
        } else {
            "-inf".to_owned()
        }
    } else {
        format!("{x:.16e}")
    }
}

pub fn records_csv(records: &[TrialRecord]) -> String {
    let mut out =
        String::from("regime,regularizer,lambda,trial,population_risk,empirical_risk,converged\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.regime.as_str(),
            r.regularizer.as_str(),
            fmt_float(r.lambda),
            r.trial,
            fmt_float(r.population_risk),
            fmt_float(r.empirical_risk),
            r.converged
        );
    }
    out
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("regime,regularizer,lambda,mean_risk,stderr,ci_lo,ci_hi,trials\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.regime.as_str(),
            r.regularizer.as_str(),
            fmt_float(r.lambda),
            fmt_float(r.mean_risk),
            r.stderr.map(fmt_float).unwrap_or_default(),
            fmt_float(r.ci_lo),
            fmt_float(r.ci_hi),
            r.trials
        );
    }
    out
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Usage(format!("{}: {e}", path.display()));
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    w.write_all(contents.as_bytes()).map_err(io)?;
    w.flush().map_err(io)
}
