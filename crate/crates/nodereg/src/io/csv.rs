//! CSV emission and a small reader for the plotting command.
//!
//! Floats are written with Rust's shortest round-trip formatting, so
//! identical runs produce byte-identical files.

use std::path::Path;

use crate::error::{Error, Result};
use crate::train::{GridRow, TrainRecord};

pub const RECORDS_HEADER: &str = "epoch,traj_loss,reg_loss,total_loss,val_mse";

pub fn records_csv(records: &[TrainRecord]) -> String {
    let mut out = String::from(RECORDS_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.epoch, r.traj_loss, r.reg_loss, r.total_loss, r.val_mse
        ));
    }
    out
}

pub fn write_records(path: &Path, records: &[TrainRecord]) -> Result<()> {
    super::write_atomic(path, records_csv(records).as_bytes())
}

pub fn grid_csv(rows: &[GridRow]) -> String {
    let mut out = String::from("lambda,val_mse,failed\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.lambda, r.val_mse, r.failed));
    }
    out
}

pub fn write_grid(path: &Path, rows: &[GridRow]) -> Result<()> {
    super::write_atomic(path, grid_csv(rows).as_bytes())
}

/// Generic (t, value) series, e.g. mean relative error or conservation
/// error over time.
pub fn series_csv(header: &str, series: &[(f64, f64)]) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for (t, v) in series {
        out.push_str(&format!("{t},{v}\n"));
    }
    out
}

pub fn write_series(path: &Path, header: &str, series: &[(f64, f64)]) -> Result<()> {
    super::write_atomic(path, series_csv(header, series).as_bytes())
}

pub fn finals_csv(finals: &[f64]) -> String {
    let mut out = String::from("trajectory,final_re\n");
    for (i, v) in finals.iter().enumerate() {
        out.push_str(&format!("{i},{v}\n"));
    }
    out
}

pub fn write_finals(path: &Path, finals: &[f64]) -> Result<()> {
    super::write_atomic(path, finals_csv(finals).as_bytes())
}

/// Parsed CSV: header fields plus rows of f64 (non-numeric cells are NaN).
pub struct CsvData {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn read_csv(path: &Path) -> Result<CsvData> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text)
}

pub fn parse_csv(text: &str) -> Result<CsvData> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Format("empty CSV".into()))?
        .split(',')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|cell| cell.parse::<f64>().unwrap_or(f64::NAN))
            .collect();
        if row.len() != header.len() {
            return Err(Error::Format(format!(
                "CSV row {} has {} cells, header has {}",
                lineno + 2,
                row.len(),
                header.len()
            )));
        }
        rows.push(row);
    }
    Ok(CsvData { header, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_header_exact() {
        assert_eq!(RECORDS_HEADER, "epoch,traj_loss,reg_loss,total_loss,val_mse");
        let csv = records_csv(&[]);
        assert!(csv.starts_with("epoch,traj_loss,reg_loss,total_loss,val_mse\n"));
    }

    #[test]
    fn records_round_trip_values() {
        let recs = vec![TrainRecord {
            epoch: 3,
            traj_loss: 0.1 + 0.2, // deliberately non-representable
            reg_loss: 1e-13,
            total_loss: 0.30000000000000004 + 1e-13 * 5e-13,
            val_mse: 2.5e-6,
            wall_time_s: 1.0,
        }];
        let parsed = parse_csv(&records_csv(&recs)).unwrap();
        assert_eq!(parsed.rows[0][1].to_bits(), recs[0].traj_loss.to_bits());
        assert_eq!(parsed.rows[0][4].to_bits(), recs[0].val_mse.to_bits());
    }

    #[test]
    fn empty_csv_rejected() {
        assert!(parse_csv("").is_err());
    }

    #[test]
    fn ragged_row_rejected() {
        assert!(parse_csv("a,b\n1,2\n3\n").is_err());
    }
}
