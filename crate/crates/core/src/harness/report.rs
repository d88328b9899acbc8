use super::{Aggregate, RateReport, ReplicationRecord};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "svg" => Ok(Format::Svg),
            other => Err(Error::config(format!("unknown format {other:?}"))),
        }
    }
}

const ROW_HEADER: [&str; 13] = [
    "scenario",
    "n",
    "rep",
    "seed",
    "h",
    "k",
    "status",
    "tau_true",
    "tau_hat",
    "tau_hat_first_order",
    "abs_error",
    "abs_error_first_order",
    "message",
];

const AGG_HEADER: [&str; 10] = [
    "scenario",
    "n",
    "n_ok",
    "n_degenerate",
    "mae",
    "se",
    "bias",
    "mae_first_order",
    "se_first_order",
    "bias_first_order",
];

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn write_table<W: Write, T: Serialize>(w: W, header: &[&str], rows: &[T]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wtr.write_record(header).map_err(csv_err)?;
    for r in rows {
        wtr.serialize(r).map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_rows_csv<W: Write>(w: W, rows: &[ReplicationRecord]) -> Result<()> {
    write_table(w, &ROW_HEADER, rows)
}

pub fn write_aggregates_csv<W: Write>(w: W, aggs: &[Aggregate]) -> Result<()> {
    write_table(w, &AGG_HEADER, aggs)
}

pub fn to_json(report: &RateReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)?)
}

pub fn from_json(s: &str) -> Result<RateReport> {
    Ok(serde_json::from_str(s)?)
}

/// Writes the report in each format under `dir`, returning the paths written.
pub fn emit(report: &RateReport, dir: &Path, stem: &str, formats: &[Format]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    for f in formats {
        match f {
            Format::Csv => {
                let p = dir.join(format!("{stem}_rows.csv"));
                write_rows_csv(std::fs::File::create(&p)?, &report.rows)?;
                out.push(p);
                let p = dir.join(format!("{stem}_aggregates.csv"));
                write_aggregates_csv(std::fs::File::create(&p)?, &report.aggregates)?;
                out.push(p);
            }
            Format::Json => {
                let p = dir.join(format!("{stem}.json"));
                std::fs::write(&p, to_json(report)?)?;
                out.push(p);
            }
            Format::Svg => {
                let p = dir.join(format!("{stem}.svg"));
                std::fs::write(&p, super::svg::render(report))?;
                out.push(p);
            }
        }
    }
    Ok(out)
}
