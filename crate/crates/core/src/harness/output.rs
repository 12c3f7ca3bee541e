//! Result tables. Column order is fixed under [`RESULT_FORMAT_VERSION`].

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::OutputFormat;
use crate::error::{Error, Result};

pub const RESULT_FORMAT_VERSION: u32 = 1;

pub const COLUMNS: [&str; 8] = [
    "format_version",
    "experiment",
    "env_seed",
    "grid_point",
    "estimate",
    "std_error",
    "samples",
    "metadata",
];

/// One tidy long-format row. Pooled rows have no environment seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub format_version: u32,
    pub experiment: String,
    pub env_seed: Option<u64>,
    pub grid_point: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub samples: u64,
    pub metadata: Value,
}

impl ResultRow {
    pub fn new(experiment: impl Into<String>, env_seed: Option<u64>, grid_point: f64, estimate: f64) -> Self {
        Self {
            format_version: RESULT_FORMAT_VERSION,
            experiment: experiment.into(),
            env_seed,
            grid_point,
            estimate,
            std_error: 0.0,
            samples: 1,
            metadata: Value::Object(Default::default()),
        }
    }

    pub fn se(mut self, std_error: f64, samples: u64) -> Self {
        self.std_error = std_error;
        self.samples = samples;
        self
    }

    pub fn meta(mut self, metadata: Value) -> Self {
        self.metadata = metadata;
        self
    }
}

/// Standard errors are nonnegative and `(experiment, env_seed, grid_point)` is a key.
pub fn check_rows(rows: &[ResultRow]) -> Result<()> {
    let mut keys: Vec<(&str, Option<u64>, u64)> = Vec::with_capacity(rows.len());
    for r in rows {
        if !(r.std_error >= 0.0) {
            return Err(Error::domain(format!("negative or undefined standard error in {}", r.experiment)));
        }
        keys.push((&r.experiment, r.env_seed, r.grid_point.to_bits()));
    }
    keys.sort_unstable();
    if let Some(w) = keys.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::domain(format!("duplicate result key {:?}", w[0])));
    }
    Ok(())
}

pub fn results_path(dir: &Path, format: OutputFormat) -> PathBuf {
    dir.join(match format {
        OutputFormat::Csv => "results.csv",
        OutputFormat::JsonLines => "results.jsonl",
    })
}

pub fn write_rows(path: &Path, format: OutputFormat, rows: &[ResultRow]) -> Result<()> {
    check_rows(rows)?;
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
            w.write_record(COLUMNS).map_err(csv_err)?;
            for r in rows {
                w.write_record([
                    r.format_version.to_string(),
                    r.experiment.clone(),
                    r.env_seed.map(|s| s.to_string()).unwrap_or_default(),
                    r.grid_point.to_string(),
                    r.estimate.to_string(),
                    r.std_error.to_string(),
                    r.samples.to_string(),
                    serde_json::to_string(&r.metadata)?,
                ])
                .map_err(csv_err)?;
            }
            w.flush()?;
        }
        OutputFormat::JsonLines => {
            let mut w = BufWriter::new(File::create(path)?);
            for r in rows {
                serde_json::to_writer(&mut w, r)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::domain(format!("csv: {other:?}")),
    }
}

pub fn read_rows(path: &Path, format: OutputFormat) -> Result<Vec<ResultRow>> {
    match format {
        OutputFormat::Csv => {
            let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
            let mut out = Vec::new();
            for rec in r.records() {
                let rec = rec.map_err(csv_err)?;
                let num = |i: usize| -> Result<f64> {
                    rec[i].parse().map_err(|_| Error::domain(format!("bad number in column {}", COLUMNS[i])))
                };
                out.push(ResultRow {
                    format_version: num(0)? as u32,
                    experiment: rec[1].to_string(),
                    env_seed: if rec[2].is_empty() {
                        None
                    } else {
                        Some(rec[2].parse().map_err(|_| Error::domain("bad env_seed"))?)
                    },
                    grid_point: num(3)?,
                    estimate: num(4)?,
                    std_error: num(5)?,
                    samples: rec[6].parse().map_err(|_| Error::domain("bad samples"))?,
                    metadata: serde_json::from_str(&rec[7])?,
                });
            }
            Ok(out)
        }
        OutputFormat::JsonLines => std::fs::read_to_string(path)?
            .lines()
            .map(|l| serde_json::from_str(l).map_err(Error::from))
            .collect(),
    }
}
