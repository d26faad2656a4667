//! Run outputs: `series.csv`, `meta.json` and `spectra/NNNN.csv`.

use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::ExperimentConfig;
use crate::diagnostics::RunReport;
use crate::error::{Error, Result};

pub const LOCK_FILE: &str = ".muskat.lock";

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(dir.to_path_buf())),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputFiles {
    pub series: PathBuf,
    pub meta: PathBuf,
    pub spectra: Vec<PathBuf>,
}

#[derive(Serialize)]
struct Meta<'a> {
    code_version: &'static str,
    config: Option<&'a ExperimentConfig>,
    run: &'a serde_json::Value,
    snapshots: usize,
    steps_taken: usize,
    dt: f64,
    breakdown: &'a Option<crate::diagnostics::Breakdown>,
    derived: serde_json::Value,
}

fn series_header(report: &RunReport) -> Vec<String> {
    let mut h: Vec<String> = ["time", "l2", "linf", "h2", "rt_min", "slope_max"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    if report.dissipation_integral.is_some() {
        h.push("dissipation".into());
    }
    if !report.min_jacobian.is_empty() {
        h.push("min_jacobian".into());
    }
    h.extend(report.sobolev_samples.iter().map(|s| format!("h_s{}", s.s)));
    h
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other:?}", path.display())),
    }
}

/// Writes the series, metadata and spectra of `report` into `dir`.
///
/// Spectra are written for every `spectra_every`-th snapshot.
pub fn write_timeseries(
    report: &RunReport,
    config: Option<&ExperimentConfig>,
    dir: &Path,
) -> Result<OutputFiles> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let series = dir.join("series.csv");
    let mut w = csv::Writer::from_path(&series).map_err(|e| csv_err(&series, e))?;
    w.write_record(series_header(report)).map_err(|e| csv_err(&series, e))?;
    for i in 0..report.len() {
        let mut row = vec![
            report.times[i],
            report.l2_norms[i],
            report.linf_norms[i],
            report.h2_norms[i],
            report.rt_min[i],
            report.slope_max[i],
        ];
        if let Some(d) = &report.dissipation_integral {
            row.push(d[i]);
        }
        if !report.min_jacobian.is_empty() {
            row.push(report.min_jacobian[i]);
        }
        row.extend(report.sobolev_samples.iter().map(|s| s.values[i]));
        w.write_record(row.iter().map(|v| v.to_string())).map_err(|e| csv_err(&series, e))?;
    }
    w.flush().map_err(|e| Error::io(&series, e))?;

    let every = config.map_or(1, |c| c.diagnostics.spectra_every.max(1));
    let spectra_dir = dir.join("spectra");
    fs::create_dir_all(&spectra_dir).map_err(|e| Error::io(&spectra_dir, e))?;
    let mut spectra = Vec::new();
    for (i, tail) in report.spectral_tails.iter().enumerate().step_by(every) {
        let path = spectra_dir.join(format!("{i:04}.csv"));
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
        w.write_record(["k", "amplitude"]).map_err(|e| csv_err(&path, e))?;
        for (k, a) in tail.iter().enumerate() {
            w.write_record([k.to_string(), a.to_string()]).map_err(|e| csv_err(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        spectra.push(path);
    }

    let meta = dir.join("meta.json");
    let derived = serde_json::json!({
        "linear_rate_coefficient": report.metadata.get("linear_rate_coefficient"),
        "measured_symbol": report.metadata.get("measured_symbol"),
    });
    let body = Meta {
        code_version: env!("CARGO_PKG_VERSION"),
        config,
        run: &report.metadata,
        snapshots: report.len(),
        steps_taken: report.steps_taken,
        dt: report.dt,
        breakdown: &report.breakdown,
        derived,
    };
    let text = serde_json::to_string_pretty(&body).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(&meta, text + "\n").map_err(|e| Error::io(&meta, e))?;
    Ok(OutputFiles { series, meta, spectra })
}

/// Reads the config echo back from a `meta.json`.
pub fn read_meta_config(path: &Path) -> Result<ExperimentConfig> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value =
        serde_json::from_reader(file).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let config = value
        .get("config")
        .filter(|c| !c.is_null())
        .ok_or_else(|| Error::Format(format!("{}: no config echo", path.display())))?;
    ExperimentConfig::from_json(config)
}

/// A parsed `series.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Series {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

pub fn parse_series(text: &str) -> Result<Series> {
    parse_table(text, "time")
}

fn parse_table(text: &str, first: &str) -> Result<Series> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let columns: Vec<String> = r
        .headers()
        .map_err(|e| Error::MalformedSeries(e.to_string()))?
        .iter()
        .map(String::from)
        .collect();
    if columns.first().map(String::as_str) != Some(first) {
        return Err(Error::MalformedSeries(format!("first column must be `{first}`")));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::MalformedSeries(e.to_string()))?;
        let row: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let row = row.map_err(|e| Error::MalformedSeries(format!("row {}: {e}", i + 1)))?;
        if row.len() != columns.len() {
            return Err(Error::MalformedSeries(format!("row {} has {} fields", i + 1, row.len())));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::MalformedSeries("series has no rows".into()));
    }
    Ok(Series { columns, rows })
}

pub fn read_series(path: &Path) -> Result<Series> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_series(&text)
}

/// Reads one `spectra/NNNN.csv` as `(k, |ĥ(k)|)` pairs.
pub fn read_spectrum(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let s = parse_table(&text, "k")?;
    if s.columns.len() != 2 {
        return Err(Error::MalformedSeries(format!("{}: expected columns k, amplitude", path.display())));
    }
    Ok(s.rows.iter().map(|r| (r[0], r[1])).collect())
}
