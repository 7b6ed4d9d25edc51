//! CSV and JSON output of sweep results and error CDFs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::metrics::{cdf_points, MetricsRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::Config(format!("unknown format {other:?}"))),
        }
    }
}

/// Summary row shared by the CSV and JSON outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub axis_value: f64,
    pub rmse_map_ns: f64,
    pub rmse_mmse_ns: f64,
    pub detect_rate: f64,
    pub mean_samples_per_iter: f64,
    pub n_trials: usize,
    pub seed: u64,
}

impl From<&MetricsRecord> for SummaryRow {
    fn from(m: &MetricsRecord) -> Self {
        Self {
            axis_value: m.axis_value,
            rmse_map_ns: m.rmse_map_ns,
            rmse_mmse_ns: m.rmse_mmse_ns,
            detect_rate: m.detect_rate,
            mean_samples_per_iter: m.mean_samples_per_iter,
            n_trials: m.n_trials,
            seed: m.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfRow {
    pub error_ns: f64,
    pub cum_prob: f64,
}

pub fn summary_csv(records: &[MetricsRecord]) -> String {
    let mut s = String::from(
        "axis_value,rmse_map_ns,rmse_mmse_ns,detect_rate,mean_samples_per_iter,n_trials,seed\n",
    );
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.axis_value,
            r.rmse_map_ns,
            r.rmse_mmse_ns,
            r.detect_rate,
            r.mean_samples_per_iter,
            r.n_trials,
            r.seed
        );
    }
    s
}

pub fn summary_json(records: &[MetricsRecord]) -> Result<String> {
    let rows: Vec<SummaryRow> = records.iter().map(SummaryRow::from).collect();
    Ok(serde_json::to_string_pretty(&rows)?)
}

/// Per-trial rows, enough to recompute every aggregate.
pub fn trials_csv(records: &[MetricsRecord]) -> String {
    let mut s = String::from(
        "axis_value,trial,seed,tau1_true_ns,tau1_map_ns,tau1_mmse_ns,selected_model,true_model,k_hat,iterations,total_samples,converged\n",
    );
    for r in records {
        for t in &r.trials {
            let truth = t.true_model.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.axis_value,
                t.trial,
                t.seed,
                t.tau1_true * 1e9,
                t.tau1_map * 1e9,
                t.tau1_mmse * 1e9,
                t.selected_model,
                truth,
                t.k_hat,
                t.iterations,
                t.total_samples,
                t.converged
            );
        }
    }
    s
}

/// Empirical CDF of absolute first-path MAP errors.
pub fn error_cdf(record: &MetricsRecord) -> Vec<CdfRow> {
    let errs: Vec<f64> = record.trials.iter().map(|t| t.err_map_ns().abs()).collect();
    cdf_points(&errs)
        .into_iter()
        .map(|(e, p)| CdfRow {
            error_ns: e,
            cum_prob: p,
        })
        .collect()
}

pub fn cdf_csv(rows: &[CdfRow]) -> String {
    let mut s = String::from("error_ns,cum_prob\n");
    for r in rows {
        let _ = writeln!(s, "{},{}", r.error_ns, r.cum_prob);
    }
    s
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, contents)?;
    Ok(())
}

/// Writes the summary in the requested format.
pub fn emit(records: &[MetricsRecord], format: Format, path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Config("nothing to emit".into()));
    }
    let body = match format {
        Format::Csv => summary_csv(records),
        Format::Json => summary_json(records)?,
    };
    write_file(path, &body)
}

pub fn emit_cdf(rows: &[CdfRow], format: Format, path: &Path) -> Result<()> {
    let body = match format {
        Format::Csv => cdf_csv(rows),
        Format::Json => serde_json::to_string_pretty(rows)?,
    };
    write_file(path, &body)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record() -> MetricsRecord {
        MetricsRecord::aggregate(5.0, 9, vec![])
    }

    #[test]
    fn csv_has_header_and_row() {
        let s = summary_csv(&[record()]);
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(
            lines[0],
            "axis_value,rmse_map_ns,rmse_mmse_ns,detect_rate,mean_samples_per_iter,n_trials,seed"
        );
        assert!(lines[1].starts_with("5,"));
    }

    #[test]
    fn json_round_trip() {
        let r = MetricsRecord {
            rmse_map_ns: 0.1 + 0.2,
            ..record()
        };
        let s = summary_json(&[r.clone()]).unwrap();
        let back: Vec<SummaryRow> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, vec![SummaryRow::from(&r)]);
    }

    #[test]
    fn unwritable_path_errors() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let err = emit(&[record()], Format::Csv, &blocker.join("out.csv"));
        assert!(err.is_err());
        assert!(emit(&[], Format::Csv, &dir.path().join("a.csv")).is_err());
    }
}
