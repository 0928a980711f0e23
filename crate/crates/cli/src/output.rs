//! Deterministic CSV and JSON writers.
//!
//! Every CSV opens with two comment lines carrying the config hash and the
//! seed, so any output file can be traced back to the run that produced it.
//! Floats are written with Rust's shortest round-trip formatting and maps
//! iterate in key order, which makes re-runs byte-identical.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write as _;
use std::path::Path;

use gts_core::evaluate::{IntervalBand, PanelForecasts, ScoreTable};
use gts_core::hierarchy::{GroupedHierarchy, PanelSeries};

use crate::config::RunConfig;
use crate::CliError;

/// Provenance stamped into each output file.
#[derive(Debug, Clone, Copy)]
pub struct Stamp<'a> {
    pub config_hash: &'a str,
    pub seed: u64,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |source| CliError::Csv { path: path.display().to_string(), source }
}

fn stamped_writer(path: &Path, stamp: &Stamp) -> Result<csv::Writer<File>, CliError> {
    let mut file = File::create(path).map_err(io_err(path))?;
    writeln!(file, "# config_hash: {}", stamp.config_hash).map_err(io_err(path))?;
    writeln!(file, "# seed: {}", stamp.seed).map_err(io_err(path))?;
    Ok(csv::Writer::from_writer(file))
}

/// Shortest round-trip decimal form; NaN cells print as `NaN`.
pub fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v}")
    }
}

/// Point forecasts, one row per (node, future year).
pub fn write_points(
    path: &Path,
    stamp: &Stamp,
    hierarchy: &GroupedHierarchy,
    years: &[i64],
    points: &[Vec<f64>],
) -> Result<(), CliError> {
    let mut w = stamped_writer(path, stamp)?;
    w.write_record(["node", "year", "value"]).map_err(csv_err(path))?;
    for (j, series) in points.iter().enumerate() {
        let node = hierarchy.key(j).label();
        for (t, &value) in series.iter().enumerate() {
            w.write_record([node.as_str(), &years[t].to_string(), &fmt_value(value)])
                .map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

/// Prediction intervals, one row per (node, future year).
pub fn write_intervals(
    path: &Path,
    stamp: &Stamp,
    hierarchy: &GroupedHierarchy,
    years: &[i64],
    band: &IntervalBand,
    alpha: f64,
) -> Result<(), CliError> {
    let mut w = stamped_writer(path, stamp)?;
    w.write_record(["node", "year", "lower", "upper", "alpha"]).map_err(csv_err(path))?;
    let alpha = fmt_value(alpha);
    for j in 0..band.lower.len() {
        let node = hierarchy.key(j).label();
        for (t, &year) in years.iter().enumerate() {
            w.write_record([
                node.as_str(),
                &year.to_string(),
                &fmt_value(band.lower[j][t]),
                &fmt_value(band.upper[j][t]),
                &alpha,
            ])
            .map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

/// Plot-ready long format: observed history rows tagged `observed`, then
/// one block of forecast rows per method.
pub fn write_series_long(
    path: &Path,
    stamp: &Stamp,
    panel: &PanelSeries,
    forecasts: &PanelForecasts,
) -> Result<(), CliError> {
    let hierarchy = panel.hierarchy();
    let mut w = stamped_writer(path, stamp)?;
    w.write_record(["node", "year", "source", "value"]).map_err(csv_err(path))?;
    for j in 0..panel.m() {
        let node = hierarchy.key(j).label();
        let rates = panel.rate_series(j);
        for (t, &year) in panel.years().iter().enumerate() {
            w.write_record([node.as_str(), &year.to_string(), "observed", &fmt_value(rates[t])])
                .map_err(csv_err(path))?;
        }
    }
    for (method, points) in &forecasts.points {
        for (j, series) in points.iter().enumerate() {
            let node = hierarchy.key(j).label();
            for (t, &value) in series.iter().enumerate() {
                w.write_record([
                    node.as_str(),
                    &forecasts.years[t].to_string(),
                    method.label(),
                    &fmt_value(value),
                ])
                .map_err(csv_err(path))?;
            }
        }
    }
    w.flush().map_err(io_err(path))
}

/// One score table in long form. Values are scaled by 100 for display,
/// matching the usual presentation of demographic rate errors. Each level
/// block ends with `mean` and `median` rows aggregating over horizons.
pub fn write_scores(path: &Path, stamp: &Stamp, table: &ScoreTable) -> Result<(), CliError> {
    let mut w = stamped_writer(path, stamp)?;
    w.write_record(["level", "horizon", "value_x100"]).map_err(csv_err(path))?;
    for (level, name) in table.level_names.iter().enumerate() {
        for (h, &value) in table.values[level].iter().enumerate() {
            w.write_record([name.as_str(), &(h + 1).to_string(), &fmt_value(value * 100.0)])
                .map_err(csv_err(path))?;
        }
        w.write_record([name.as_str(), "mean", &fmt_value(table.mean_row[level] * 100.0)])
            .map_err(csv_err(path))?;
        w.write_record([name.as_str(), "median", &fmt_value(table.median_row[level] * 100.0)])
            .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// A [`ScoreTable`] as it appears in `summary.json`, raw scale.
#[derive(Debug, serde::Serialize)]
pub struct JsonTable {
    pub levels: Vec<String>,
    pub horizons: Vec<usize>,
    /// `values[level][horizon index]`; NaN serializes as null.
    pub values: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub median: Vec<f64>,
}

impl JsonTable {
    pub fn from_table(table: &ScoreTable) -> JsonTable {
        let horizon = table.values.first().map(|row| row.len()).unwrap_or(0);
        JsonTable {
            levels: table.level_names.clone(),
            horizons: (1..=horizon).collect(),
            values: table.values.clone(),
            mean: table.mean_row.clone(),
            median: table.median_row.clone(),
        }
    }
}

/// Point and interval tables for one method.
#[derive(Debug, serde::Serialize)]
pub struct MethodScores {
    pub mfe: JsonTable,
    pub mafe: JsonTable,
    pub rmsfe: JsonTable,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interval_score: Option<JsonTable>,
}

/// Machine-readable evaluation summary.
#[derive(Debug, serde::Serialize)]
pub struct Summary<'a> {
    pub config_hash: &'a str,
    pub seed: u64,
    pub train_end_year: i64,
    pub origins: usize,
    pub horizon: usize,
    /// Hash of the unreconciled forecasts; invariant to the summing-matrix
    /// mode, which lets holdout and forecast runs be compared.
    pub base_forecast_hash: String,
    pub methods: Vec<&'static str>,
    pub warnings: &'a [String],
    pub config: &'a RunConfig,
    pub scores: BTreeMap<&'static str, MethodScores>,
}

pub fn write_summary(path: &Path, summary: &Summary) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(summary)?;
    std::fs::write(path, text + "\n").map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use gts_core::evaluate::Metric;
    use gts_core::hierarchy::build_hierarchy;

    fn stamp() -> Stamp<'static> {
        Stamp { config_hash: "deadbeef", seed: 7 }
    }

    #[test]
    fn stamped_files_open_with_provenance_comments() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("points.csv");
        let h = build_hierarchy(&[("sex".to_string(), vec!["F".to_string(), "M".to_string()])])
            .unwrap();
        let points = vec![vec![0.1, 0.2]; 3];
        write_points(&path, &stamp(), &h, &[2004, 2005], &points).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("# config_hash: deadbeef"));
        assert_eq!(lines.next(), Some("# seed: 7"));
        assert_eq!(lines.next(), Some("node,year,value"));
        assert_eq!(lines.next(), Some("T,2004,0.1"));
        // 2 comment lines, header, 3 nodes x 2 years.
        assert_eq!(text.lines().count(), 9);
    }

    #[test]
    fn score_rows_scale_by_hundred_and_close_with_summary_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.csv");
        let table = ScoreTable {
            metric: Metric::Mafe,
            level_names: vec!["total".to_string()],
            values: vec![vec![0.004, 0.006]],
            mean_row: vec![0.005],
            median_row: vec![0.005],
        };
        write_scores(&path, &stamp(), &table).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[2], "level,horizon,value_x100");
        assert_eq!(lines[3], "total,1,0.4");
        assert_eq!(lines[4], "total,2,0.6");
        assert_eq!(lines[5], "total,mean,0.5");
        assert_eq!(lines[6], "total,median,0.5");
    }

    #[test]
    fn nan_cells_print_as_nan_and_serialize_as_null() {
        assert_eq!(fmt_value(f64::NAN), "NaN");
        assert_eq!(fmt_value(0.25), "0.25");
        let json = serde_json::to_string(&[f64::NAN, 1.5]).unwrap();
        assert_eq!(json, "[null,1.5]");
    }
}
