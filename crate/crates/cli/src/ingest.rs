//! Panel CSV loading with row-addressed diagnostics.
//!
//! The expected layout is one row per (year, bottom key) cell:
//!
//! ```text
//! year,<attr1>[,<attr2>],deaths,exposure
//! ```
//!
//! Years must form a contiguous range and every bottom key must appear
//! exactly once per year. Line numbers in errors are 1-based with the
//! header on line 1, matching what a text editor shows.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use gts_core::hierarchy::{aggregate_panel, GroupedHierarchy, HierarchyError, PanelSeries};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{file}: cannot read: {source}")]
    Io {
        file: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: malformed CSV: {message}")]
    Malformed { file: String, line: u64, message: String },
    #[error("{file}:1: header is '{found}', expected '{expected}'")]
    Header { file: String, expected: String, found: String },
    #[error("{file}:{line}: {field} '{value}' is not a number")]
    BadNumber { file: String, line: u64, field: &'static str, value: String },
    #[error("{file}:{line}: unknown {attr} value '{value}'")]
    UnknownValue { file: String, line: u64, attr: String, value: String },
    #[error("{file}:{line}: exposure must be positive and finite, got {value}")]
    NonpositiveExposure { file: String, line: u64, value: f64 },
    #[error("{file}:{line}: deaths must be nonnegative and finite, got {value}")]
    BadDeaths { file: String, line: u64, value: f64 },
    #[error("{file}:{line}: duplicate row for year {year}, key {key} (first seen at line {first})")]
    Duplicate { file: String, line: u64, first: u64, year: i64, key: String },
    #[error("{file}: year {year} is missing {count} of {expected} keys (first missing: {key})")]
    MissingCells { file: String, year: i64, count: usize, expected: usize, key: String },
    #[error("{file}: years jump from {prev} to {next}; the range must be contiguous")]
    YearGap { file: String, prev: i64, next: i64 },
    #[error("{file}: no data rows")]
    Empty { file: String },
    #[error(transparent)]
    Panel(#[from] HierarchyError),
}

/// What `gts validate` reports on success.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestReport {
    pub rows: usize,
    pub first_year: i64,
    pub last_year: i64,
    pub nodes: usize,
    pub bottom_series: usize,
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

/// Reads the panel CSV and aggregates it over `hierarchy`.
pub fn load_panel(
    path: &Path,
    hierarchy: &GroupedHierarchy,
) -> Result<(PanelSeries, IngestReport), IngestError> {
    let file = path.display().to_string();
    let io_err = |source| IngestError::Io { file: file.clone(), source };

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => io_err(io),
            other => IngestError::Malformed { file: file.clone(), line: 1, message: format!("{other:?}") },
        })?;

    let attr_names = hierarchy.attr_names();
    let mut expected_header: Vec<&str> = vec!["year"];
    expected_header.extend(attr_names.iter().map(|s| s.as_str()));
    expected_header.extend(["deaths", "exposure"]);
    let header = reader
        .headers()
        .map_err(|e| IngestError::Malformed { file: file.clone(), line: 1, message: e.to_string() })?
        .clone();
    let found: Vec<&str> = header.iter().collect();
    if found != expected_header {
        return Err(IngestError::Header {
            file,
            expected: expected_header.join(","),
            found: found.join(","),
        });
    }

    let n_attr = attr_names.len();
    let domains = hierarchy.attr_domains();
    // Bottom key labels to canonical bottom-relative index.
    let key_index: BTreeMap<Vec<String>, usize> = (0..hierarchy.m_k())
        .map(|k| {
            let key = hierarchy.key(hierarchy.bottom_start() + k);
            let parts: Vec<String> =
                key.values.iter().map(|v| v.clone().expect("bottom key")).collect();
            (parts, k)
        })
        .collect();

    // (year, bottom index) -> (line, deaths, exposure).
    let mut cells: BTreeMap<(i64, usize), (u64, f64, f64)> = BTreeMap::new();
    let mut rows = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            IngestError::Malformed { file: file.clone(), line, message: e.to_string() }
        })?;
        let line = record_line(&record);
        rows += 1;

        let year: i64 = record[0].parse().map_err(|_| IngestError::BadNumber {
            file: file.clone(),
            line,
            field: "year",
            value: record[0].to_string(),
        })?;
        let mut key_parts: Vec<String> = Vec::with_capacity(n_attr);
        for (a, name) in attr_names.iter().enumerate() {
            let value = &record[1 + a];
            if !domains[a].iter().any(|v| v == value) {
                return Err(IngestError::UnknownValue {
                    file,
                    line,
                    attr: name.clone(),
                    value: value.to_string(),
                });
            }
            key_parts.push(value.to_string());
        }
        let deaths: f64 = record[1 + n_attr].parse().map_err(|_| IngestError::BadNumber {
            file: file.clone(),
            line,
            field: "deaths",
            value: record[1 + n_attr].to_string(),
        })?;
        let exposure: f64 = record[2 + n_attr].parse().map_err(|_| IngestError::BadNumber {
            file: file.clone(),
            line,
            field: "exposure",
            value: record[2 + n_attr].to_string(),
        })?;
        if !(deaths.is_finite() && deaths >= 0.0) {
            return Err(IngestError::BadDeaths { file, line, value: deaths });
        }
        if !(exposure.is_finite() && exposure > 0.0) {
            return Err(IngestError::NonpositiveExposure { file, line, value: exposure });
        }

        let k = *key_index.get(&key_parts).expect("domain-checked key");
        if let Some(&(first, _, _)) = cells.get(&(year, k)) {
            let key = hierarchy.key(hierarchy.bottom_start() + k).label();
            return Err(IngestError::Duplicate { file, line, first, year, key });
        }
        cells.insert((year, k), (line, deaths, exposure));
    }
    if cells.is_empty() {
        return Err(IngestError::Empty { file });
    }

    let m_k = hierarchy.m_k();
    let years: Vec<i64> = {
        let mut ys: Vec<i64> = cells.keys().map(|&(y, _)| y).collect();
        ys.dedup();
        ys
    };
    for pair in years.windows(2) {
        if pair[1] != pair[0] + 1 {
            return Err(IngestError::YearGap { file, prev: pair[0], next: pair[1] });
        }
    }
    for &year in &years {
        let present = cells.range((year, 0)..=(year, m_k - 1)).count();
        if present < m_k {
            let missing = (0..m_k)
                .find(|&k| !cells.contains_key(&(year, k)))
                .expect("some key is absent");
            let key = hierarchy.key(hierarchy.bottom_start() + missing).label();
            return Err(IngestError::MissingCells {
                file,
                year,
                count: m_k - present,
                expected: m_k,
                key,
            });
        }
    }

    let n = years.len();
    let mut deaths = vec![Vec::with_capacity(n); m_k];
    let mut exposures = vec![Vec::with_capacity(n); m_k];
    for (&(_, k), &(_, d, e)) in &cells {
        deaths[k].push(d);
        exposures[k].push(e);
    }
    let panel = aggregate_panel(hierarchy, &years, &deaths, &exposures)?;
    let report = IngestReport {
        rows,
        first_year: years[0],
        last_year: years[n - 1],
        nodes: hierarchy.m(),
        bottom_series: m_k,
    };
    Ok((panel, report))
}
