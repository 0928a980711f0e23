//! `gts`: forecast and reconcile grouped demographic rate panels.
//!
//! Subcommands:
//!
//! - `validate` checks a panel CSV against a hierarchy and reports its shape
//! - `forecast` fits every series on the full history and writes coherent
//!   forecasts, with optional bootstrap prediction intervals
//! - `evaluate` runs the expanding-window backtest and writes score tables
//! - `synth` writes a synthetic panel plus matching hierarchy and config
//!
//! Exit status is 0 exactly when the command succeeds. Warnings go to
//! standard error; results go to files under the configured output
//! directory, each stamped with the config hash and seed.

mod config;
mod ingest;
mod output;
mod synth;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use gts_core::bootstrap::ExposureMode;
use gts_core::evaluate::{
    panel_forecasts, run_rolling, EvaluateError, IntervalSettings, RollingConfig, RollingPlan,
};
use gts_core::hierarchy::{HierarchyError, PanelSeries};

use crate::config::{HierarchyConfig, Resolved, RunConfig};
use crate::ingest::IngestError;
use crate::output::{JsonTable, MethodScores, Stamp, Summary};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("cannot serialize config: {0}")]
    Emit(String),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error(transparent)]
    Evaluate(#[from] EvaluateError),
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("cannot write JSON: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Parser)]
#[command(name = "gts", version, about = "Grouped time-series forecasting for demographic rates")]
struct Cli {
    /// Worker threads; 0 or absent means one per core. The GTS_THREADS
    /// environment variable applies when the flag is absent.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a panel CSV against a hierarchy and report its shape.
    Validate {
        #[arg(long)]
        panel: PathBuf,
        #[arg(long)]
        hierarchy: PathBuf,
    },
    /// Fit on the full history and write point forecasts per method.
    Forecast {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated subset of base, bottom-up, ols, gls.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        /// Forecast horizon in years.
        #[arg(long = "h")]
        horizon: Option<usize>,
        /// Fit on data up to this year only.
        #[arg(long)]
        train_end: Option<i64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Expanding-window backtest: score tables and a JSON summary.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        /// Last training year of the first fit; later years are refit
        /// origins.
        #[arg(long)]
        train_end: i64,
        /// Override the configured s_mode (forecast or holdout).
        #[arg(long)]
        s_mode: Option<String>,
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write a synthetic panel, hierarchy, and ready-to-run config.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 71)]
        years: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

fn init_threads(flag: Option<usize>) {
    let requested = flag.or_else(|| {
        std::env::var("GTS_THREADS").ok().and_then(|v| v.parse().ok())
    });
    if let Some(n) = requested {
        if n > 0 {
            // Ignore the error from a pool that is already running; that
            // only happens in tests driving main() twice.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn rolling_config(resolved: &Resolved) -> RollingConfig {
    RollingConfig {
        methods: resolved.methods.clone(),
        s_mode: resolved.s_mode,
        rate_scale: resolved.rate_scale,
        bounds: resolved.bounds,
        seed: resolved.seed,
        intervals: resolved.intervals.then_some(IntervalSettings {
            alpha: resolved.alpha,
            b_replicates: resolved.b_replicates,
            p_paths: resolved.p_paths,
            exposure_mode: ExposureMode::Simulated,
        }),
    }
}

/// Index of `year` in the panel's time axis, or a readable error.
fn year_position(panel: &PanelSeries, year: i64) -> Result<usize, CliError> {
    panel.years().iter().position(|&y| y == year).ok_or_else(|| {
        CliError::Config(format!(
            "train_end {year} is outside the panel years {}..{}",
            panel.years().first().copied().unwrap_or(0),
            panel.years().last().copied().unwrap_or(0),
        ))
    })
}

fn load_inputs(resolved: &Resolved) -> Result<(PanelSeries, ingest::IngestReport), CliError> {
    let hierarchy = HierarchyConfig::load(&resolved.hierarchy_path)?.build()?;
    Ok(ingest::load_panel(&resolved.panel_path, &hierarchy)?)
}

fn cmd_validate(panel: &Path, hierarchy: &Path) -> Result<(), CliError> {
    let h = HierarchyConfig::load(hierarchy)?.build()?;
    let (loaded, report) = ingest::load_panel(panel, &h)?;
    println!(
        "panel: {} rows, years {}..{} ({} observations per series)",
        report.rows,
        report.first_year,
        report.last_year,
        loaded.n()
    );
    println!(
        "hierarchy: {} nodes, {} bottom series, levels {}",
        report.nodes,
        report.bottom_series,
        h.level_names().join(", ")
    );
    Ok(())
}

fn cmd_forecast(
    config_path: &Path,
    methods: Option<Vec<String>>,
    horizon: Option<usize>,
    train_end: Option<i64>,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let mut run = RunConfig::load(config_path)?;
    if let Some(methods) = methods {
        run.methods = methods;
    }
    if let Some(h) = horizon {
        run.horizon = h;
    }
    if let Some(seed) = seed {
        run.seed = seed;
    }
    let base = config_path.parent().unwrap_or(Path::new("."));
    let resolved = run.resolve(base)?;
    let (panel, _) = load_inputs(&resolved)?;
    let panel = match train_end {
        Some(year) => panel.restrict_prefix(year_position(&panel, year)? + 1),
        None => panel,
    };

    let forecasts = panel_forecasts(&panel, resolved.horizon, &rolling_config(&resolved))?;
    for warning in &forecasts.warnings {
        eprintln!("warning: {warning}");
    }

    std::fs::create_dir_all(&resolved.output_dir)
        .map_err(|e| CliError::Io { path: resolved.output_dir.display().to_string(), source: e })?;
    let stamp = Stamp { config_hash: &resolved.config_hash, seed: resolved.seed };
    let hierarchy = panel.hierarchy();
    for (method, points) in &forecasts.points {
        let path = resolved.output_dir.join(format!("points_{}.csv", method.label()));
        output::write_points(&path, &stamp, hierarchy, &forecasts.years, points)?;
        println!("wrote {}", path.display());
    }
    for (method, band) in &forecasts.intervals {
        let path = resolved.output_dir.join(format!("intervals_{}.csv", method.label()));
        output::write_intervals(&path, &stamp, hierarchy, &forecasts.years, band, resolved.alpha)?;
        println!("wrote {}", path.display());
    }
    let path = resolved.output_dir.join("series_long.csv");
    output::write_series_long(&path, &stamp, &panel, &forecasts)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_evaluate(
    config_path: &Path,
    train_end: i64,
    s_mode: Option<String>,
    methods: Option<Vec<String>>,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let mut run = RunConfig::load(config_path)?;
    if let Some(methods) = methods {
        run.methods = methods;
    }
    if let Some(s_mode) = s_mode {
        run.s_mode = s_mode;
    }
    if let Some(seed) = seed {
        run.seed = seed;
    }
    let base = config_path.parent().unwrap_or(Path::new("."));
    let resolved = run.resolve(base)?;
    let (panel, _) = load_inputs(&resolved)?;

    let n0 = year_position(&panel, train_end)? + 1;
    if n0 >= panel.n() {
        return Err(CliError::Config(format!(
            "train_end {train_end} leaves no holdout years to score"
        )));
    }
    let plan = RollingPlan::new(n0, panel.n())?;
    let out = run_rolling(&panel, &plan, &rolling_config(&resolved))?;
    for warning in &out.warnings {
        eprintln!("warning: {warning}");
    }

    std::fs::create_dir_all(&resolved.output_dir)
        .map_err(|e| CliError::Io { path: resolved.output_dir.display().to_string(), source: e })?;
    let stamp = Stamp { config_hash: &resolved.config_hash, seed: resolved.seed };
    let mut scores = std::collections::BTreeMap::new();
    for (method, points) in &out.point_scores {
        for table in [&points.mfe, &points.mafe, &points.rmsfe] {
            let path = resolved
                .output_dir
                .join(format!("scores_{}_{}.csv", table.metric.label(), method.label()));
            output::write_scores(&path, &stamp, table)?;
            println!("wrote {}", path.display());
        }
        let interval = out.interval_scores.get(method).map(|s| JsonTable::from_table(&s.table));
        scores.insert(
            method.label(),
            MethodScores {
                mfe: JsonTable::from_table(&points.mfe),
                mafe: JsonTable::from_table(&points.mafe),
                rmsfe: JsonTable::from_table(&points.rmsfe),
                interval_score: interval,
            },
        );
    }
    for (method, iscores) in &out.interval_scores {
        let path = resolved
            .output_dir
            .join(format!("scores_interval_score_{}.csv", method.label()));
        output::write_scores(&path, &stamp, &iscores.table)?;
        println!("wrote {}", path.display());
    }

    let summary = Summary {
        config_hash: &resolved.config_hash,
        seed: resolved.seed,
        train_end_year: train_end,
        origins: out.origins.len(),
        horizon: out.horizon,
        base_forecast_hash: format!("{:016x}", out.base_forecast_hash),
        methods: out.point_scores.keys().map(|m| m.label()).collect(),
        warnings: &out.warnings,
        config: &run,
        scores,
    };
    let path = resolved.output_dir.join("summary.json");
    output::write_summary(&path, &summary)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_synth(out_dir: &Path, years: usize, seed: u64) -> Result<(), CliError> {
    let files = synth::write_synthetic(out_dir, years, seed)?;
    println!("wrote {} ({} rows)", files.panel.display(), files.rows);
    println!("wrote {}", files.hierarchy.display());
    println!("wrote {}", files.config.display());
    Ok(())
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Validate { panel, hierarchy } => cmd_validate(&panel, &hierarchy),
        Command::Forecast { config, methods, horizon, train_end, seed } => {
            cmd_forecast(&config, methods, horizon, train_end, seed)
        }
        Command::Evaluate { config, train_end, s_mode, methods, seed } => {
            cmd_evaluate(&config, train_end, s_mode, methods, seed)
        }
        Command::Synth { out_dir, years, seed } => cmd_synth(&out_dir, years, seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads(cli.threads);
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
