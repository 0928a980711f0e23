//! Rolling-origin evaluation of point and interval forecasts.
//!
//! The protocol refits every model on an expanding window: starting from a
//! first training size, forecast all remaining years, grow the window by
//! one, and repeat until the data runs out. With horizon H this yields
//! H - h + 1 forecasts at each step length h. Scores are mean forecast
//! error, mean absolute forecast error, root mean squared forecast error,
//! and the mean interval score, each reported per hierarchy level and
//! horizon with mean and median summary rows.

use crate::arima::{
    auto_fit_with, fit_forecast_log_exposure, forecast, ArimaError, InterceptPolicy, OrderBounds,
    RateScale,
};
use crate::bootstrap::{
    interval_forecasts_multi, BootstrapError, ExposureMode, IntervalOptions,
};
use crate::hierarchy::{
    summing_matrix_rates, GroupedHierarchy, HierarchyError, PanelSeries, SummingMatrix,
};
use crate::reconcile::{
    bottom_up, gls_combine, inverse_variance_weights, ols_combine, BaseForecasts, Method,
    ReconcileError, SProvenance,
};
use crate::stats;
use nalgebra::DVector;
use rayon::prelude::*;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvaluateError {
    #[error("rolling plan needs 1 <= first train size < end index, got {n0} and {n_end}")]
    BadPlan { n0: usize, n_end: usize },
    #[error("rolling plan ends at index {n_end} but the panel has {n} observations")]
    PlanExceedsData { n_end: usize, n: usize },
    #[error("no methods requested")]
    NoMethods,
    #[error("forecast horizon must be at least 1")]
    ZeroHorizon,
    #[error("{what} grid does not match the rolling plan shape")]
    GridShape { what: &'static str },
    #[error("interval level alpha must lie strictly between 0 and 1, got {alpha}")]
    InvalidAlpha { alpha: f64 },
    #[error("interval bounds are inverted: lower {lower} > upper {upper}")]
    IntervalOrder { lower: f64, upper: f64 },
    #[error("non-finite input to the interval score")]
    NonFiniteScore,
    #[error("origin {origin}: {failed} of {total} series unfittable, more than the 20% budget")]
    TooManyFailures { origin: usize, failed: usize, total: usize },
    #[error("origin {origin}: exposure model failed for bottom series {label}: {source}")]
    ExposureModel { origin: usize, label: String, source: ArimaError },
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error(transparent)]
    Reconcile(#[from] ReconcileError),
    #[error(transparent)]
    Bootstrap(#[from] BootstrapError),
}

/// Expanding-window schedule. Origins are training sizes; the window grows
/// by one observation per origin and always forecasts to the end index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RollingPlan {
    n0: usize,
    n_end: usize,
}

impl RollingPlan {
    pub fn new(n0: usize, n_end: usize) -> Result<RollingPlan, EvaluateError> {
        if n0 == 0 || n0 >= n_end {
            return Err(EvaluateError::BadPlan { n0, n_end });
        }
        Ok(RollingPlan { n0, n_end })
    }

    pub fn first_train_size(&self) -> usize {
        self.n0
    }

    pub fn end_index(&self) -> usize {
        self.n_end
    }

    /// Longest forecast horizon, reached from the first origin.
    pub fn horizon(&self) -> usize {
        self.n_end - self.n0
    }

    /// Training sizes, one per refit.
    pub fn origins(&self) -> std::ops::Range<usize> {
        self.n0..self.n_end
    }

    /// How many h-step forecasts the plan produces (H - h + 1 inside the
    /// horizon, 0 outside).
    pub fn forecast_count(&self, h: usize) -> usize {
        if h >= 1 && h <= self.horizon() {
            self.horizon() - h + 1
        } else {
            0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Metric {
    Mfe,
    Mafe,
    Rmsfe,
    IntervalScore,
}

impl Metric {
    pub fn label(self) -> &'static str {
        match self {
            Metric::Mfe => "mfe",
            Metric::Mafe => "mafe",
            Metric::Rmsfe => "rmsfe",
            Metric::IntervalScore => "interval_score",
        }
    }
}

/// Forecast or holdout cells laid out `[origin index][series][h-1]`; the
/// inner vector shrinks by one per origin because later origins forecast
/// fewer steps. NaN marks a cell lost to a fit failure; scoring skips it.
pub type CellGrid = Vec<Vec<Vec<f64>>>;

/// Lower and upper interval bounds in [`CellGrid`] layout.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalGrid {
    pub lower: CellGrid,
    pub upper: CellGrid,
}

/// One metric by hierarchy level and horizon, raw scale, with mean and
/// median summary rows taken over horizons within each level.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub metric: Metric,
    pub level_names: Vec<String>,
    /// `values[level][h-1]`; NaN when no finite cell contributed.
    pub values: Vec<Vec<f64>>,
    pub mean_row: Vec<f64>,
    pub median_row: Vec<f64>,
}

/// Point-forecast scores: per-series grids plus level tables.
#[derive(Debug, Clone, PartialEq)]
pub struct PointScores {
    /// `[series][h-1]` grids underlying the level tables.
    pub per_series_mfe: Vec<Vec<f64>>,
    pub per_series_mafe: Vec<Vec<f64>>,
    pub per_series_rmsfe: Vec<Vec<f64>>,
    pub mfe: ScoreTable,
    pub mafe: ScoreTable,
    pub rmsfe: ScoreTable,
}

/// Interval scores in the same shape as [`PointScores`].
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalScores {
    pub per_series: Vec<Vec<f64>>,
    pub table: ScoreTable,
}

fn nan_mean<I: IntoIterator<Item = f64>>(vals: I) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for v in vals {
        if v.is_finite() {
            sum += v;
            count += 1;
        }
    }
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

fn nan_median(vals: &[f64]) -> f64 {
    let mut finite: Vec<f64> = vals.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return f64::NAN;
    }
    finite.sort_by(|a, b| a.partial_cmp(b).unwrap());
    stats::quantile_type7(&finite, 0.5)
}

fn level_table(
    metric: Metric,
    per_series: &[Vec<f64>],
    hierarchy: &GroupedHierarchy,
    horizon: usize,
) -> ScoreTable {
    let n_levels = hierarchy.level_names().len();
    let values: Vec<Vec<f64>> = (0..n_levels)
        .map(|level| {
            (0..horizon)
                .map(|h| {
                    nan_mean(
                        (0..hierarchy.m())
                            .filter(|&j| hierarchy.level_of(j) == level)
                            .map(|j| per_series[j][h]),
                    )
                })
                .collect()
        })
        .collect();
    let mean_row = values.iter().map(|row| nan_mean(row.iter().copied())).collect();
    let median_row = values.iter().map(|row| nan_median(row)).collect();
    ScoreTable {
        metric,
        level_names: hierarchy.level_names().to_vec(),
        values,
        mean_row,
        median_row,
    }
}

fn check_grid(
    grid: &CellGrid,
    plan: &RollingPlan,
    m: usize,
    what: &'static str,
) -> Result<(), EvaluateError> {
    let horizon = plan.horizon();
    if grid.len() != horizon {
        return Err(EvaluateError::GridShape { what });
    }
    for (i, per_series) in grid.iter().enumerate() {
        if per_series.len() != m {
            return Err(EvaluateError::GridShape { what });
        }
        if per_series.iter().any(|cells| cells.len() != horizon - i) {
            return Err(EvaluateError::GridShape { what });
        }
    }
    Ok(())
}

/// Extracts the realized rates for every plan cell from the full panel.
pub fn holdout_grid(panel: &PanelSeries, plan: &RollingPlan) -> CellGrid {
    let m = panel.m();
    plan.origins()
        .map(|origin| {
            (0..m)
                .map(|j| {
                    let series = panel.rate_series(j);
                    (0..plan.end_index() - origin).map(|step| series[origin + step]).collect()
                })
                .collect()
        })
        .collect()
}

/// Scores point forecasts against holdout values. Errors are taken as
/// actual minus forecast, averaged per series and step length over every
/// origin that reaches that step; cells lost to fit failures (NaN) are
/// excluded from their series' average.
pub fn point_scores(
    forecasts: &CellGrid,
    holdout: &CellGrid,
    plan: &RollingPlan,
    hierarchy: &GroupedHierarchy,
) -> Result<PointScores, EvaluateError> {
    let m = hierarchy.m();
    check_grid(forecasts, plan, m, "forecast")?;
    check_grid(holdout, plan, m, "holdout")?;
    let horizon = plan.horizon();

    let mut per_series_mfe = vec![vec![f64::NAN; horizon]; m];
    let mut per_series_mafe = vec![vec![f64::NAN; horizon]; m];
    let mut per_series_rmsfe = vec![vec![f64::NAN; horizon]; m];
    for j in 0..m {
        for h in 0..horizon {
            let mut sum = 0.0;
            let mut sum_abs = 0.0;
            let mut sum_sq = 0.0;
            let mut count = 0usize;
            for i in 0..forecasts.len() {
                if h >= horizon - i {
                    break;
                }
                let f = forecasts[i][j][h];
                let y = holdout[i][j][h];
                if f.is_finite() && y.is_finite() {
                    let e = y - f;
                    sum += e;
                    sum_abs += e.abs();
                    sum_sq += e * e;
                    count += 1;
                }
            }
            if count > 0 {
                let c = count as f64;
                per_series_mfe[j][h] = sum / c;
                per_series_mafe[j][h] = sum_abs / c;
                per_series_rmsfe[j][h] = (sum_sq / c).sqrt();
            }
        }
    }

    Ok(PointScores {
        mfe: level_table(Metric::Mfe, &per_series_mfe, hierarchy, horizon),
        mafe: level_table(Metric::Mafe, &per_series_mafe, hierarchy, horizon),
        rmsfe: level_table(Metric::Rmsfe, &per_series_rmsfe, hierarchy, horizon),
        per_series_mfe,
        per_series_mafe,
        per_series_rmsfe,
    })
}

/// The interval score at miscoverage alpha: the interval width plus 2/alpha
/// times the distance by which the realization escapes the interval.
pub fn interval_score(lower: f64, upper: f64, y: f64, alpha: f64) -> Result<f64, EvaluateError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(EvaluateError::InvalidAlpha { alpha });
    }
    if !(lower.is_finite() && upper.is_finite() && y.is_finite()) {
        return Err(EvaluateError::NonFiniteScore);
    }
    if lower > upper {
        return Err(EvaluateError::IntervalOrder { lower, upper });
    }
    let mut score = upper - lower;
    if y < lower {
        score += 2.0 / alpha * (lower - y);
    }
    if y > upper {
        score += 2.0 / alpha * (y - upper);
    }
    Ok(score)
}

/// Averages interval scores over origins per series and step length, then
/// aggregates to level tables like [`point_scores`].
pub fn mean_interval_scores(
    intervals: &IntervalGrid,
    holdout: &CellGrid,
    plan: &RollingPlan,
    hierarchy: &GroupedHierarchy,
    alpha: f64,
) -> Result<IntervalScores, EvaluateError> {
    let m = hierarchy.m();
    check_grid(&intervals.lower, plan, m, "interval lower")?;
    check_grid(&intervals.upper, plan, m, "interval upper")?;
    check_grid(holdout, plan, m, "holdout")?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(EvaluateError::InvalidAlpha { alpha });
    }
    let horizon = plan.horizon();

    let mut per_series = vec![vec![f64::NAN; horizon]; m];
    for j in 0..m {
        for h in 0..horizon {
            let mut sum = 0.0;
            let mut count = 0usize;
            for (i, holdout_origin) in holdout.iter().enumerate() {
                if h >= horizon - i {
                    break;
                }
                let (lo, hi) = (intervals.lower[i][j][h], intervals.upper[i][j][h]);
                let y = holdout_origin[j][h];
                if lo.is_finite() && hi.is_finite() && y.is_finite() {
                    sum += interval_score(lo, hi, y, alpha)?;
                    count += 1;
                }
            }
            if count > 0 {
                per_series[j][h] = sum / count as f64;
            }
        }
    }

    Ok(IntervalScores {
        table: level_table(Metric::IntervalScore, &per_series, hierarchy, horizon),
        per_series,
    })
}

/// Interval evaluation settings inside a rolling run.
#[derive(Debug, Clone)]
pub struct IntervalSettings {
    pub alpha: f64,
    pub b_replicates: usize,
    pub p_paths: usize,
    pub exposure_mode: ExposureMode,
}

#[derive(Debug, Clone)]
pub struct RollingConfig {
    pub methods: Vec<Method>,
    /// Where future summing matrices get exposures: forecast them (the
    /// operational setting) or read the realized holdout values.
    pub s_mode: SProvenance,
    /// Scale for the per-series rate models. Raw is the default; negative
    /// forecast means are possible there and are reported, never clipped.
    pub rate_scale: RateScale,
    pub bounds: OrderBounds,
    pub seed: u64,
    /// When set, averaged prediction intervals are produced and scored per
    /// origin for every requested method except GLS.
    pub intervals: Option<IntervalSettings>,
}

#[derive(Debug, Clone)]
pub struct RollingOutput {
    pub origins: Vec<usize>,
    pub horizon: usize,
    pub holdout: CellGrid,
    pub point_grids: BTreeMap<Method, CellGrid>,
    pub point_scores: BTreeMap<Method, PointScores>,
    pub interval_grids: BTreeMap<Method, IntervalGrid>,
    pub interval_scores: BTreeMap<Method, IntervalScores>,
    /// Checksum of the base forecasts across all cells; identical inputs
    /// and seed give identical hashes regardless of s_mode, making the
    /// forecast-S vs holdout-S comparison auditable.
    pub base_forecast_hash: u64,
    pub warnings: Vec<String>,
}

fn fnv1a64<I: IntoIterator<Item = u64>>(words: I) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for word in words {
        for byte in word.to_le_bytes() {
            hash ^= byte as u64;
            hash = hash.wrapping_mul(0x100000001b3);
        }
    }
    hash
}

fn cell_bits(v: f64) -> u64 {
    if v.is_finite() {
        v.to_bits()
    } else {
        u64::MAX
    }
}

fn origin_seed(seed: u64, origin_index: usize) -> u64 {
    seed ^ (origin_index as u64 + 1).wrapping_mul(0x9E3779B97F4A7C15)
}

/// One origin's forecast cells, indexed `[series][step]`.
type SeriesCells = Vec<Vec<f64>>;

struct OriginResult {
    base_cells: SeriesCells,
    /// Aligned with the requested method list.
    method_cells: Vec<SeriesCells>,
    /// Aligned with the interval method list: (lower, upper) per series.
    interval_cells: Vec<(SeriesCells, SeriesCells)>,
    warnings: Vec<String>,
}

/// Fits one rate series on the configured scale; returns forecast means and
/// the one-step variance used for GLS weighting. Log-scale variances come
/// back through the first-order delta method so the weights keep raw-scale
/// units.
fn fit_rate_forecast(
    rates: &[f64],
    config: &RollingConfig,
    steps: usize,
) -> Result<(Vec<f64>, f64), ArimaError> {
    match config.rate_scale {
        RateScale::Raw => {
            let model =
                auto_fit_with(rates, &config.bounds, InterceptPolicy::DifferenceFreeOnly)?;
            let fc = forecast(&model, steps);
            Ok((fc.means, fc.one_step_variance))
        }
        RateScale::Log => {
            for (index, &value) in rates.iter().enumerate() {
                if !value.is_finite() || value <= 0.0 {
                    return Err(ArimaError::NonpositiveRate { index, value });
                }
            }
            let logs: Vec<f64> = rates.iter().map(|r| r.ln()).collect();
            let model =
                auto_fit_with(&logs, &config.bounds, InterceptPolicy::DifferenceFreeOnly)?;
            let fc = forecast(&model, steps);
            let means: Vec<f64> = fc.means.iter().map(|m| m.exp()).collect();
            let variance = (2.0 * fc.means[0]).exp() * fc.one_step_variance;
            Ok((means, variance))
        }
    }
}

/// Deduplicates the requested methods and derives the interval method list
/// (GLS intervals are unsupported and dropped with a warning).
fn effective_methods(config: &RollingConfig) -> (Vec<Method>, Vec<Method>, Vec<String>) {
    let mut methods: Vec<Method> = Vec::new();
    for &m in &config.methods {
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    let mut warnings = Vec::new();
    let interval_methods: Vec<Method> = if config.intervals.is_some() {
        let kept: Vec<Method> = methods.iter().copied().filter(|&m| m != Method::Gls).collect();
        if kept.len() < methods.len() {
            warnings
                .push("interval forecasts are not produced for gls; method skipped".to_string());
        }
        if config.rate_scale == RateScale::Log {
            warnings.push(
                "bootstrap intervals always model rates on the raw scale; log-scale point \
                 forecasts may sit off the interval centers"
                    .to_string(),
            );
        }
        kept
    } else {
        Vec::new()
    };
    (methods, interval_methods, warnings)
}

fn count_negative_cells<'a, I: IntoIterator<Item = &'a f64>>(cells: I) -> (usize, f64) {
    let mut count = 0usize;
    let mut min_cell = f64::INFINITY;
    for &v in cells {
        if v.is_finite() && v < 0.0 {
            count += 1;
            if v < min_cell {
                min_cell = v;
            }
        }
    }
    (count, min_cell)
}

#[allow(clippy::too_many_arguments)]
fn run_origin(
    panel: &PanelSeries,
    plan: &RollingPlan,
    config: &RollingConfig,
    methods: &[Method],
    interval_methods: &[Method],
    origin_index: usize,
    origin: usize,
) -> Result<OriginResult, EvaluateError> {
    let hierarchy = panel.hierarchy();
    let m = hierarchy.m();
    let steps = plan.end_index() - origin;
    let train = panel.restrict_prefix(origin);
    let mut warnings = Vec::new();

    let mut base_cells = vec![vec![f64::NAN; steps]; m];
    let mut variances = vec![f64::NAN; m];
    let mut failed = 0usize;
    for j in 0..m {
        match fit_rate_forecast(train.rate_series(j), config, steps) {
            Ok((means, variance)) => {
                base_cells[j] = means;
                variances[j] = variance;
            }
            Err(e) => {
                failed += 1;
                warnings.push(format!(
                    "origin {origin}: series {} unfittable: {e}",
                    hierarchy.key(j).label()
                ));
            }
        }
    }
    if failed * 5 > m {
        return Err(EvaluateError::TooManyFailures { origin, failed, total: m });
    }

    let s_mats: Vec<SummingMatrix> = match config.s_mode {
        SProvenance::HoldoutExposures => (0..steps)
            .map(|step| {
                summing_matrix_rates(
                    hierarchy,
                    &panel.bottom_exposures_at(origin + step),
                    panel.years()[origin + step],
                )
            })
            .collect::<Result<_, _>>()?,
        SProvenance::ForecastExposures => {
            let last_train_year = panel.years()[origin - 1];
            let expo_points: Vec<Vec<f64>> = (0..hierarchy.m_k())
                .map(|k| {
                    let node = hierarchy.bottom_start() + k;
                    fit_forecast_log_exposure(
                        train.exposure_series(node),
                        steps,
                        &config.bounds,
                    )
                    .map(|fit| fit.point)
                    .map_err(|e| EvaluateError::ExposureModel {
                        origin,
                        label: hierarchy.key(node).label(),
                        source: e,
                    })
                })
                .collect::<Result<_, _>>()?;
            (0..steps)
                .map(|step| {
                    let expo: Vec<f64> =
                        (0..hierarchy.m_k()).map(|k| expo_points[k][step]).collect();
                    summing_matrix_rates(hierarchy, &expo, last_train_year + step as i64 + 1)
                })
                .collect::<Result<_, _>>()?
        }
    };

    let reconciled_input = if failed == 0 {
        Some(BaseForecasts {
            horizons: (0..steps)
                .map(|step| DVector::from_fn(m, |j, _| base_cells[j][step]))
                .collect(),
            one_step_variances: variances.clone(),
        })
    } else {
        // Any missing series poisons the combination; drop the origin for
        // every revising method but keep the surviving base cells.
        warnings.push(format!(
            "origin {origin}: {failed} series unfittable, reconciled methods skipped here"
        ));
        None
    };

    let mut method_cells = Vec::with_capacity(methods.len());
    for &method in methods {
        let cells: Vec<Vec<f64>> = match (&reconciled_input, method) {
            (_, Method::Base) => base_cells.clone(),
            (None, _) => vec![vec![f64::NAN; steps]; m],
            (Some(bf), Method::BottomUp) => {
                revised_to_cells(&bottom_up(bf, &s_mats, config.s_mode)?.revised, m, steps)
            }
            (Some(bf), Method::Ols) => {
                revised_to_cells(&ols_combine(bf, &s_mats, config.s_mode)?.revised, m, steps)
            }
            (Some(bf), Method::Gls) => {
                let weights = inverse_variance_weights(&bf.one_step_variances)?;
                revised_to_cells(
                    &gls_combine(bf, &s_mats, &weights, config.s_mode)?.revised,
                    m,
                    steps,
                )
            }
        };
        method_cells.push(cells);
    }

    let mut interval_cells = Vec::new();
    if let Some(settings) = &config.intervals {
        if !interval_methods.is_empty() {
            let opts = IntervalOptions {
                alpha: settings.alpha,
                b_replicates: settings.b_replicates,
                p_paths: settings.p_paths,
                seed: origin_seed(config.seed, origin_index),
                bounds: config.bounds,
                exposure_mode: settings.exposure_mode,
            };
            let outputs = interval_forecasts_multi(&train, steps, interval_methods, &opts)?;
            if let Some(first) = outputs.first() {
                for w in &first.warnings {
                    warnings.push(format!("origin {origin}: {w}"));
                }
            }
            for out in outputs {
                interval_cells.push((out.lower, out.upper));
            }
        }
    }

    Ok(OriginResult { base_cells, method_cells, interval_cells, warnings })
}

fn revised_to_cells(revised: &[DVector<f64>], m: usize, steps: usize) -> Vec<Vec<f64>> {
    let mut cells = vec![vec![f64::NAN; steps]; m];
    for (step, vec_h) in revised.iter().enumerate() {
        for j in 0..m {
            cells[j][step] = vec_h[j];
        }
    }
    cells
}

/// Runs the full expanding-window evaluation: refit, forecast, revise, and
/// score every requested method, optionally with bootstrap intervals.
/// Origins run in parallel; results are reduced in origin order, so output
/// is independent of thread count.
pub fn run_rolling(
    panel: &PanelSeries,
    plan: &RollingPlan,
    config: &RollingConfig,
) -> Result<RollingOutput, EvaluateError> {
    if plan.end_index() > panel.n() {
        return Err(EvaluateError::PlanExceedsData { n_end: plan.end_index(), n: panel.n() });
    }
    if config.methods.is_empty() {
        return Err(EvaluateError::NoMethods);
    }
    let (methods, interval_methods, top_warnings) = effective_methods(config);

    let hierarchy = panel.hierarchy();
    let origins: Vec<usize> = plan.origins().collect();
    let results: Vec<Result<OriginResult, EvaluateError>> = origins
        .par_iter()
        .enumerate()
        .map(|(i, &origin)| {
            run_origin(panel, plan, config, &methods, &interval_methods, i, origin)
        })
        .collect();

    let mut per_origin = Vec::with_capacity(results.len());
    for result in results {
        per_origin.push(result?);
    }

    let mut warnings = top_warnings;
    let mut base_grid: CellGrid = Vec::with_capacity(per_origin.len());
    let mut point_grids: BTreeMap<Method, CellGrid> =
        methods.iter().map(|&m| (m, Vec::with_capacity(per_origin.len()))).collect();
    let mut interval_grids: BTreeMap<Method, IntervalGrid> = interval_methods
        .iter()
        .map(|&m| (m, IntervalGrid { lower: Vec::new(), upper: Vec::new() }))
        .collect();
    for origin_result in per_origin {
        warnings.extend(origin_result.warnings);
        base_grid.push(origin_result.base_cells);
        for (&method, cells) in methods.iter().zip(origin_result.method_cells) {
            point_grids.get_mut(&method).expect("grid per method").push(cells);
        }
        for (&method, (lo, hi)) in interval_methods.iter().zip(origin_result.interval_cells) {
            let grid = interval_grids.get_mut(&method).expect("grid per interval method");
            grid.lower.push(lo);
            grid.upper.push(hi);
        }
    }

    let base_forecast_hash = fnv1a64(
        base_grid
            .iter()
            .flat_map(|per_series| per_series.iter())
            .flat_map(|cells| cells.iter())
            .map(|&v| cell_bits(v)),
    );

    let (negative, min_cell) = count_negative_cells(
        point_grids
            .values()
            .flat_map(|grid| grid.iter())
            .flat_map(|per_series| per_series.iter())
            .flat_map(|cells| cells.iter()),
    );
    if negative > 0 {
        warnings.push(format!(
            "{negative} negative rate point forecasts emitted (minimum {min_cell:.6e}); \
             values are reported unclipped"
        ));
    }

    let holdout = holdout_grid(panel, plan);
    let mut point_score_map = BTreeMap::new();
    for (&method, grid) in &point_grids {
        point_score_map.insert(method, point_scores(grid, &holdout, plan, hierarchy)?);
    }
    let mut interval_score_map = BTreeMap::new();
    if let Some(settings) = &config.intervals {
        for (&method, grid) in &interval_grids {
            interval_score_map.insert(
                method,
                mean_interval_scores(grid, &holdout, plan, hierarchy, settings.alpha)?,
            );
        }
    }

    Ok(RollingOutput {
        origins,
        horizon: plan.horizon(),
        holdout,
        point_grids,
        point_scores: point_score_map,
        interval_grids,
        interval_scores: interval_score_map,
        base_forecast_hash,
        warnings,
    })
}

/// Interval bounds for one method, `[node][h-1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalBand {
    pub lower: Vec<Vec<f64>>,
    pub upper: Vec<Vec<f64>>,
}

/// Forecasts from the full panel: point forecasts per method over the next
/// `horizon` years, plus averaged bootstrap intervals when configured.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelForecasts {
    /// Future years, `last observed + 1 ..= last observed + horizon`.
    pub years: Vec<i64>,
    /// `points[method][node][h-1]`.
    pub points: BTreeMap<Method, Vec<Vec<f64>>>,
    pub intervals: BTreeMap<Method, IntervalBand>,
    pub warnings: Vec<String>,
}

/// Fits every series on the whole panel and forecasts `horizon` steps with
/// each requested method. Future summing matrices always come from forecast
/// exposures since no realized values exist past the data; `config.s_mode`
/// is ignored here.
pub fn panel_forecasts(
    panel: &PanelSeries,
    horizon: usize,
    config: &RollingConfig,
) -> Result<PanelForecasts, EvaluateError> {
    if horizon == 0 {
        return Err(EvaluateError::ZeroHorizon);
    }
    if panel.n() == 0 {
        return Err(EvaluateError::PlanExceedsData { n_end: horizon, n: 0 });
    }
    if config.methods.is_empty() {
        return Err(EvaluateError::NoMethods);
    }
    let (methods, interval_methods, mut warnings) = effective_methods(config);
    let mut fc_config = config.clone();
    fc_config.s_mode = SProvenance::ForecastExposures;
    let plan = RollingPlan { n0: panel.n(), n_end: panel.n() + horizon };
    let result =
        run_origin(panel, &plan, &fc_config, &methods, &interval_methods, 0, panel.n())?;
    warnings.extend(result.warnings);

    let last_year = *panel.years().last().expect("nonempty panel");
    let years: Vec<i64> = (1..=horizon as i64).map(|h| last_year + h).collect();
    let mut points = BTreeMap::new();
    for (&method, cells) in methods.iter().zip(result.method_cells) {
        points.insert(method, cells);
    }
    let mut intervals = BTreeMap::new();
    for (&method, (lower, upper)) in interval_methods.iter().zip(result.interval_cells) {
        intervals.insert(method, IntervalBand { lower, upper });
    }

    let (negative, min_cell) = count_negative_cells(
        points.values().flat_map(|cells| cells.iter()).flat_map(|row| row.iter()),
    );
    if negative > 0 {
        warnings.push(format!(
            "{negative} negative rate point forecasts emitted (minimum {min_cell:.6e}); \
             values are reported unclipped"
        ));
    }

    Ok(PanelForecasts { years, points, intervals, warnings })
}
