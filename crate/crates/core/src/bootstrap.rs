//! Maximum entropy bootstrap and averaged prediction intervals.
//!
//! The resampling scheme follows the classic maximum-entropy construction:
//! sort the series, build a piecewise-uniform density whose pieces sit
//! between midpoints of adjacent order statistics (with trimmed-mean tails),
//! draw from its quantile function, and restore the original rank order.
//! Replicates therefore share the source series' ranks and approximately
//! its mean, while never straying outside the entropy limits.
//!
//! Prediction intervals nest two loops: an outer loop of panel replicates,
//! each refitted from scratch, and an inner loop of parametric sample paths
//! simulated from the refitted models and revised into coherent paths. The
//! interval is the average over replicates of the per-replicate path
//! quantiles.

use crate::arima::{
    auto_fit_with, fit_forecast_log_exposure, simulate_paths_with, ArimaError, ArimaModel,
    ExposureForecast, InterceptPolicy, OrderBounds,
};
use crate::hierarchy::{summing_matrix_rates, HierarchyError, PanelSeries, SummingMatrix};
use crate::reconcile::{bottom_up, ols_combine, BaseForecasts, Method, SProvenance};
use crate::stats;
use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BootstrapError {
    #[error("series too short for the maximum entropy bootstrap: n = {n}, need at least 4")]
    TooShort { n: usize },
    #[error("series contains non-finite values")]
    NonFiniteInput,
    #[error("panel series have unequal lengths: {first} and {other}")]
    MisalignedPanel { first: usize, other: usize },
    #[error("empty panel")]
    EmptyPanel,
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("interval level alpha must lie strictly between 0 and 1, got {alpha}")]
    InvalidAlpha { alpha: f64 },
    #[error("need at least 2 outer replicates and 2 inner paths, got B = {b}, P = {p}")]
    TooFewReplicates { b: usize, p: usize },
    #[error("interval forecasts are not available for method {method}; use base, bottom-up, or ols")]
    UnsupportedMethod { method: Method },
    #[error("exposure model failed for bottom series {label}: {source}")]
    ExposureModel { label: String, source: ArimaError },
    #[error("{skipped} of {total} bootstrap replicates were unfittable, more than the 20% budget")]
    TooManyReplicatesFailed { skipped: usize, total: usize },
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
}

/// One maximum-entropy resample of a single series.
#[derive(Debug, Clone, PartialEq)]
pub struct MeBootReplicate {
    /// Resampled values in original time order, same length as the input.
    pub series: Vec<f64>,
    /// Sorting permutation of the input: `ordering[k]` is the time index
    /// holding the k-th smallest value. The replicate reuses it, so ranks
    /// are preserved exactly.
    pub ordering: Vec<usize>,
}

/// Desired mean of each piece of the maximum-entropy density, from sorted
/// order statistics: 0.75/0.25 blends at the ends, 0.25/0.5/0.25 inside.
pub fn interval_means(sorted: &[f64]) -> Vec<f64> {
    let n = sorted.len();
    assert!(n >= 2, "need at least two order statistics");
    (0..n)
        .map(|k| {
            if k == 0 {
                0.75 * sorted[0] + 0.25 * sorted[1]
            } else if k == n - 1 {
                0.25 * sorted[n - 2] + 0.75 * sorted[n - 1]
            } else {
                0.25 * sorted[k - 1] + 0.5 * sorted[k] + 0.25 * sorted[k + 1]
            }
        })
        .collect()
}

/// 10% symmetrically trimmed mean of the absolute successive differences of
/// the series in time order; sets how far the density's tails extend past
/// the extreme order statistics.
fn trimmed_mean_deviation(x: &[f64]) -> f64 {
    let mut dev: Vec<f64> = x.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    dev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let cut = dev.len() / 10;
    let kept = &dev[cut..dev.len() - cut];
    stats::mean(kept)
}

fn check_series(x: &[f64]) -> Result<(), BootstrapError> {
    if x.len() < 4 {
        return Err(BootstrapError::TooShort { n: x.len() });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(BootstrapError::NonFiniteInput);
    }
    Ok(())
}

/// Maps uniform draws through one series' maximum-entropy quantile function
/// and restores the original rank order.
fn meboot_from_draws(x: &[f64], draws: &[f64]) -> MeBootReplicate {
    let n = x.len();
    let ordering = stats::argsort_stable(x);
    let sorted: Vec<f64> = ordering.iter().map(|&i| x[i]).collect();
    if sorted[0] == sorted[n - 1] {
        // Degenerate constant series: the density collapses to a point.
        return MeBootReplicate { series: x.to_vec(), ordering };
    }

    let m_trim = trimmed_mean_deviation(x);
    // Knots: z[0] and z[n] extend the range by the trimmed mean deviation;
    // interior knots are midpoints of adjacent order statistics.
    let mut z = Vec::with_capacity(n + 1);
    z.push(sorted[0] - m_trim);
    for k in 0..n - 1 {
        z.push(0.5 * (sorted[k] + sorted[k + 1]));
    }
    z.push(sorted[n - 1] + m_trim);

    // Each piece k carries probability 1/n and is uniform on [z[k], z[k+1]]
    // shifted so its mean matches the desired interval mean. The interior
    // shifts vanish identically; only the two tail pieces move, by half the
    // trimmed mean deviation, which keeps every draw inside [z[0], z[n]]
    // and the expected replicate mean equal to the sample mean.
    let mut quantiles: Vec<f64> = draws
        .iter()
        .map(|&u| {
            let scaled = u * n as f64;
            let k = (scaled.floor() as usize).min(n - 1);
            let frac = scaled - k as f64;
            let shift = if k == 0 {
                0.5 * m_trim
            } else if k == n - 1 {
                -0.5 * m_trim
            } else {
                0.0
            };
            z[k] + frac * (z[k + 1] - z[k]) + shift
        })
        .collect();
    quantiles.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut series = vec![0.0; n];
    for (k, &time) in ordering.iter().enumerate() {
        series[time] = quantiles[k];
    }
    MeBootReplicate { series, ordering }
}

/// One maximum-entropy replicate of a single series.
pub fn meboot_replicate<R: Rng + ?Sized>(
    x: &[f64],
    rng: &mut R,
) -> Result<MeBootReplicate, BootstrapError> {
    check_series(x)?;
    let draws: Vec<f64> = (0..x.len()).map(|_| rng.random::<f64>()).collect();
    Ok(meboot_from_draws(x, &draws))
}

/// Replicates every series of an aligned panel using one shared vector of
/// uniform draws, so co-movement across series is carried into the
/// replicate; each series keeps its own ordering index.
pub fn meboot_panel<R: Rng + ?Sized>(
    panel: &[&[f64]],
    rng: &mut R,
) -> Result<Vec<MeBootReplicate>, BootstrapError> {
    let first = panel.first().ok_or(BootstrapError::EmptyPanel)?.len();
    for x in panel {
        if x.len() != first {
            return Err(BootstrapError::MisalignedPanel { first, other: x.len() });
        }
        check_series(x)?;
    }
    let draws: Vec<f64> = (0..first).map(|_| rng.random::<f64>()).collect();
    Ok(panel.iter().map(|x| meboot_from_draws(x, &draws)).collect())
}

/// How future summing matrices obtain bottom-level exposures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExposureMode {
    /// Exposure paths simulated from the log-scale exposure models, one per
    /// inner path; propagates exposure uncertainty into the intervals.
    #[default]
    Simulated,
    /// Every path uses the exposure models' point forecasts.
    FixedForecast,
}

#[derive(Debug, Clone)]
pub struct IntervalOptions {
    /// Miscoverage level; intervals are at level 1 - alpha.
    pub alpha: f64,
    /// Outer maximum-entropy replicates (B).
    pub b_replicates: usize,
    /// Inner parametric sample paths per replicate (P).
    pub p_paths: usize,
    pub seed: u64,
    pub bounds: OrderBounds,
    pub exposure_mode: ExposureMode,
}

impl Default for IntervalOptions {
    fn default() -> Self {
        IntervalOptions {
            alpha: 0.2,
            b_replicates: 100,
            p_paths: 100,
            seed: 0,
            bounds: OrderBounds::default(),
            exposure_mode: ExposureMode::Simulated,
        }
    }
}

/// Averaged prediction intervals for every series and horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalForecasts {
    pub method: Method,
    pub alpha: f64,
    /// Replicates requested (B).
    pub b_requested: usize,
    /// Replicates that produced intervals; skipped ones are reported in
    /// `warnings`.
    pub b_used: usize,
    pub p_paths: usize,
    /// `lower[j][h]`: lower bound for series j at step h+1.
    pub lower: Vec<Vec<f64>>,
    pub upper: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

/// Per-replicate path quantiles: `[method][series][horizon] -> (lo, hi)`.
type ReplicateQuantiles = Vec<Vec<Vec<(f64, f64)>>>;

struct PanelContext<'a> {
    panel: &'a PanelSeries,
    rates: Vec<&'a [f64]>,
    exposure_fits: Vec<ExposureForecast>,
    horizon: usize,
    last_year: i64,
}

fn replicate_quantiles(
    ctx: &PanelContext,
    methods: &[Method],
    opts: &IntervalOptions,
    rep: usize,
) -> Result<ReplicateQuantiles, String> {
    let hierarchy = ctx.panel.hierarchy();
    let m = hierarchy.m();
    let m_k = hierarchy.m_k();
    let horizon = ctx.horizon;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(rep as u64));

    let replicate = meboot_panel(&ctx.rates, &mut rng)
        .map_err(|e| format!("replicate {rep}: {e}"))?;

    let mut models: Vec<ArimaModel> = Vec::with_capacity(m);
    for (j, r) in replicate.iter().enumerate() {
        match auto_fit_with(&r.series, &opts.bounds, InterceptPolicy::DifferenceFreeOnly) {
            Ok(model) => models.push(model),
            Err(e) => {
                return Err(format!(
                    "replicate {rep}: series {} unfittable: {e}",
                    hierarchy.key(j).label()
                ))
            }
        }
    }

    // Rate paths for every node, then exposure paths for the bottom nodes,
    // always in this order so the random stream does not depend on the
    // method list.
    let rate_paths: Vec<Vec<Vec<f64>>> = models
        .iter()
        .map(|model| simulate_paths_with(model, horizon, opts.p_paths, &mut rng))
        .collect();
    let expo_paths: Vec<Vec<Vec<f64>>> = ctx
        .exposure_fits
        .iter()
        .map(|fit| match opts.exposure_mode {
            ExposureMode::Simulated => {
                simulate_paths_with(&fit.model, horizon, opts.p_paths, &mut rng)
                    .into_iter()
                    .map(|path| path.into_iter().map(f64::exp).collect())
                    .collect()
            }
            ExposureMode::FixedForecast => vec![fit.point.clone(); opts.p_paths],
        })
        .collect();

    let mut samples: Vec<Vec<Vec<Vec<f64>>>> =
        vec![vec![vec![Vec::with_capacity(opts.p_paths); horizon]; m]; methods.len()];
    for path in 0..opts.p_paths {
        let s_mats: Vec<SummingMatrix> = (1..=horizon)
            .map(|step| {
                let expo: Vec<f64> = (0..m_k).map(|k| expo_paths[k][path][step - 1]).collect();
                summing_matrix_rates(hierarchy, &expo, ctx.last_year + step as i64)
            })
            .collect::<Result<_, _>>()
            .map_err(|e| format!("replicate {rep}: exposure path {path}: {e}"))?;
        let base = BaseForecasts {
            horizons: (0..horizon)
                .map(|step| DVector::from_fn(m, |j, _| rate_paths[j][path][step]))
                .collect(),
            one_step_variances: vec![1.0; m],
        };
        for (mi, &method) in methods.iter().enumerate() {
            let revised = match method {
                Method::Base => base.horizons.clone(),
                Method::BottomUp => {
                    bottom_up(&base, &s_mats, SProvenance::ForecastExposures)
                        .map_err(|e| format!("replicate {rep}: {e}"))?
                        .revised
                }
                Method::Ols => {
                    ols_combine(&base, &s_mats, SProvenance::ForecastExposures)
                        .map_err(|e| format!("replicate {rep}: {e}"))?
                        .revised
                }
                Method::Gls => unreachable!("rejected before replication"),
            };
            for (step, vec_h) in revised.iter().enumerate() {
                for j in 0..m {
                    samples[mi][j][step].push(vec_h[j]);
                }
            }
        }
    }

    let lo_p = opts.alpha / 2.0;
    let hi_p = 1.0 - opts.alpha / 2.0;
    Ok(samples
        .into_iter()
        .map(|per_node| {
            per_node
                .into_iter()
                .map(|per_h| {
                    per_h
                        .into_iter()
                        .map(|mut vals| {
                            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
                            (
                                stats::quantile_type7(&vals, lo_p),
                                stats::quantile_type7(&vals, hi_p),
                            )
                        })
                        .collect()
                })
                .collect()
        })
        .collect())
}

/// Averaged prediction intervals for several methods in one pass, sharing
/// the replicate refits and simulated paths across methods.
pub fn interval_forecasts_multi(
    panel: &PanelSeries,
    horizon: usize,
    methods: &[Method],
    opts: &IntervalOptions,
) -> Result<Vec<IntervalForecasts>, BootstrapError> {
    if horizon == 0 {
        return Err(BootstrapError::ZeroHorizon);
    }
    if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
        return Err(BootstrapError::InvalidAlpha { alpha: opts.alpha });
    }
    if opts.b_replicates < 2 || opts.p_paths < 2 {
        return Err(BootstrapError::TooFewReplicates {
            b: opts.b_replicates,
            p: opts.p_paths,
        });
    }
    if let Some(&method) = methods.iter().find(|&&mth| mth == Method::Gls) {
        return Err(BootstrapError::UnsupportedMethod { method });
    }

    let hierarchy = panel.hierarchy();
    let m = hierarchy.m();
    let exposure_fits = (0..hierarchy.m_k())
        .map(|k| {
            let node = hierarchy.bottom_start() + k;
            fit_forecast_log_exposure(panel.exposure_series(node), horizon, &opts.bounds)
                .map_err(|e| BootstrapError::ExposureModel {
                    label: hierarchy.key(node).label(),
                    source: e,
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let ctx = PanelContext {
        panel,
        rates: (0..m).map(|j| panel.rate_series(j)).collect(),
        exposure_fits,
        horizon,
        last_year: *panel.years().last().expect("nonempty panel"),
    };

    let results: Vec<Result<ReplicateQuantiles, String>> = (0..opts.b_replicates)
        .into_par_iter()
        .map(|rep| replicate_quantiles(&ctx, methods, opts, rep))
        .collect();

    let mut warnings = Vec::new();
    let mut sums_lo = vec![vec![vec![0.0; horizon]; m]; methods.len()];
    let mut sums_hi = vec![vec![vec![0.0; horizon]; m]; methods.len()];
    let mut used = 0usize;
    for result in results {
        match result {
            Ok(q) => {
                used += 1;
                for mi in 0..methods.len() {
                    for j in 0..m {
                        for step in 0..horizon {
                            sums_lo[mi][j][step] += q[mi][j][step].0;
                            sums_hi[mi][j][step] += q[mi][j][step].1;
                        }
                    }
                }
            }
            Err(w) => warnings.push(w),
        }
    }
    let skipped = opts.b_replicates - used;
    if skipped * 5 > opts.b_replicates {
        return Err(BootstrapError::TooManyReplicatesFailed {
            skipped,
            total: opts.b_replicates,
        });
    }

    let scale = 1.0 / used as f64;
    Ok(methods
        .iter()
        .enumerate()
        .map(|(mi, &method)| IntervalForecasts {
            method,
            alpha: opts.alpha,
            b_requested: opts.b_replicates,
            b_used: used,
            p_paths: opts.p_paths,
            lower: sums_lo[mi]
                .iter()
                .map(|per_h| per_h.iter().map(|s| s * scale).collect())
                .collect(),
            upper: sums_hi[mi]
                .iter()
                .map(|per_h| per_h.iter().map(|s| s * scale).collect())
                .collect(),
            warnings: warnings.clone(),
        })
        .collect())
}

/// Averaged prediction intervals for one method; see
/// [`interval_forecasts_multi`].
pub fn interval_forecasts(
    panel: &PanelSeries,
    horizon: usize,
    method: Method,
    opts: &IntervalOptions,
) -> Result<IntervalForecasts, BootstrapError> {
    interval_forecasts_multi(panel, horizon, &[method], opts)
        .map(|mut v| v.pop().expect("one method in, one out"))
}
