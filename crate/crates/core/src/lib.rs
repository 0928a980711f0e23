//! Grouped time-series forecasting engine for demographic rates.
//!
//! The pipeline has five stages:
//!
//! 1. [`hierarchy`] represents a grouped hierarchy (one or two crossing
//!    attributes plus marginal totals), holds time-aligned panels of death
//!    counts, exposures, and rates, and builds summing matrices whose
//!    aggregation rows carry exposure ratios.
//! 2. [`arima`] fits automatic univariate ARIMA models: KPSS-driven
//!    differencing, exhaustive AICc order search, exact Gaussian likelihood
//!    through a state-space innovations filter, point/variance forecasts, and
//!    seeded future-path simulation.
//! 3. [`reconcile`] turns base forecasts into coherent forecasts by
//!    bottom-up aggregation or by (weighted) least-squares projection onto
//!    the column space of the summing matrix.
//! 4. [`bootstrap`] resamples the observed panel with a maximum-entropy
//!    bootstrap, nests a parametric bootstrap of future paths inside it, and
//!    averages per-replicate quantiles into prediction intervals.
//! 5. [`evaluate`] scores point forecasts (MFE/MAFE/RMSFE) and prediction
//!    intervals (interval score) under a rolling-origin protocol.
//!
//! All randomness is driven by caller-supplied seeds through ChaCha8 streams;
//! parallel sections reduce in a fixed order, so every public entry point is
//! deterministic given its inputs.

pub mod arima;
pub mod bootstrap;
pub mod evaluate;
pub mod hierarchy;
pub mod reconcile;
pub(crate) mod stats;
