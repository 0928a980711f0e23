//! Coherent revision of base forecasts.
//!
//! Base forecasts fitted per series ignore the aggregation structure; these
//! routines replace them with forecasts that satisfy it exactly. Bottom-up
//! trusts the bottom-level forecasts and aggregates them. The combination
//! methods regress the whole base vector onto the column space of the
//! summing matrix, unweighted (OLS) or weighted by inverse one-step
//! residual variances (GLS), and propagate the fitted bottom level.

use crate::hierarchy::SummingMatrix;
use nalgebra::DVector;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReconcileError {
    #[error("base forecast vector has length {found}, summing matrix has {expected} rows")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{base} base forecast vectors but {matrices} summing matrices; need one matrix per horizon")]
    HorizonMismatch { base: usize, matrices: usize },
    #[error("non-finite base forecast for series {index} at horizon {horizon}")]
    NonFiniteBase { index: usize, horizon: usize },
    #[error("{found} weights supplied, need one per series ({expected})")]
    WeightCount { expected: usize, found: usize },
    #[error("weight for series {index} is {value}; weights must be positive and finite")]
    NonpositiveWeight { index: usize, value: f64 },
    #[error("one-step variance for series {index} is {value}; variances must be positive and finite")]
    NonpositiveVariance { index: usize, value: f64 },
    #[error("least-squares solve failed; the summing matrix should have full column rank")]
    SolveFailed,
}

/// Forecasting methods exposed by the engine. `Base` means no revision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Base,
    BottomUp,
    Ols,
    Gls,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Base, Method::BottomUp, Method::Ols, Method::Gls];

    /// Stable identifier used in file names and column headers.
    pub fn label(self) -> &'static str {
        match self {
            Method::Base => "base",
            Method::BottomUp => "bottom_up",
            Method::Ols => "ols",
            Method::Gls => "gls",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "base" => Ok(Method::Base),
            "bottom-up" | "bottom_up" | "bu" => Ok(Method::BottomUp),
            "ols" => Ok(Method::Ols),
            "gls" => Ok(Method::Gls),
            other => Err(format!(
                "unknown method '{other}'; expected base, bottom-up, ols, or gls"
            )),
        }
    }
}

/// Which exposures built the summing matrices used for revision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SProvenance {
    /// Exposures forecast from their own models; the operational setting.
    ForecastExposures,
    /// Realized future exposures; only available in backtests.
    HoldoutExposures,
}

/// Unrevised per-series forecasts, one vector per horizon, in the
/// hierarchy's canonical series order.
#[derive(Debug, Clone)]
pub struct BaseForecasts {
    /// `horizons[h]` is the length-m forecast vector for step h+1.
    pub horizons: Vec<DVector<f64>>,
    /// One-step prediction-error variance per series; feeds the
    /// variance-weighted combination.
    pub one_step_variances: Vec<f64>,
}

/// Coherent forecasts: every vector equals the summing matrix applied to
/// its bottom-level block.
#[derive(Debug, Clone)]
pub struct ReconciledForecasts {
    pub method: Method,
    pub provenance: SProvenance,
    /// `revised[h]` is the length-m coherent vector for step h+1.
    pub revised: Vec<DVector<f64>>,
    /// `bottom[h]` is the length-m_K bottom vector the revision propagates.
    pub bottom: Vec<DVector<f64>>,
}

fn validate(base: &BaseForecasts, s_per_h: &[SummingMatrix]) -> Result<(), ReconcileError> {
    if base.horizons.len() != s_per_h.len() {
        return Err(ReconcileError::HorizonMismatch {
            base: base.horizons.len(),
            matrices: s_per_h.len(),
        });
    }
    for (h, (vec, s)) in base.horizons.iter().zip(s_per_h).enumerate() {
        if vec.len() != s.m() {
            return Err(ReconcileError::DimensionMismatch { expected: s.m(), found: vec.len() });
        }
        if let Some(index) = vec.iter().position(|v| !v.is_finite()) {
            return Err(ReconcileError::NonFiniteBase { index, horizon: h + 1 });
        }
    }
    Ok(())
}

fn propagate(
    method: Method,
    provenance: SProvenance,
    s_per_h: &[SummingMatrix],
    bottoms: Vec<DVector<f64>>,
) -> ReconciledForecasts {
    let revised = s_per_h
        .iter()
        .zip(&bottoms)
        .map(|(s, beta)| &s.matrix * beta)
        .collect();
    ReconciledForecasts { method, provenance, revised, bottom: bottoms }
}

/// Keeps the bottom-level base forecasts and aggregates them upward, so the
/// revised bottom level equals the base bottom level exactly.
pub fn bottom_up(
    base: &BaseForecasts,
    s_per_h: &[SummingMatrix],
    provenance: SProvenance,
) -> Result<ReconciledForecasts, ReconcileError> {
    validate(base, s_per_h)?;
    let bottoms = base
        .horizons
        .iter()
        .zip(s_per_h)
        .map(|(vec, s)| vec.rows(s.m() - s.m_k(), s.m_k()).into_owned())
        .collect();
    Ok(propagate(Method::BottomUp, provenance, s_per_h, bottoms))
}

/// Solves one least-squares problem `min ||D(r - S beta)||` with D the
/// diagonal of square-root weights, by Householder QR. The normal equations
/// are never formed, and the identity bottom block keeps R's diagonal away
/// from zero whenever the weights are positive.
fn solve_ls(
    s: &SummingMatrix,
    r: &DVector<f64>,
    sqrt_w: Option<&[f64]>,
) -> Result<DVector<f64>, ReconcileError> {
    // A one-column design is an exact interpolation of the bottom entry:
    // the identity bottom block pins beta to the base bottom forecast, so
    // every method degenerates to bottom-up.
    if s.m_k() == 1 {
        return Ok(DVector::from_element(1, r[s.m() - 1]));
    }
    let (design, rhs) = match sqrt_w {
        None => (s.matrix.clone(), r.clone()),
        Some(w) => {
            let mut design = s.matrix.clone();
            let mut rhs = r.clone();
            for (i, &wi) in w.iter().enumerate() {
                design.row_mut(i).scale_mut(wi);
                rhs[i] *= wi;
            }
            (design, rhs)
        }
    };
    let qr = design.qr();
    let projected = qr.q().transpose() * rhs;
    let beta = qr
        .r()
        .solve_upper_triangular(&projected)
        .ok_or(ReconcileError::SolveFailed)?;
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(ReconcileError::SolveFailed);
    }
    Ok(beta)
}

/// Unweighted least-squares combination of all base forecasts.
pub fn ols_combine(
    base: &BaseForecasts,
    s_per_h: &[SummingMatrix],
    provenance: SProvenance,
) -> Result<ReconciledForecasts, ReconcileError> {
    validate(base, s_per_h)?;
    let bottoms = base
        .horizons
        .iter()
        .zip(s_per_h)
        .map(|(vec, s)| solve_ls(s, vec, None))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(propagate(Method::Ols, provenance, s_per_h, bottoms))
}

/// Weighted least-squares combination. `weights` holds one positive weight
/// per series, conventionally the inverse one-step residual variances; see
/// [`inverse_variance_weights`].
pub fn gls_combine(
    base: &BaseForecasts,
    s_per_h: &[SummingMatrix],
    weights: &[f64],
    provenance: SProvenance,
) -> Result<ReconciledForecasts, ReconcileError> {
    validate(base, s_per_h)?;
    let m = s_per_h.first().map_or(weights.len(), |s| s.m());
    if weights.len() != m {
        return Err(ReconcileError::WeightCount { expected: m, found: weights.len() });
    }
    if let Some(index) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(ReconcileError::NonpositiveWeight { index, value: weights[index] });
    }
    let sqrt_w: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let bottoms = base
        .horizons
        .iter()
        .zip(s_per_h)
        .map(|(vec, s)| solve_ls(s, vec, Some(&sqrt_w)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(propagate(Method::Gls, provenance, s_per_h, bottoms))
}

/// Turns one-step residual variances into combination weights 1/variance,
/// rejecting any series whose variance is not positive and finite.
pub fn inverse_variance_weights(variances: &[f64]) -> Result<Vec<f64>, ReconcileError> {
    if let Some(index) = variances.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(ReconcileError::NonpositiveVariance { index, value: variances[index] });
    }
    Ok(variances.iter().map(|v| 1.0 / v).collect())
}
