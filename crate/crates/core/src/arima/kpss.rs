//! KPSS level-stationarity test and differencing-order selection.

use super::ArimaError;

/// 5% critical value of the KPSS statistic under the level-stationary null.
pub const KPSS_CRIT_5PCT: f64 = 0.463;

pub(crate) fn difference(x: &[f64], d: usize) -> Vec<f64> {
    let mut z = x.to_vec();
    for _ in 0..d {
        z = z.windows(2).map(|w| w[1] - w[0]).collect();
    }
    z
}

/// KPSS statistic for the level-stationary null.
///
/// Demeans the series, accumulates partial sums S_t, and normalizes by a
/// Bartlett-window long-run variance with lag truncation
/// floor(4 * (n/100)^(1/4)). A series with zero variance returns 0.0, the
/// stationary verdict, since there is nothing to normalize.
pub fn kpss_statistic(x: &[f64]) -> Result<f64, ArimaError> {
    let n = x.len();
    if n < 10 {
        return Err(ArimaError::TooShortForKpss { n, min: 10 });
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let e: Vec<f64> = x.iter().map(|v| v - mean).collect();

    let nf = n as f64;
    let lags = (4.0 * (nf / 100.0).powf(0.25)).floor() as usize;
    let acov = |j: usize| -> f64 {
        (0..n - j).map(|t| e[t] * e[t + j]).sum::<f64>() / nf
    };
    let mut lrv = acov(0);
    for j in 1..=lags.min(n - 1) {
        lrv += 2.0 * (1.0 - j as f64 / (lags as f64 + 1.0)) * acov(j);
    }
    if lrv <= 0.0 {
        return Ok(0.0);
    }

    let mut s = 0.0;
    let mut sum_s2 = 0.0;
    for &v in &e {
        s += v;
        sum_s2 += s * s;
    }
    Ok(sum_s2 / (nf * nf * lrv))
}

/// True when the KPSS test fails to reject level stationarity at 5%.
pub fn kpss_level_stationary(x: &[f64]) -> Result<bool, ArimaError> {
    Ok(kpss_statistic(x)? < KPSS_CRIT_5PCT)
}

/// Smallest differencing order d <= d_max whose d-times-differenced series
/// passes the KPSS test at 5%; d_max when none pass.
pub fn select_d(x: &[f64], d_max: usize) -> Result<usize, ArimaError> {
    let n = x.len();
    if n < d_max + 10 {
        return Err(ArimaError::TooShortForDifferencing { n, d_max, min: d_max + 10 });
    }
    for d in 0..=d_max {
        if kpss_level_stationary(&difference(x, d))? {
            return Ok(d);
        }
    }
    Ok(d_max)
}
