//! Parameter transforms between the optimizer's unconstrained space and
//! stationary/invertible lag polynomials, plus root-modulus checks.

use nalgebra::DMatrix;

// tanh saturates to exactly +-1 in floating point for large inputs; keep the
// partials strictly inside the open interval.
const PARTIAL_CAP: f64 = 1.0 - 1e-7;

/// Levinson-Durbin step: partial autocorrelations, each in (-1, 1), to the
/// coefficients a of a stationary polynomial 1 - a_1 z - ... - a_p z^p.
pub(crate) fn partials_to_coeffs(partials: &[f64]) -> Vec<f64> {
    let p = partials.len();
    let mut a = vec![0.0; p];
    let mut prev = vec![0.0; p];
    for k in 0..p {
        let pk = partials[k];
        prev[..k].copy_from_slice(&a[..k]);
        a[k] = pk;
        for j in 0..k {
            a[j] = prev[j] - pk * prev[k - 1 - j];
        }
    }
    a
}

/// Inverse Levinson-Durbin; `None` when some implied partial falls outside
/// (-1, 1), i.e. the polynomial is not stationary.
#[cfg(test)]
pub(crate) fn coeffs_to_partials(a: &[f64]) -> Option<Vec<f64>> {
    let p = a.len();
    let mut cur = a.to_vec();
    let mut partials = vec![0.0; p];
    for k in (0..p).rev() {
        let pk = cur[k];
        if pk.is_nan() || pk.abs() >= 1.0 {
            return None;
        }
        partials[k] = pk;
        let denom = 1.0 - pk * pk;
        let mut prev = vec![0.0; k];
        for j in 0..k {
            prev[j] = (cur[j] + pk * cur[k - 1 - j]) / denom;
        }
        cur = prev;
    }
    Some(partials)
}

fn squash(r: f64) -> f64 {
    r.tanh().clamp(-PARTIAL_CAP, PARTIAL_CAP)
}

/// Unconstrained reals -> AR coefficients phi of a stationary
/// 1 - phi_1 B - ... - phi_p B^p.
pub(crate) fn unconstrained_to_ar(r: &[f64]) -> Vec<f64> {
    let partials: Vec<f64> = r.iter().map(|&v| squash(v)).collect();
    partials_to_coeffs(&partials)
}

/// Unconstrained reals -> MA coefficients theta of an invertible
/// 1 + theta_1 B + ... + theta_q B^q.
pub(crate) fn unconstrained_to_ma(r: &[f64]) -> Vec<f64> {
    unconstrained_to_ar(r).iter().map(|&a| -a).collect()
}

/// Smallest modulus among the roots of 1 - c_1 z - ... - c_p z^p;
/// +inf when the polynomial is constant.
pub(crate) fn min_root_modulus(c: &[f64]) -> f64 {
    let p = match c.iter().rposition(|&v| v != 0.0) {
        Some(last) => last + 1,
        None => return f64::INFINITY,
    };
    // Roots z of the polynomial are reciprocals of the eigenvalues of the
    // companion matrix of u^p - c_1 u^(p-1) - ... - c_p.
    let mut comp = DMatrix::zeros(p, p);
    for (j, &cj) in c.iter().take(p).enumerate() {
        comp[(0, j)] = cj;
    }
    for i in 1..p {
        comp[(i, i - 1)] = 1.0;
    }
    let max_u = comp.complex_eigenvalues().iter().map(|e| e.norm()).fold(0.0, f64::max);
    if max_u == 0.0 {
        f64::INFINITY
    } else {
        1.0 / max_u
    }
}

/// Smallest root modulus of the MA polynomial 1 + t_1 z + ... + t_q z^q.
pub(crate) fn min_root_modulus_ma(theta: &[f64]) -> f64 {
    let negated: Vec<f64> = theta.iter().map(|&t| -t).collect();
    min_root_modulus(&negated)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn durbin_levinson_round_trips() {
        let partials = [0.6, -0.3, 0.2];
        let coeffs = partials_to_coeffs(&partials);
        let back = coeffs_to_partials(&coeffs).unwrap();
        for (a, b) in partials.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn order_one_is_identity() {
        assert_eq!(partials_to_coeffs(&[0.7]), vec![0.7]);
    }

    #[test]
    fn transformed_ar_is_always_stationary() {
        for seed in 0..50 {
            let r: Vec<f64> =
                (0..4).map(|i| ((seed * 37 + i * 101) % 19) as f64 - 9.0).collect();
            let phi = unconstrained_to_ar(&r);
            assert!(min_root_modulus(&phi) > 1.0, "roots inside unit circle for {r:?}");
        }
    }

    #[test]
    fn ma_sign_convention_is_invertible() {
        let theta = unconstrained_to_ma(&[0.4, -0.2]);
        assert!(min_root_modulus_ma(&theta) > 1.0);
    }

    #[test]
    fn root_modulus_matches_closed_forms() {
        // 1 - 0.5 z has root 2.
        assert!((min_root_modulus(&[0.5]) - 2.0).abs() < 1e-12);
        // 1 - z has root 1.
        assert!((min_root_modulus(&[1.0]) - 1.0).abs() < 1e-12);
        assert_eq!(min_root_modulus(&[0.0, 0.0]), f64::INFINITY);
        assert_eq!(min_root_modulus(&[]), f64::INFINITY);
    }
}
