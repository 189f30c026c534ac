use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const SECULAR_TOL: f64 = 1e-12;
const MAX_ROOT_ITERS: usize = 200;

/// Minimizes `<g, h> + h^T H h / 2 + (M/6)|h|^3`.
///
/// Stationarity gives `h(r) = -(H + (M r / 2) I)^{-1} g` with `|h(r)| = r`.
/// In the eigenbasis of `H` the norm is explicit, so the root of
/// `phi(r) = |h(r)| - r` is bracketed on `(max(0, -2 lambda_min / M), r_hi]`
/// and found by Newton steps safeguarded with bisection.
///
/// Returns the step and the number of root-finder iterations.
pub fn solve_cubic_regularized(hess: &DMatrix<f64>, g: &DVector<f64>, m: f64) -> Result<(DVector<f64>, usize)> {
    let gnorm = g.norm();
    if gnorm == 0.0 {
        return Ok((DVector::zeros(g.len()), 0));
    }
    let eig = hess.clone().symmetric_eigen();
    let lambda = &eig.eigenvalues;
    let ghat = eig.eigenvectors.tr_mul(g);
    let lambda_min = lambda.min();

    let norm_at = |r: f64| -> f64 {
        let shift = 0.5 * m * r;
        lambda
            .iter()
            .zip(ghat.iter())
            .filter(|(_, gi)| **gi != 0.0)
            .map(|(li, gi)| (gi / (li + shift)).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let slope_at = |r: f64, norm: f64| -> f64 {
        let shift = 0.5 * m * r;
        let s: f64 = lambda
            .iter()
            .zip(ghat.iter())
            .filter(|(_, gi)| **gi != 0.0)
            .map(|(li, gi)| gi * gi / (li + shift).powi(3))
            .sum();
        -0.5 * m * s / norm - 1.0
    };

    let mut lo = (-2.0 * lambda_min / m).max(0.0);
    let mut hi = (-lambda_min + (lambda_min * lambda_min + 2.0 * m * gnorm).sqrt()) / m;
    if !(hi > lo) {
        return Err(Error::InnerFailure(format!("empty secular bracket [{lo:e}, {hi:e}]")));
    }
    // phi must change sign on (lo, hi]; it fails only in the non-convex hard case
    let probe = lo + 1e-12 * (hi - lo).max(f64::MIN_POSITIVE);
    let phi_lo = norm_at(probe) - probe;
    if !(phi_lo > 0.0) {
        return Err(Error::InnerFailure(format!(
            "secular equation not bracketed (lambda_min = {lambda_min:e}); model is non-convex at M = {m:e}"
        )));
    }

    let mut r = hi;
    let mut iters = 0;
    for it in 1..=MAX_ROOT_ITERS {
        iters = it;
        let norm = norm_at(r);
        let phi = norm - r;
        if phi.abs() <= SECULAR_TOL * r.max(1.0) {
            break;
        }
        if phi > 0.0 {
            lo = r;
        } else {
            hi = r;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        let newton = r - phi / slope_at(r, norm);
        r = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }

    let shift = 0.5 * m * r;
    let coeffs = DVector::from_fn(g.len(), |i, _| {
        if ghat[i] == 0.0 {
            0.0
        } else {
            -ghat[i] / (lambda[i] + shift)
        }
    });
    Ok((&eig.eigenvectors * coeffs, iters))
}
