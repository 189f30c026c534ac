use nalgebra::DVector;

use super::{StepModel, StepStatus, TensorStepConfig};

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACK: usize = 60;
const MAX_SHIFTS: usize = 30;

/// Damped Newton on the convex p = 3 model, started from the exact minimizer
/// of the model along `-g~`.
pub(super) fn minimize(model: &StepModel<'_>, config: &TensorStepConfig) -> (DVector<f64>, usize, StepStatus) {
    let n = model.shifted_gradient().len();
    let g = model.shifted_gradient();
    let gnorm = g.norm();
    // rounding floor: the residual cannot be driven far below eps * |g~|
    let floor = 1e-14 * gnorm;

    let mut h = initial_point(model);
    let mut grad = model.gradient(&h);
    let mut value = model.value(&h);

    for it in 0..config.inner_max_iters {
        let gn = grad.norm();
        if gn <= config.tolerance_at(h.norm()).max(floor) {
            return (h, it, StepStatus::Converged);
        }

        let hess = model.hessian(&h);
        let scale = hess.amax().max(1e-300);
        let mut direction = None;
        let mut shift = 0.0;
        for _ in 0..MAX_SHIFTS {
            let mut shifted = hess.clone();
            for i in 0..n {
                shifted[(i, i)] += shift;
            }
            if let Some(chol) = shifted.cholesky() {
                direction = Some(chol.solve(&(-&grad)));
                break;
            }
            shift = if shift == 0.0 { 1e-12 * scale } else { shift * 10.0 };
        }
        let d = match direction {
            Some(d) if d.dot(&grad) < 0.0 => d,
            _ => -&grad,
        };

        let slope = d.dot(&grad);
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACK {
            let trial = &h + &d * alpha;
            let trial_value = model.value(&trial);
            if trial_value <= value + ARMIJO * alpha * slope {
                let trial_grad = model.gradient(&trial);
                h = trial;
                value = trial_value;
                grad = trial_grad;
                accepted = true;
                break;
            }
            if alpha == 1.0 {
                // Near the solution value differences drown in rounding;
                // a full step that halves the residual is still progress.
                let trial_grad = model.gradient(&trial);
                if trial_grad.norm() <= 0.5 * gn {
                    h = trial;
                    value = trial_value;
                    grad = trial_grad;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            log::debug!("p=3 inner solver stalled at residual {gn:e}");
            return (h, it + 1, StepStatus::MaxIters);
        }
    }
    let status = if grad.norm() <= config.tolerance_at(h.norm()).max(floor) {
        StepStatus::Converged
    } else {
        StepStatus::MaxIters
    };
    (h, config.inner_max_iters, status)
}

/// Minimizes the model restricted to the ray `-t g~ / |g~|`, `t >= 0`. Along
/// the ray it is a quartic polynomial whose derivative
/// `-|g| + c2 t + c3 t^2 / 2 + (M/6) t^3` is negative at 0 and eventually
/// positive; its first root is found by bisection with Newton polish.
fn initial_point(model: &StepModel<'_>) -> DVector<f64> {
    let g = model.shifted_gradient();
    let gnorm = g.norm();
    let dir = -g / gnorm;
    let c2 = dir.dot(&model.hessian_times(&dir));
    let c3 = if model.p >= 3 {
        dir.dot(&model.bundle.third_dir(&dir).expect("order checked"))
    } else {
        0.0
    };
    let c4 = model.m / 6.0;
    let deriv = |t: f64| -gnorm + c2 * t + 0.5 * c3 * t * t + c4 * t * t * t;
    let second = |t: f64| c2 + c3 * t + 3.0 * c4 * t * t;

    let mut hi = 1.0;
    let mut guard = 0;
    while deriv(hi) <= 0.0 && guard < 2000 {
        hi *= 2.0;
        guard += 1;
    }
    let mut lo = 0.0;
    let mut t = hi;
    for _ in 0..200 {
        let d = deriv(t);
        if d.abs() <= 1e-15 * gnorm.max(1.0) {
            break;
        }
        if d > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        let s = second(t);
        let newton = if s > 0.0 { t - d / s } else { f64::NAN };
        t = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    dir * t
}
