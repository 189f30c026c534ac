//! Accelerated hybrid proximal extragradient skeleton: coefficient
//! recurrences, the interpolation/extragradient updates, and a post-hoc
//! checker for the inequalities the convergence analysis guarantees.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::oracle::Point;

#[derive(Debug, Clone)]
pub struct HpeState {
    pub k: usize,
    /// Accumulated coefficient `A_k`, zero at the start.
    pub a_total: f64,
    pub u: Point,
    pub y: Point,
    pub last_l: Option<f64>,
    pub last_a: f64,
}

impl HpeState {
    pub fn new(x0: Point) -> Self {
        Self {
            k: 0,
            a_total: 0.0,
            u: x0.clone(),
            y: x0,
            last_l: None,
            last_a: 0.0,
        }
    }
}

/// Returns `(a, A + a)` with `a` the positive root of `L a^2 = A + a`.
pub fn step_coefficients(a_total: f64, l: f64) -> (f64, f64) {
    debug_assert!(l > 0.0 && a_total >= 0.0);
    let a = (1.0 + (1.0 + 4.0 * a_total * l).sqrt()) / (2.0 * l);
    (a, a_total + a)
}

/// `x = (A/A') y + (a/A') u`, evaluated as `u + (A/A')(y - u)` so that
/// `A = 0` gives `u` exactly.
pub fn interpolate_x(state: &HpeState, _a: f64, a_next: f64) -> Point {
    if state.a_total == 0.0 {
        return state.u.clone();
    }
    &state.u + (&state.y - &state.u) * (state.a_total / a_next)
}

pub fn extragradient_update(state: &HpeState, a: f64, grad_y_next: &DVector<f64>) -> Point {
    &state.u - grad_y_next * a
}

/// One iteration as seen by the checker: `A_k`, `L_{k-1}`, `x^{k-1}`, `y^k`,
/// `u^k` and `f(y^k)`, plus the inner tolerance the step was solved to.
#[derive(Debug, Clone)]
pub struct TheoryStep {
    pub a_total: f64,
    pub l: f64,
    pub x: Point,
    pub y: Point,
    pub u: Point,
    pub f_y: f64,
    pub inner_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Inequality {
    /// Potential bound `|u-x*|^2/2 + A (f - f*) + sum/4 <= R^2/2`.
    Potential,
    /// `f(y^N) - f* <= R^2 / (2 A_N)`.
    Gap,
    /// `sum A_k L_{k-1} |y^k - x^{k-1}|^2 <= 2 R^2`.
    StepSum,
    /// `A_N >= (sum L_{k-1}^{-1/2})^2 / 4`.
    Growth,
}

impl Inequality {
    pub fn name(self) -> &'static str {
        match self {
            Inequality::Potential => "potential",
            Inequality::Gap => "gap",
            Inequality::StepSum => "step-sum",
            Inequality::Growth => "growth",
        }
    }
}

/// Slack `rhs - lhs` of each inequality after every iteration `N = 0..=len`
/// (negative means violated). The right-hand sides already include the
/// relative tolerance and the inexactness allowance.
#[derive(Debug, Clone)]
pub struct TheoryReport {
    pub radius: f64,
    pub potential: Vec<f64>,
    pub gap: Vec<f64>,
    pub step_sum: Vec<f64>,
    pub growth: Vec<f64>,
    pub allowance: Vec<f64>,
    /// First violated inequality and the iteration it fails at.
    pub first_violation: Option<(Inequality, usize, f64)>,
}

impl TheoryReport {
    /// Largest amount by which any inequality is violated, 0 if none.
    pub fn worst_violation(&self) -> f64 {
        [&self.potential, &self.gap, &self.step_sum, &self.growth]
            .iter()
            .flat_map(|v| v.iter())
            .fold(0.0f64, |w, s| w.max(-s))
    }

    pub fn holds(&self) -> bool {
        self.first_violation.is_none()
    }

    pub fn into_result(self) -> Result<Self> {
        match self.first_violation {
            Some((inequality, iteration, slack)) => Err(Error::TheoryViolation {
                inequality: inequality.name().to_string(),
                iteration,
                slack,
            }),
            None => Ok(self),
        }
    }
}

/// Evaluates every inequality along `steps` for the comparator point
/// `(x_star, f_star)`; any point works, not only a minimizer.
///
/// Tolerances: `rel_tol` relative on each right-hand side, plus
/// `N * max inner_tol * max step` for inexact steps and a rounding term
/// proportional to `A_N max(1, |f*|)`.
pub fn evaluate_theory(y0: &Point, steps: &[TheoryStep], x_star: &Point, f_star: f64, rel_tol: f64) -> TheoryReport {
    let r2 = (y0 - x_star).norm_squared();
    let eps = f64::EPSILON;
    let mut report = TheoryReport {
        radius: r2.sqrt(),
        potential: Vec::with_capacity(steps.len() + 1),
        gap: Vec::with_capacity(steps.len() + 1),
        step_sum: Vec::with_capacity(steps.len() + 1),
        growth: Vec::with_capacity(steps.len() + 1),
        allowance: Vec::with_capacity(steps.len() + 1),
        first_violation: None,
    };

    // N = 0: u = y = y0, A = 0.
    let a0 = 8.0 * eps * r2;
    report.potential.push(0.5 * r2 * (1.0 + rel_tol) + a0 - 0.5 * r2);
    report.gap.push(f64::INFINITY);
    report.step_sum.push(2.0 * r2 * (1.0 + rel_tol));
    report.growth.push(0.0);
    report.allowance.push(a0);

    let mut weighted_sum = 0.0;
    let mut inv_sqrt_l = 0.0;
    let mut max_tol: f64 = 0.0;
    let mut max_step: f64 = 0.0;
    for (i, s) in steps.iter().enumerate() {
        let n = i + 1;
        let step = (&s.y - &s.x).norm();
        weighted_sum += s.a_total * s.l * step * step;
        inv_sqrt_l += 1.0 / s.l.sqrt();
        max_tol = max_tol.max(s.inner_tol);
        max_step = max_step.max(step);

        let allowance = n as f64 * max_tol * max_step
            + 8.0 * eps * (s.a_total * f_star.abs().max(s.f_y.abs()).max(1.0) + r2 + weighted_sum);
        let gap = s.f_y - f_star;
        let lhs = 0.5 * (&s.u - x_star).norm_squared() + s.a_total * gap + 0.25 * weighted_sum;
        report.potential.push(0.5 * r2 * (1.0 + rel_tol) + allowance - lhs);
        report.gap.push((0.5 * r2 * (1.0 + rel_tol) + allowance) / s.a_total - gap);
        report.step_sum.push(2.0 * r2 * (1.0 + rel_tol) + 4.0 * allowance - weighted_sum);
        report
            .growth
            .push(s.a_total - 0.25 * inv_sqrt_l * inv_sqrt_l * (1.0 - rel_tol) + 8.0 * eps * s.a_total);
        report.allowance.push(allowance);
    }

    'outer: for n in 0..report.potential.len() {
        for (which, slack) in [
            (Inequality::Potential, report.potential[n]),
            (Inequality::Gap, report.gap[n]),
            (Inequality::StepSum, report.step_sum[n]),
            (Inequality::Growth, report.growth[n]),
        ] {
            if slack < 0.0 || slack.is_nan() {
                report.first_violation = Some((which, n, slack));
                break 'outer;
            }
        }
    }
    report
}

/// [`evaluate_theory`], failing with `TheoryViolation` on the first violated
/// inequality.
pub fn check_theory(y0: &Point, steps: &[TheoryStep], x_star: &Point, f_star: f64, rel_tol: f64) -> Result<TheoryReport> {
    evaluate_theory(y0, steps, x_star, f_star, rel_tol).into_result()
}
