//! Comparators: the plain tensor method `y_{k+1} = T(y_k)` and an
//! accelerated tensor method built on an estimating sequence.

use std::time::{Duration, Instant};

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::optimal::{StopCriteria, Termination};
use crate::oracle::{Point, Problem};
use crate::tensor_step::{factorial, tensor_step, TensorStepConfig, TensorStepResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMethod {
    Plain,
    Accelerated,
}

#[derive(Debug, Clone)]
pub struct BaselineConfig {
    pub method: BaselineMethod,
    pub p: usize,
    pub m_p: f64,
    pub inner_tol: Option<f64>,
    pub inner_max_iters: usize,
}

impl BaselineConfig {
    pub fn new(method: BaselineMethod, p: usize, m_p: f64) -> Self {
        Self {
            method,
            p,
            m_p,
            inner_tol: None,
            inner_max_iters: 100,
        }
    }

    fn step_config(&self) -> TensorStepConfig {
        let mut cfg = TensorStepConfig::new(self.p, self.p as f64 * self.m_p);
        cfg.inner_tol = self.inner_tol;
        cfg.inner_max_iters = self.inner_max_iters;
        cfg
    }

    fn validate(&self, problem: &dyn Problem) -> Result<()> {
        if self.p > problem.max_order() || !(1..=3).contains(&self.p) {
            return Err(Error::UnsupportedOrder {
                requested: self.p,
                supported: problem.max_order().min(3),
            });
        }
        if !(self.m_p > 0.0) || !self.m_p.is_finite() {
            return Err(Error::InvalidArgument(format!("M_p = {} must be positive", self.m_p)));
        }
        if self.method == BaselineMethod::Accelerated && self.p < 2 {
            return Err(Error::InvalidArgument(
                "the accelerated baseline needs p >= 2 (its step constant vanishes at p = 1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BaselineRecord {
    pub k: usize,
    pub y: Point,
    pub f_y: f64,
    pub grad_norm: f64,
    /// Estimating-sequence coefficients `A_k`, `a_k` (accelerated only).
    pub a_total: Option<f64>,
    pub a: Option<f64>,
    pub step_norm: f64,
    pub inner_iters: usize,
    pub elapsed: Duration,
}

#[derive(Debug)]
pub struct BaselineTrace {
    pub method: BaselineMethod,
    pub x0: Point,
    pub f0: f64,
    pub grad0_norm: f64,
    pub records: Vec<BaselineRecord>,
    pub termination: Termination,
    pub error: Option<Error>,
}

impl BaselineTrace {
    pub fn last_point(&self) -> &Point {
        self.records.last().map_or(&self.x0, |r| &r.y)
    }

    pub fn last_value(&self) -> f64 {
        self.records.last().map_or(self.f0, |r| r.f_y)
    }
}

fn start_trace(problem: &dyn Problem, x0: &Point, method: BaselineMethod) -> Result<BaselineTrace> {
    let b = problem.eval(x0, 1)?;
    Ok(BaselineTrace {
        method,
        x0: x0.clone(),
        f0: b.value,
        grad0_norm: b.gradient.norm(),
        records: Vec::new(),
        termination: Termination::MaxIters,
        error: None,
    })
}

fn step_at(problem: &dyn Problem, x: &Point, p: usize, cfg: &TensorStepConfig) -> Result<TensorStepResult> {
    let bundle = problem.eval(x, p)?;
    tensor_step(&bundle, cfg)
}

pub fn run(problem: &dyn Problem, x0: &Point, config: &BaselineConfig, stop: &StopCriteria) -> Result<BaselineTrace> {
    match config.method {
        BaselineMethod::Plain => run_plain(problem, x0, config, stop),
        BaselineMethod::Accelerated => run_accelerated(problem, x0, config, stop),
    }
}

pub fn run_plain(problem: &dyn Problem, x0: &Point, config: &BaselineConfig, stop: &StopCriteria) -> Result<BaselineTrace> {
    config.validate(problem)?;
    let start = Instant::now();
    let mut trace = start_trace(problem, x0, BaselineMethod::Plain)?;
    if let Some(t) = stop.reached(0, trace.f0, trace.grad0_norm, start.elapsed()) {
        trace.termination = t;
        return Ok(trace);
    }
    let cfg = config.step_config();
    let mut y = x0.clone();
    loop {
        let step = match step_at(problem, &y, config.p, &cfg) {
            Ok(s) => s,
            Err(e) => {
                trace.termination = Termination::Failed;
                trace.error = Some(e);
                return Ok(trace);
            }
        };
        if step.step_norm == 0.0 {
            trace.termination = Termination::ConvergedAtCenter;
            return Ok(trace);
        }
        y = step.y;
        let b = problem.eval(&y, 1)?;
        let k = trace.records.len() + 1;
        let elapsed = start.elapsed();
        trace.records.push(BaselineRecord {
            k,
            y: y.clone(),
            f_y: b.value,
            grad_norm: b.gradient.norm(),
            a_total: None,
            a: None,
            step_norm: step.step_norm,
            inner_iters: step.inner_iters,
            elapsed,
        });
        if let Some(t) = stop.reached(k, b.value, b.gradient.norm(), elapsed) {
            trace.termination = t;
            return Ok(trace);
        }
    }
}

/// Growth constant `beta` of `A_k = beta k^{p+1}` for the step `T_{p, p M_p}`.
///
/// With `M = p M_p` the tensor step guarantees
/// `<grad f(y), x - y> >= kappa |grad f(y)|^{(p+1)/p}`, where
/// `kappa = ((M - M_p)/p!) (p!/(M + M_p))^{(p+1)/p}`; the estimating function
/// `|x - x0|^{p+1}/(p+1)` is uniformly convex with constant `2^{1-p}`.
pub fn accelerated_beta(p: usize, m_p: f64) -> f64 {
    let m = p as f64 * m_p;
    let fact = factorial(p);
    let pf = p as f64;
    let kappa = (m - m_p) / fact * (fact / (m + m_p)).powf((pf + 1.0) / pf);
    let sigma = 2f64.powf(1.0 - pf);
    ((pf + 1.0) * kappa / pf).powi(p as i32) * sigma / (pf + 1.0).powi(p as i32 + 1)
}

/// Estimating-sequence method. `v_k` minimizes
/// `|x - x0|^{p+1}/(p+1) + sum_i a_i <grad f(y_i), x>`, which is
/// `x0 - s / |s|^{(p-1)/p}` for `s = sum_i a_i grad f(y_i)`.
pub fn run_accelerated(
    problem: &dyn Problem,
    x0: &Point,
    config: &BaselineConfig,
    stop: &StopCriteria,
) -> Result<BaselineTrace> {
    config.validate(problem)?;
    let start = Instant::now();
    let mut trace = start_trace(problem, x0, BaselineMethod::Accelerated)?;
    if let Some(t) = stop.reached(0, trace.f0, trace.grad0_norm, start.elapsed()) {
        trace.termination = t;
        return Ok(trace);
    }
    let p = config.p;
    let beta = accelerated_beta(p, config.m_p);
    let cfg = config.step_config();
    let mut y = x0.clone();
    let mut v = x0.clone();
    let mut s = DVector::zeros(x0.len());
    let mut a_total = 0.0;
    loop {
        let k = trace.records.len();
        let a_next = beta * ((k + 1) as f64).powi(p as i32 + 1);
        let a = a_next - a_total;
        let x = (&y * a_total + &v * a) / a_next;
        let step = match step_at(problem, &x, p, &cfg) {
            Ok(st) => st,
            Err(e) => {
                trace.termination = Termination::Failed;
                trace.error = Some(e);
                return Ok(trace);
            }
        };
        y = step.y;
        let b = problem.eval(&y, 1)?;
        s += &b.gradient * a;
        let norm = s.norm();
        v = if norm > 0.0 {
            x0 - &s / norm.powf((p - 1) as f64 / p as f64)
        } else {
            x0.clone()
        };
        a_total = a_next;
        let elapsed = start.elapsed();
        trace.records.push(BaselineRecord {
            k: k + 1,
            y: y.clone(),
            f_y: b.value,
            grad_norm: b.gradient.norm(),
            a_total: Some(a_total),
            a: Some(a),
            step_norm: step.step_norm,
            inner_iters: step.inner_iters,
            elapsed,
        });
        if b.gradient.iter().all(|g| *g == 0.0) {
            trace.termination = Termination::ConvergedAtCenter;
            return Ok(trace);
        }
        if let Some(t) = stop.reached(k + 1, b.value, b.gradient.norm(), elapsed) {
            trace.termination = t;
            return Ok(trace);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_matches_hand_evaluation() {
        // p = 2, M_p = 1: kappa = (1/2)(2/3)^{3/2}, sigma = 1/2.
        let kappa = 0.5 * (2.0f64 / 3.0).powf(1.5);
        let expected = (1.5 * kappa).powi(2) * 0.5 / 27.0;
        assert!((accelerated_beta(2, 1.0) - expected).abs() < 1e-15);
        // beta scales like M_p^{-1}
        assert!((accelerated_beta(3, 8.0) * 8.0 - accelerated_beta(3, 1.0)).abs() < 1e-15);
    }
}
