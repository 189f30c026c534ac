//! The optimal tensor method: a line search on `L_k` keeping the acceptance
//! ratio in `[1/2, 1]`, a tensor step on the prox-regularized objective, and
//! the extragradient update.

use std::time::{Duration, Instant};

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::hpe::{extragradient_update, interpolate_x, step_coefficients, HpeState, TheoryStep};
use crate::oracle::{Point, Problem};
use crate::tensor_step::{factorial, tensor_step, StepStatus, TensorStepConfig};

/// Step norms at or below this are treated as "the prox subproblem is solved
/// at its center".
pub const CENTER_STEP: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct LineSearchConfig {
    /// First probe of the first iteration; later iterations start from the
    /// previously accepted `L`. `None` picks `2 (p+1) M_p / p!`.
    pub l_init: Option<f64>,
    pub expand_factor: f64,
    pub max_probes: usize,
    /// Fallback window used when the search cannot hit `[1/2, 1]`.
    pub relaxed_window: (f64, f64),
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        Self {
            l_init: None,
            expand_factor: 2.0,
            max_probes: 60,
            relaxed_window: (0.4, 1.1),
        }
    }
}

impl LineSearchConfig {
    fn validate(&self) -> Result<()> {
        if !(self.expand_factor > 1.0) {
            return Err(Error::InvalidArgument("expand_factor must exceed 1".into()));
        }
        if self.max_probes < 4 {
            return Err(Error::InvalidArgument("max_probes must be at least 4".into()));
        }
        if let Some(l) = self.l_init {
            if !(l > 0.0) || !l.is_finite() {
                return Err(Error::InvalidArgument("l_init must be positive".into()));
            }
        }
        Ok(())
    }
}

/// `rho = 2 (p+1) M_p s^{p-1} / (p! L)`.
pub fn acceptance_ratio(step_norm: f64, l: f64, p: usize, m_p: f64) -> f64 {
    2.0 * (p + 1) as f64 * m_p * step_norm.powi(p as i32 - 1) / (factorial(p) * l)
}

pub fn in_window(rho: f64) -> bool {
    (0.5..=1.0).contains(&rho)
}

#[derive(Debug, Clone)]
pub struct IterationRecord {
    /// Index of the produced point: this record holds `y^k`, so `k >= 1`.
    pub k: usize,
    /// `L_{k-1}`, the accepted line-search value.
    pub l: f64,
    pub a: f64,
    /// `A_k`.
    pub a_total: f64,
    pub probes: usize,
    pub rho: f64,
    /// Accepted from the relaxed window.
    pub relaxed: bool,
    pub x: Point,
    pub y: Point,
    pub u: Point,
    pub f_y: f64,
    pub grad_norm: f64,
    pub step_norm: f64,
    pub model_grad_norm: f64,
    pub inner_tol: f64,
    pub inner_iters: usize,
    pub inner_status: StepStatus,
    pub elapsed: Duration,
}

impl IterationRecord {
    pub fn theory_step(&self) -> TheoryStep {
        TheoryStep {
            a_total: self.a_total,
            l: self.l,
            x: self.x.clone(),
            y: self.y.clone(),
            u: self.u.clone(),
            f_y: self.f_y,
            inner_tol: self.inner_tol,
        }
    }
}

/// Everything a probe at one value of `L` produces, without touching the
/// state.
#[derive(Debug, Clone)]
pub struct Probe {
    pub l: f64,
    pub a: f64,
    pub a_total: f64,
    pub x: Point,
    pub y: Point,
    pub rho: f64,
    pub step_norm: f64,
    pub model_grad_norm: f64,
    pub inner_tol: f64,
    pub inner_iters: usize,
    pub inner_status: StepStatus,
}

#[derive(Debug, Clone)]
pub struct MethodConfig {
    pub p: usize,
    pub m_p: f64,
    pub inner_tol: Option<f64>,
    pub inner_max_iters: usize,
    pub line_search: LineSearchConfig,
}

impl MethodConfig {
    pub fn new(p: usize, m_p: f64) -> Self {
        Self {
            p,
            m_p,
            inner_tol: None,
            inner_max_iters: 100,
            line_search: LineSearchConfig::default(),
        }
    }

    /// Step configuration with `M = p M_p` and prox `(L, center)`.
    pub fn step_config(&self, l: f64, center: Point) -> TensorStepConfig {
        let mut cfg = TensorStepConfig::new(self.p, self.p as f64 * self.m_p).with_prox(l, center);
        cfg.inner_tol = self.inner_tol;
        cfg.inner_max_iters = self.inner_max_iters;
        cfg
    }

    fn validate(&self, problem: &dyn Problem) -> Result<()> {
        if !(1..=3).contains(&self.p) || self.p > problem.max_order() {
            return Err(Error::UnsupportedOrder {
                requested: self.p,
                supported: problem.max_order().min(3),
            });
        }
        if !(self.m_p > 0.0) || !self.m_p.is_finite() {
            return Err(Error::InvalidArgument(format!("M_p = {} must be positive", self.m_p)));
        }
        self.line_search.validate()
    }
}

pub fn probe(problem: &dyn Problem, state: &HpeState, l: f64, config: &MethodConfig) -> Result<Probe> {
    if !(l > 0.0) || !l.is_finite() {
        return Err(Error::InvalidArgument(format!("probe at L = {l}")));
    }
    let (a, a_total) = step_coefficients(state.a_total, l);
    let x = interpolate_x(state, a, a_total);
    let bundle = problem.eval(&x, config.p)?;
    let step = tensor_step(&bundle, &config.step_config(l, x.clone()))?;
    let rho = acceptance_ratio(step.step_norm, l, config.p, config.m_p);
    Ok(Probe {
        l,
        a,
        a_total,
        x,
        y: step.y,
        rho,
        step_norm: step.step_norm,
        model_grad_norm: step.model_grad_norm,
        inner_tol: step.tolerance,
        inner_iters: step.inner_iters,
        inner_status: step.status,
    })
}

#[derive(Debug, Clone)]
pub enum LineSearchOutcome {
    Accepted { probe: Probe, probes: usize, relaxed: bool },
    /// The prox step at `x^k` did not move: `x^k` is (numerically) optimal.
    ConvergedAtCenter { probe: Probe, probes: usize },
}

/// Expands or shrinks `L` geometrically until the ratio enters `[1/2, 1]` or
/// a bracket `(L_small: rho > 1, L_large: rho < 1/2)` is found, then bisects
/// on `log L`.
pub fn find_l(problem: &dyn Problem, state: &HpeState, config: &MethodConfig) -> Result<LineSearchOutcome> {
    let ls = &config.line_search;
    let p = config.p;
    let mut l = state.last_l.or(ls.l_init).unwrap_or(2.0 * (p + 1) as f64 * config.m_p / factorial(p));
    let mut too_small: Option<f64> = None;
    let mut too_large: Option<f64> = None;
    let mut relaxed: Option<Probe> = None;
    let mut last = None;

    for probes in 1..=ls.max_probes {
        let pr = probe(problem, state, l, config)?;
        if pr.step_norm <= CENTER_STEP {
            return Ok(LineSearchOutcome::ConvergedAtCenter { probe: pr, probes });
        }
        if in_window(pr.rho) {
            return Ok(LineSearchOutcome::Accepted {
                probe: pr,
                probes,
                relaxed: false,
            });
        }
        if relaxed.is_none() && pr.rho >= ls.relaxed_window.0 && pr.rho <= ls.relaxed_window.1 {
            relaxed = Some(pr.clone());
        }
        if pr.rho > 1.0 {
            too_small = Some(too_small.map_or(l, |s: f64| s.max(l)));
        } else {
            too_large = Some(too_large.map_or(l, |s: f64| s.min(l)));
        }
        let next = match (too_small, too_large) {
            (Some(lo), Some(hi)) => {
                if hi <= lo || hi / lo < 1.0 + 1e-12 {
                    last = Some(pr);
                    break;
                }
                (lo * hi).sqrt()
            }
            (Some(lo), None) => lo * ls.expand_factor,
            (None, Some(hi)) => hi / ls.expand_factor,
            (None, None) => unreachable!(),
        };
        if !next.is_finite() || next <= 0.0 {
            last = Some(pr);
            break;
        }
        last = Some(pr);
        l = next;
    }

    if let Some(pr) = relaxed {
        log::debug!("iteration {}: accepted relaxed ratio {:.3}", state.k, pr.rho);
        return Ok(LineSearchOutcome::Accepted {
            probe: pr,
            probes: ls.max_probes,
            relaxed: true,
        });
    }
    let last = last.expect("at least one probe");
    Err(Error::LineSearchExhausted {
        probes: ls.max_probes,
        last_l: last.l,
        last_rho: last.rho,
    })
}

#[derive(Debug, Clone, Default)]
pub struct StopCriteria {
    pub max_iters: usize,
    /// Stops once the normalized gap (see [`normalized_gap`]) is at or below
    /// this. Needs `f_star`.
    pub target_gap: Option<f64>,
    pub f_star: Option<f64>,
    pub target_grad_norm: Option<f64>,
    pub max_wall: Option<Duration>,
}

impl StopCriteria {
    pub fn iterations(max_iters: usize) -> Self {
        Self {
            max_iters,
            ..Self::default()
        }
    }

    pub fn gap(max_iters: usize, f_star: f64, target: f64) -> Self {
        Self {
            max_iters,
            target_gap: Some(target),
            f_star: Some(f_star),
            ..Self::default()
        }
    }

    /// Which criterion, if any, the point `(f, |grad|)` after `k` iterations meets.
    pub fn reached(&self, k: usize, f: f64, grad_norm: f64, elapsed: Duration) -> Option<Termination> {
        if let (Some(target), Some(f_star)) = (self.target_gap, self.f_star) {
            if normalized_gap(f, f_star) <= target {
                return Some(Termination::TargetGap);
            }
        }
        if let Some(target) = self.target_grad_norm {
            if grad_norm <= target {
                return Some(Termination::TargetGradNorm);
            }
        }
        if k >= self.max_iters {
            return Some(Termination::MaxIters);
        }
        if let Some(limit) = self.max_wall {
            if elapsed >= limit {
                return Some(Termination::WallClock);
            }
        }
        None
    }
}

/// `(f - f*) / |f*|` when `|f*| > 1e-12`, otherwise `f - f*`.
pub fn normalized_gap(f: f64, f_star: f64) -> f64 {
    if f_star.abs() > 1e-12 {
        (f - f_star) / f_star.abs()
    } else {
        f - f_star
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    TargetGap,
    TargetGradNorm,
    MaxIters,
    WallClock,
    ConvergedAtCenter,
    Failed,
}

impl Termination {
    /// Whether the run met its accuracy goal (as opposed to running out of
    /// budget or failing).
    pub fn converged(self) -> bool {
        matches!(
            self,
            Termination::TargetGap | Termination::TargetGradNorm | Termination::ConvergedAtCenter
        )
    }
}

#[derive(Debug)]
pub struct RunTrace {
    pub x0: Point,
    pub f0: f64,
    pub grad0_norm: f64,
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
    /// Set when `termination == Failed`; the records up to the failure are kept.
    pub error: Option<Error>,
}

impl RunTrace {
    pub fn last_point(&self) -> &Point {
        self.records.last().map_or(&self.x0, |r| &r.y)
    }

    pub fn last_value(&self) -> f64 {
        self.records.last().map_or(self.f0, |r| r.f_y)
    }

    pub fn theory_steps(&self) -> Vec<TheoryStep> {
        self.records.iter().map(IterationRecord::theory_step).collect()
    }

    pub fn into_result(self) -> Result<Self> {
        match self.error {
            Some(e) => Err(e),
            None => Ok(self),
        }
    }
}

pub fn run(problem: &dyn Problem, x0: &Point, config: &MethodConfig, stop: &StopCriteria) -> Result<RunTrace> {
    config.validate(problem)?;
    let start = Instant::now();
    let b0 = problem.eval(x0, 1)?;
    let mut trace = RunTrace {
        x0: x0.clone(),
        f0: b0.value,
        grad0_norm: b0.gradient.norm(),
        records: Vec::new(),
        termination: Termination::MaxIters,
        error: None,
    };
    if let Some(t) = stop.reached(0, b0.value, trace.grad0_norm, start.elapsed()) {
        trace.termination = t;
        return Ok(trace);
    }

    let mut state = HpeState::new(x0.clone());
    loop {
        let outcome = match find_l(problem, &state, config) {
            Ok(o) => o,
            Err(e) => {
                log::warn!("iteration {} failed: {e}", state.k + 1);
                trace.termination = Termination::Failed;
                trace.error = Some(e);
                return Ok(trace);
            }
        };
        let (pr, probes, relaxed) = match outcome {
            LineSearchOutcome::Accepted { probe, probes, relaxed } => (probe, probes, relaxed),
            LineSearchOutcome::ConvergedAtCenter { .. } => {
                trace.termination = Termination::ConvergedAtCenter;
                return Ok(trace);
            }
        };
        let by = match problem.eval(&pr.y, 1) {
            Ok(b) => b,
            Err(e) => {
                trace.termination = Termination::Failed;
                trace.error = Some(e);
                return Ok(trace);
            }
        };
        let u = extragradient_update(&state, pr.a, &by.gradient);
        let grad_norm = by.gradient.norm();
        state = HpeState {
            k: state.k + 1,
            a_total: pr.a_total,
            u: u.clone(),
            y: pr.y.clone(),
            last_l: Some(pr.l),
            last_a: pr.a,
        };
        let elapsed = start.elapsed();
        trace.records.push(IterationRecord {
            k: state.k,
            l: pr.l,
            a: pr.a,
            a_total: pr.a_total,
            probes,
            rho: pr.rho,
            relaxed,
            x: pr.x,
            y: pr.y,
            u,
            f_y: by.value,
            grad_norm,
            step_norm: pr.step_norm,
            model_grad_norm: pr.model_grad_norm,
            inner_tol: pr.inner_tol,
            inner_iters: pr.inner_iters,
            inner_status: pr.inner_status,
            elapsed,
        });
        if let Some(t) = stop.reached(state.k, by.value, grad_norm, elapsed) {
            trace.termination = t;
            return Ok(trace);
        }
    }
}

/// Gradient of `F_{L,x}(y) = f(y) + (L/2)|y - x|^2`.
pub fn prox_gradient(problem: &dyn Problem, l: f64, x: &Point, y: &Point) -> DVector<f64> {
    problem.gradient(y) + (y - x) * l
}
