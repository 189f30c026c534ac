//! Minimizers of the M-regularized p-th order Taylor model, optionally with
//! an added proximal term `(L/2)|y - z|^2`, for p = 1, 2, 3.

mod cubic;
mod quartic;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::oracle::{DerivativeBundle, Point};

pub use cubic::solve_cubic_regularized;

/// The `(L/2)|y - z|^2` term added to the model.
#[derive(Debug, Clone)]
pub struct Prox {
    pub coefficient: f64,
    pub center: Point,
}

#[derive(Debug, Clone)]
pub struct TensorStepConfig {
    pub p: usize,
    /// Regularization `M` of the `M/(p+1)! |y - x|^{p+1}` term.
    pub m: f64,
    /// Target on the model gradient norm. `None` uses the adaptive default
    /// `max(1e-2 (M/p!) max(|h|, 1e-8)^p, 1e-12)`.
    pub inner_tol: Option<f64>,
    pub inner_max_iters: usize,
    pub prox: Option<Prox>,
}

impl TensorStepConfig {
    pub fn new(p: usize, m: f64) -> Self {
        Self {
            p,
            m,
            inner_tol: None,
            inner_max_iters: 100,
            prox: None,
        }
    }

    pub fn with_prox(mut self, coefficient: f64, center: Point) -> Self {
        self.prox = Some(Prox { coefficient, center });
        self
    }

    pub fn with_inner_tol(mut self, tol: f64) -> Self {
        self.inner_tol = Some(tol);
        self
    }

    /// Warns when `M < p M_p`: the model is only guaranteed convex above it.
    pub fn check_regularization(&self, m_p: f64) {
        if self.m < self.p as f64 * m_p * (1.0 - 1e-12) {
            log::warn!(
                "regularization M = {:e} below p*M_p = {:e}; the step model may be non-convex",
                self.m,
                self.p as f64 * m_p
            );
        }
    }

    fn validate(&self, bundle: &DerivativeBundle) -> Result<()> {
        if !(1..=3).contains(&self.p) {
            return Err(Error::UnsupportedOrder {
                requested: self.p,
                supported: 3,
            });
        }
        if bundle.order < self.p {
            return Err(Error::UnsupportedOrder {
                requested: self.p,
                supported: bundle.order,
            });
        }
        if !(self.m > 0.0) || !self.m.is_finite() {
            return Err(Error::InvalidArgument(format!("regularization M = {} must be positive", self.m)));
        }
        if let Some(tol) = self.inner_tol {
            if !(tol > 0.0) {
                return Err(Error::InvalidArgument("inner_tol must be positive".into()));
            }
        }
        if let Some(prox) = &self.prox {
            if !(prox.coefficient >= 0.0) || !prox.coefficient.is_finite() {
                return Err(Error::InvalidArgument("prox coefficient must be non-negative".into()));
            }
            if prox.center.len() != bundle.dim() {
                return Err(Error::DimensionMismatch {
                    expected: bundle.dim(),
                    got: prox.center.len(),
                });
            }
        }
        Ok(())
    }

    /// Inner tolerance at a trial step of norm `step_norm`.
    pub fn tolerance_at(&self, step_norm: f64) -> f64 {
        match self.inner_tol {
            Some(tol) => tol,
            None => {
                let adaptive = 1e-2 * self.m / factorial(self.p) * step_norm.max(1e-8).powi(self.p as i32);
                adaptive.max(1e-12)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepStatus {
    Converged,
    MaxIters,
}

#[derive(Debug, Clone)]
pub struct TensorStepResult {
    pub y: Point,
    /// `|grad Omega(y)|`, Omega being the full step objective.
    pub model_grad_norm: f64,
    pub step_norm: f64,
    pub inner_iters: usize,
    pub status: StepStatus,
    /// Tolerance the residual was measured against.
    pub tolerance: f64,
}

pub fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// `Omega(x + h) = f + <g~, h> + h^T H h / 2 + (L/2)|h|^2 + D3f[h,h,h]/6
///  + M/(p+1)! |h|^{p+1} + (L/2)|x - z|^2`, where `g~ = g + L(x - z)` and the
/// Hessian/third terms appear only for p >= 2 / p >= 3.
pub(crate) struct StepModel<'a> {
    bundle: &'a DerivativeBundle,
    p: usize,
    m: f64,
    l: f64,
    grad: DVector<f64>,
    constant: f64,
}

impl<'a> StepModel<'a> {
    pub(crate) fn new(bundle: &'a DerivativeBundle, config: &TensorStepConfig) -> Self {
        let (l, grad, constant) = match &config.prox {
            Some(prox) if prox.coefficient > 0.0 => {
                let shift = &bundle.center - &prox.center;
                let l = prox.coefficient;
                (l, &bundle.gradient + &shift * l, bundle.value + 0.5 * l * shift.norm_squared())
            }
            _ => (0.0, bundle.gradient.clone(), bundle.value),
        };
        Self {
            bundle,
            p: config.p,
            m: config.m,
            l,
            grad,
            constant,
        }
    }

    pub(crate) fn shifted_gradient(&self) -> &DVector<f64> {
        &self.grad
    }

    fn hessian_times(&self, h: &DVector<f64>) -> DVector<f64> {
        let mut out = h * self.l;
        if self.p >= 2 {
            out += self.bundle.hessian.as_ref().expect("order checked") * h;
        }
        out
    }

    pub(crate) fn value(&self, h: &DVector<f64>) -> f64 {
        let mut v = self.constant + self.grad.dot(h) + 0.5 * h.dot(&self.hessian_times(h));
        if self.p >= 3 {
            v += h.dot(&self.bundle.third_dir(h).expect("order checked")) / 6.0;
        }
        v + self.m / factorial(self.p + 1) * h.norm().powi(self.p as i32 + 1)
    }

    pub(crate) fn gradient(&self, h: &DVector<f64>) -> DVector<f64> {
        let mut g = &self.grad + self.hessian_times(h);
        if self.p >= 3 {
            g += self.bundle.third_dir(h).expect("order checked") * 0.5;
        }
        let r = h.norm();
        if r > 0.0 {
            g += h * (self.m / factorial(self.p) * r.powi(self.p as i32 - 1));
        }
        g
    }

    /// Only needed by the p = 3 solver.
    pub(crate) fn hessian(&self, h: &DVector<f64>) -> DMatrix<f64> {
        let n = h.len();
        let mut hess = self
            .bundle
            .hessian
            .clone()
            .unwrap_or_else(|| DMatrix::zeros(n, n));
        if self.p < 2 {
            hess.fill(0.0);
        }
        for i in 0..n {
            hess[(i, i)] += self.l;
        }
        if self.p >= 3 {
            hess += self.bundle.third.as_ref().expect("order checked").matrix(h);
        }
        let r2 = h.norm_squared();
        // M/p! * d/dh (|h|^{p-1} h)
        let c = self.m / factorial(self.p);
        match self.p {
            1 => {
                hess += DMatrix::identity(n, n) * c;
            }
            2 => {
                let r = r2.sqrt();
                if r > 0.0 {
                    hess += (DMatrix::identity(n, n) * r + h * h.transpose() / r) * c;
                }
            }
            _ => {
                hess += (DMatrix::identity(n, n) * r2 + h * h.transpose() * 2.0) * c;
            }
        }
        hess
    }
}

fn finish(
    bundle: &DerivativeBundle,
    model: &StepModel<'_>,
    config: &TensorStepConfig,
    h: DVector<f64>,
    inner_iters: usize,
    status: StepStatus,
) -> TensorStepResult {
    let step_norm = h.norm();
    let model_grad_norm = model.gradient(&h).norm();
    TensorStepResult {
        y: &bundle.center + h,
        model_grad_norm,
        step_norm,
        inner_iters,
        status,
        tolerance: config.tolerance_at(step_norm),
    }
}

fn degenerate(bundle: &DerivativeBundle, config: &TensorStepConfig) -> TensorStepResult {
    TensorStepResult {
        y: bundle.center.clone(),
        model_grad_norm: 0.0,
        step_norm: 0.0,
        inner_iters: 0,
        status: StepStatus::Converged,
        tolerance: config.tolerance_at(0.0),
    }
}

/// Closed form: `y = x - g~ / (M + L)`.
pub fn step_p1(bundle: &DerivativeBundle, config: &TensorStepConfig) -> Result<TensorStepResult> {
    config.validate(bundle)?;
    if config.p != 1 {
        return Err(Error::InvalidArgument("step_p1 requires p = 1".into()));
    }
    let model = StepModel::new(bundle, config);
    if model.shifted_gradient().iter().all(|v| *v == 0.0) {
        return Ok(degenerate(bundle, config));
    }
    let h = -model.shifted_gradient() / (config.m + model.l);
    Ok(finish(bundle, &model, config, h, 0, StepStatus::Converged))
}

/// Cubic-regularized Newton step via eigendecomposition and the secular
/// equation on `r = |h|`.
pub fn step_p2(bundle: &DerivativeBundle, config: &TensorStepConfig) -> Result<TensorStepResult> {
    config.validate(bundle)?;
    if config.p != 2 {
        return Err(Error::InvalidArgument("step_p2 requires p = 2".into()));
    }
    let model = StepModel::new(bundle, config);
    if model.shifted_gradient().iter().all(|v| *v == 0.0) {
        return Ok(degenerate(bundle, config));
    }
    let n = bundle.dim();
    let hess = bundle.hessian.as_ref().expect("order checked") + DMatrix::identity(n, n) * model.l;
    let (h, iters) = solve_cubic_regularized(&hess, model.shifted_gradient(), config.m)?;
    Ok(finish(bundle, &model, config, h, iters, StepStatus::Converged))
}

/// Quartic-regularized third-order step by damped Newton on the (convex)
/// model.
pub fn step_p3(bundle: &DerivativeBundle, config: &TensorStepConfig) -> Result<TensorStepResult> {
    config.validate(bundle)?;
    if config.p != 3 {
        return Err(Error::InvalidArgument("step_p3 requires p = 3".into()));
    }
    let model = StepModel::new(bundle, config);
    if model.shifted_gradient().iter().all(|v| *v == 0.0) {
        return Ok(degenerate(bundle, config));
    }
    let (h, iters, status) = quartic::minimize(&model, config);
    Ok(finish(bundle, &model, config, h, iters, status))
}

/// Dispatches on `config.p`.
pub fn tensor_step(bundle: &DerivativeBundle, config: &TensorStepConfig) -> Result<TensorStepResult> {
    match config.p {
        1 => step_p1(bundle, config),
        2 => step_p2(bundle, config),
        3 => step_p3(bundle, config),
        p => Err(Error::UnsupportedOrder {
            requested: p,
            supported: 3,
        }),
    }
}

/// Value of the full step objective at `y` (model plus prox term).
pub fn step_objective_value(bundle: &DerivativeBundle, config: &TensorStepConfig, y: &Point) -> Result<f64> {
    config.validate(bundle)?;
    let model = StepModel::new(bundle, config);
    Ok(model.value(&(y - &bundle.center)))
}

/// Gradient of the full step objective at `y`.
pub fn step_objective_gradient(
    bundle: &DerivativeBundle,
    config: &TensorStepConfig,
    y: &Point,
) -> Result<DVector<f64>> {
    config.validate(bundle)?;
    let model = StepModel::new(bundle, config);
    Ok(model.gradient(&(y - &bundle.center)))
}

/// Right-hand side of the step certificate:
/// `|grad F(y)| <= (p+1) M_p / p! |y - x|^p + inner_tol`.
pub fn certificate_bound(p: usize, m_p: f64, step_norm: f64, inner_tol: f64) -> f64 {
    (p + 1) as f64 * m_p / factorial(p) * step_norm.powi(p as i32) + inner_tol
}
