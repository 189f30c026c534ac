//! Problem oracles: exact derivatives up to third order, the regularized
//! Taylor model built from them, and a finite-difference audit.
//!
//! Third derivatives are only ever exposed through the directional map
//! `h -> D3f(x)[h, h]` (and the matrix `D3f(x)[h]` derived from it), so a
//! bundle costs O(n^2) memory regardless of order.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub type Point = DVector<f64>;

/// Third-order derivative data at a fixed point.
pub trait ThirdDerivative: Send + Sync + fmt::Debug {
    /// `D3f(x)[h, h]`, a vector of length n.
    fn along(&self, h: &DVector<f64>) -> DVector<f64>;

    /// `D3f(x)[h]` as a symmetric n x n matrix.
    ///
    /// The default recovers columns by polarization of [`along`](Self::along):
    /// `D3f[h, v] = (D3f[h + v, h + v] - D3f[h - v, h - v]) / 4` with `v` a
    /// coordinate vector scaled to `|h|`.
    fn matrix(&self, h: &DVector<f64>) -> DMatrix<f64> {
        let n = h.len();
        let scale = h.norm().max(f64::MIN_POSITIVE.sqrt());
        let mut out = DMatrix::zeros(n, n);
        let mut shifted = h.clone();
        for j in 0..n {
            shifted[j] = h[j] + scale;
            let plus = self.along(&shifted);
            shifted[j] = h[j] - scale;
            let minus = self.along(&shifted);
            shifted[j] = h[j];
            out.set_column(j, &((plus - minus) / (4.0 * scale)));
        }
        // symmetrize away rounding
        (&out + out.transpose()) * 0.5
    }
}

/// Value and derivatives of f at `center`, up to `order`.
#[derive(Clone)]
pub struct DerivativeBundle {
    pub center: Point,
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: Option<DMatrix<f64>>,
    pub third: Option<Arc<dyn ThirdDerivative>>,
    pub order: usize,
}

impl fmt::Debug for DerivativeBundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DerivativeBundle")
            .field("center", &self.center.as_slice())
            .field("value", &self.value)
            .field("gradient", &self.gradient.as_slice())
            .field("order", &self.order)
            .finish_non_exhaustive()
    }
}

impl DerivativeBundle {
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn third_dir(&self, h: &DVector<f64>) -> Option<DVector<f64>> {
        self.third.as_ref().map(|t| t.along(h))
    }

    fn require(&self, order: usize) -> Result<()> {
        if self.order < order {
            return Err(Error::UnsupportedOrder {
                requested: order,
                supported: self.order,
            });
        }
        Ok(())
    }

    fn check_finite(&self) -> Result<()> {
        if !self.value.is_finite() {
            return Err(Error::NonFinite("value"));
        }
        if self.gradient.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gradient"));
        }
        if let Some(h) = &self.hessian {
            if h.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("hessian"));
            }
        }
        Ok(())
    }
}

/// Uniform convexity of degree `q` with modulus `sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformConvexity {
    pub q: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub dimension: usize,
    pub max_order: usize,
    /// `(p, M_p)` pairs for the orders the problem can bound.
    pub lipschitz: Vec<(usize, f64)>,
    pub minimizer: Option<(Point, f64)>,
    pub uniform_convexity: Option<UniformConvexity>,
}

impl ProblemSpec {
    pub fn lipschitz(&self, p: usize) -> Option<f64> {
        self.lipschitz.iter().find(|(q, _)| *q == p).map(|(_, m)| *m)
    }

    /// Checks the assumptions a method of order `p` relies on.
    pub fn validate_for(&self, p: usize) -> Result<()> {
        if p == 0 || p > self.max_order {
            return Err(Error::UnsupportedOrder {
                requested: p,
                supported: self.max_order,
            });
        }
        match self.lipschitz(p) {
            Some(m) if m > 0.0 && m.is_finite() => {}
            Some(m) => return Err(Error::InvalidArgument(format!("M_{p} = {m} must be positive"))),
            None => return Err(Error::InvalidArgument(format!("no Lipschitz bound for order {p}"))),
        }
        if let Some(uc) = self.uniform_convexity {
            if !(uc.q >= 2.0 && uc.q <= p as f64 + 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "uniform convexity degree q = {} outside [2, {}]",
                    uc.q,
                    p + 1
                )));
            }
            if !(uc.sigma > 0.0) {
                return Err(Error::InvalidArgument("sigma_q must be positive".into()));
            }
        }
        Ok(())
    }
}

/// A smooth convex objective with analytic derivatives.
pub trait Problem: Send + Sync {
    fn dim(&self) -> usize;
    fn max_order(&self) -> usize;
    fn value(&self, x: &Point) -> f64;
    /// Unchecked evaluation; `order` is already validated.
    fn derivatives(&self, x: &Point, order: usize) -> DerivativeBundle;
    fn lipschitz(&self, p: usize) -> Option<f64>;

    fn minimizer(&self) -> Option<(Point, f64)> {
        None
    }

    fn uniform_convexity(&self) -> Option<UniformConvexity> {
        None
    }

    fn gradient(&self, x: &Point) -> DVector<f64> {
        self.derivatives(x, 1).gradient
    }

    fn spec(&self) -> ProblemSpec {
        ProblemSpec {
            dimension: self.dim(),
            max_order: self.max_order(),
            lipschitz: (1..=self.max_order())
                .filter_map(|p| self.lipschitz(p).map(|m| (p, m)))
                .collect(),
            minimizer: self.minimizer(),
            uniform_convexity: self.uniform_convexity(),
        }
    }

    fn eval(&self, x: &Point, order: usize) -> Result<DerivativeBundle> {
        if order == 0 || order > self.max_order() {
            return Err(Error::UnsupportedOrder {
                requested: order,
                supported: self.max_order(),
            });
        }
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("point"));
        }
        let bundle = self.derivatives(x, order);
        bundle.check_finite()?;
        Ok(bundle)
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Value of the regularized Taylor model
/// `sum_{r<=p} D^r f(x)[h]^r / r! + M/(p+1)! |h|^{p+1}` with `h = y - x`.
pub fn taylor_model_value(bundle: &DerivativeBundle, y: &Point, p: usize, m: f64) -> Result<f64> {
    check_model_args(bundle, y, p)?;
    let h = y - &bundle.center;
    let mut v = bundle.value + bundle.gradient.dot(&h);
    if p >= 2 {
        let hh = bundle.hessian.as_ref().expect("order checked") * &h;
        v += 0.5 * h.dot(&hh);
    }
    if p >= 3 {
        let t = bundle.third_dir(&h).expect("order checked");
        v += h.dot(&t) / 6.0;
    }
    let r = h.norm();
    Ok(v + m / factorial(p + 1) * r.powi(p as i32 + 1))
}

/// Gradient of [`taylor_model_value`] with respect to `y`.
pub fn taylor_model_gradient(
    bundle: &DerivativeBundle,
    y: &Point,
    p: usize,
    m: f64,
) -> Result<DVector<f64>> {
    check_model_args(bundle, y, p)?;
    let h = y - &bundle.center;
    let mut g = bundle.gradient.clone();
    if p >= 2 {
        g += bundle.hessian.as_ref().expect("order checked") * &h;
    }
    if p >= 3 {
        g += bundle.third_dir(&h).expect("order checked") * 0.5;
    }
    let r = h.norm();
    if r > 0.0 {
        g += &h * (m / factorial(p) * r.powi(p as i32 - 1));
    }
    Ok(g)
}

fn check_model_args(bundle: &DerivativeBundle, y: &Point, p: usize) -> Result<()> {
    if !(1..=3).contains(&p) {
        return Err(Error::UnsupportedOrder {
            requested: p,
            supported: 3,
        });
    }
    bundle.require(p)?;
    if y.len() != bundle.dim() {
        return Err(Error::DimensionMismatch {
            expected: bundle.dim(),
            got: y.len(),
        });
    }
    Ok(())
}

/// Worst relative disagreement between analytic and central-difference
/// derivatives. Errors use `max(1, |exact|)` as the denominator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteDiffReport {
    pub gradient: f64,
    pub hessian_vector: Option<f64>,
    pub third_directional: Option<f64>,
}

impl FiniteDiffReport {
    pub fn max_error(&self) -> f64 {
        self.gradient
            .max(self.hessian_vector.unwrap_or(0.0))
            .max(self.third_directional.unwrap_or(0.0))
    }
}

const FD_DIRECTIONS: usize = 4;

fn relative(approx: &DVector<f64>, exact: &DVector<f64>) -> f64 {
    (approx - exact).norm() / exact.norm().max(1.0)
}

pub fn finite_diff_report(
    problem: &dyn Problem,
    x: &Point,
    order: usize,
    step: f64,
    seed: u64,
) -> Result<FiniteDiffReport> {
    if !(step > 0.0) {
        return Err(Error::InvalidArgument("finite-difference step must be positive".into()));
    }
    let order = order.min(problem.max_order()).min(3);
    let bundle = problem.eval(x, order.max(1))?;
    let n = x.len();

    let mut fd_grad = DVector::zeros(n);
    let mut probe = x.clone();
    for i in 0..n {
        probe[i] = x[i] + step;
        let fp = problem.value(&probe);
        probe[i] = x[i] - step;
        let fm = problem.value(&probe);
        probe[i] = x[i];
        fd_grad[i] = (fp - fm) / (2.0 * step);
    }
    let gradient = relative(&fd_grad, &bundle.gradient);

    let mut rng = SeededRng::new(seed);
    let mut hessian_vector = None;
    let mut third_directional = None;
    if order >= 2 {
        let hess = bundle.hessian.as_ref().expect("order 2 bundle");
        let mut worst: f64 = 0.0;
        for _ in 0..FD_DIRECTIONS {
            let v = rng.unit_direction(n);
            let gp = problem.gradient(&(x + &v * step));
            let gm = problem.gradient(&(x - &v * step));
            let approx = (gp - gm) / (2.0 * step);
            worst = worst.max(relative(&approx, &(hess * &v)));
        }
        hessian_vector = Some(worst);
    }
    if order >= 3 {
        let mut worst: f64 = 0.0;
        for _ in 0..FD_DIRECTIONS {
            let h = rng.unit_direction(n);
            let hp = problem.derivatives(&(x + &h * step), 2).hessian.expect("order 2");
            let hm = problem.derivatives(&(x - &h * step), 2).hessian.expect("order 2");
            let approx = (hp - hm) * &h / (2.0 * step);
            let exact = bundle.third_dir(&h).expect("order 3 bundle");
            worst = worst.max(relative(&approx, &exact));
        }
        third_directional = Some(worst);
    }
    Ok(FiniteDiffReport {
        gradient,
        hessian_vector,
        third_directional,
    })
}

/// Largest observed `|D^p f(x) - D^p f(y)| / (M_p |x - y|)` over `count`
/// pairs from `[-radius, radius]^n`. The p-th derivative difference is probed
/// along a random unit direction and along `y - x` (a lower estimate of the
/// operator norm), so a value above 1 disproves the bound `M_p`.
pub fn sampled_lipschitz_ratio(problem: &dyn Problem, p: usize, count: usize, radius: f64, seed: u64) -> Result<f64> {
    let m_p = problem.lipschitz(p).ok_or(Error::UnsupportedOrder {
        requested: p,
        supported: problem.max_order(),
    })?;
    let n = problem.dim();
    let mut rng = SeededRng::new(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let x = rng.uniform_vector(n, -radius, radius);
        let y = rng.uniform_vector(n, -radius, radius);
        let dist = (&y - &x).norm();
        if dist == 0.0 {
            continue;
        }
        let bx = problem.eval(&x, p)?;
        let by = problem.eval(&y, p)?;
        let dirs = [rng.unit_direction(n), (&y - &x) / dist];
        let diff = match p {
            1 => (&bx.gradient - &by.gradient).norm(),
            2 => {
                let d = bx.hessian.as_ref().expect("order 2") - by.hessian.as_ref().expect("order 2");
                dirs.iter().map(|h| (&d * h).norm()).fold(0.0, f64::max)
            }
            _ => dirs
                .iter()
                .map(|h| {
                    let tx = bx.third_dir(h).expect("order 3");
                    let ty = by.third_dir(h).expect("order 3");
                    (tx - ty).dot(h).abs()
                })
                .fold(0.0, f64::max),
        };
        worst = worst.max(diff / (m_p * dist));
    }
    Ok(worst)
}
