use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::oracle::{DerivativeBundle, Point, Problem, ThirdDerivative, UniformConvexity};

#[derive(Debug)]
struct ZeroThird;

impl ThirdDerivative for ZeroThird {
    fn along(&self, h: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(h.len())
    }

    fn matrix(&self, h: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(h.len(), h.len())
    }
}

/// `f(x) = x^T Q x / 2 + b^T x` with `Q` symmetric positive definite.
#[derive(Debug, Clone)]
pub struct Quadratic {
    q: DMatrix<f64>,
    b: DVector<f64>,
    lambda_max: f64,
    lambda_min: f64,
    /// Reported as `M_2` and `M_3`. Any positive number bounds the (zero)
    /// higher derivatives' variation.
    higher_order_bound: f64,
}

impl Quadratic {
    pub fn new(q: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if !q.is_square() || q.nrows() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: q.nrows(),
                got: b.len(),
            });
        }
        if (&q - q.transpose()).abs().max() > 1e-12 * q.abs().max().max(1.0) {
            return Err(Error::InvalidArgument("Q must be symmetric".into()));
        }
        let eig = q.clone().symmetric_eigen();
        let lambda_max = eig.eigenvalues.max();
        let lambda_min = eig.eigenvalues.min();
        if lambda_min <= 0.0 {
            return Err(Error::InvalidArgument("Q must be positive definite".into()));
        }
        Ok(Self {
            q,
            b,
            lambda_max,
            lambda_min,
            higher_order_bound: 1.0,
        })
    }

    /// `|x|^2 / 2`
    pub fn isotropic(n: usize) -> Self {
        Self::new(DMatrix::identity(n, n), DVector::zeros(n)).expect("identity is SPD")
    }

    pub fn with_higher_order_bound(mut self, bound: f64) -> Self {
        self.higher_order_bound = bound;
        self
    }
}

impl Problem for Quadratic {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn max_order(&self) -> usize {
        3
    }

    fn value(&self, x: &Point) -> f64 {
        0.5 * x.dot(&(&self.q * x)) + self.b.dot(x)
    }

    fn derivatives(&self, x: &Point, order: usize) -> DerivativeBundle {
        let qx = &self.q * x;
        DerivativeBundle {
            center: x.clone(),
            value: 0.5 * x.dot(&qx) + self.b.dot(x),
            gradient: qx + &self.b,
            hessian: (order >= 2).then(|| self.q.clone()),
            third: (order >= 3).then(|| Arc::new(ZeroThird) as Arc<dyn ThirdDerivative>),
            order,
        }
    }

    fn lipschitz(&self, p: usize) -> Option<f64> {
        match p {
            1 => Some(self.lambda_max),
            2 | 3 => Some(self.higher_order_bound),
            _ => None,
        }
    }

    fn minimizer(&self) -> Option<(Point, f64)> {
        let x = self.q.clone().cholesky()?.solve(&(-&self.b));
        let f = self.value(&x);
        Some((x, f))
    }

    fn uniform_convexity(&self) -> Option<UniformConvexity> {
        Some(UniformConvexity {
            q: 2.0,
            sigma: self.lambda_min,
        })
    }
}

/// `f(x) = sum x_i^4 / 4`: uniformly convex of degree 4 with modulus
/// `1 / (3n)`, third derivative Lipschitz with constant 6.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableQuartic {
    n: usize,
}

impl SeparableQuartic {
    pub fn new(n: usize) -> Self {
        Self { n }
    }
}

#[derive(Debug)]
struct QuarticThird {
    center: DVector<f64>,
}

impl ThirdDerivative for QuarticThird {
    fn along(&self, h: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(h.len(), |i, _| 6.0 * self.center[i] * h[i] * h[i])
    }

    fn matrix(&self, h: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_fn(h.len(), |i, _| 6.0 * self.center[i] * h[i]))
    }
}

impl Problem for SeparableQuartic {
    fn dim(&self) -> usize {
        self.n
    }

    fn max_order(&self) -> usize {
        3
    }

    fn value(&self, x: &Point) -> f64 {
        x.iter().map(|v| v.powi(4)).sum::<f64>() / 4.0
    }

    fn derivatives(&self, x: &Point, order: usize) -> DerivativeBundle {
        DerivativeBundle {
            center: x.clone(),
            value: self.value(x),
            gradient: x.map(|v| v.powi(3)),
            hessian: (order >= 2).then(|| DMatrix::from_diagonal(&x.map(|v| 3.0 * v * v))),
            third: (order >= 3).then(|| Arc::new(QuarticThird { center: x.clone() }) as Arc<dyn ThirdDerivative>),
            order,
        }
    }

    fn lipschitz(&self, p: usize) -> Option<f64> {
        (p == 3).then_some(6.0)
    }

    fn minimizer(&self) -> Option<(Point, f64)> {
        Some((DVector::zeros(self.n), 0.0))
    }

    fn uniform_convexity(&self) -> Option<UniformConvexity> {
        Some(UniformConvexity {
            q: 4.0,
            sigma: 1.0 / (3.0 * self.n as f64),
        })
    }
}
