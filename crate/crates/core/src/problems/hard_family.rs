use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::oracle::{DerivativeBundle, Point, Problem, ThirdDerivative};

/// `f(x) = eta_{p+1}(A_m x) - x_1` with `eta_{p+1}(u) = sum |u_i|^{p+1} / (p+1)`.
///
/// `A_m` is block diagonal: an upper-bidiagonal `U_m` (1 on the diagonal,
/// -1 on the superdiagonal) followed by an identity tail. It is only ever
/// applied as an O(n) operator.
#[derive(Debug, Clone, PartialEq)]
pub struct HardFamily {
    n: usize,
    m: usize,
    p: usize,
}

impl HardFamily {
    pub fn new(n: usize, m: usize, p: usize) -> Result<Self> {
        if m == 0 || m > n {
            return Err(Error::InvalidArgument(format!("block size m = {m} must satisfy 1 <= m <= n = {n}")));
        }
        if p == 0 {
            return Err(Error::InvalidArgument("p must be at least 1".into()));
        }
        Ok(Self { n, m, p })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// `A_m x`
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut u = x.clone();
        for i in 0..self.m - 1 {
            u[i] -= x[i + 1];
        }
        u
    }

    /// `A_m^T v`
    pub fn apply_transpose(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = v.clone();
        for i in 1..self.m {
            out[i] -= v[i - 1];
        }
        out
    }

    /// `A_m^T diag(d) A_m`, assembled densely.
    fn weighted_gram(&self, d: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.n, self.n);
        for k in 0..self.n {
            h[(k, k)] += d[k];
            if k + 1 < self.m {
                h[(k + 1, k + 1)] += d[k];
                h[(k, k + 1)] -= d[k];
                h[(k + 1, k)] -= d[k];
            }
        }
        h
    }

    /// Spectral norm of `A_m` by power iteration on `A^T A`.
    pub fn operator_norm_power_iteration(&self, max_iters: usize) -> f64 {
        let mut v = DVector::from_element(self.n, 1.0 / (self.n as f64).sqrt());
        let mut lambda = 0.0;
        for _ in 0..max_iters {
            let w = self.apply_transpose(&self.apply(&v));
            let next = v.dot(&w);
            let norm = w.norm();
            if norm == 0.0 {
                return 0.0;
            }
            v = w / norm;
            if (next - lambda).abs() <= 1e-15 * next {
                lambda = next;
                break;
            }
            lambda = next;
        }
        lambda.sqrt()
    }

    /// The minimizer follows from `A^T (|u|^p sign u) = e_1`: `u_i = 1` on the
    /// block and 0 on the tail, so `x_i = m - i` (0-based) inside the block.
    /// Used as an independent oracle in tests; the harness computes its own.
    pub fn closed_form_minimizer(&self) -> (Point, f64) {
        let x = DVector::from_fn(self.n, |i, _| if i < self.m { (self.m - i) as f64 } else { 0.0 });
        let p = self.p as f64;
        let f = self.m as f64 / (p + 1.0) - self.m as f64;
        (x, f)
    }
}

/// `M_p <= p! |A_m|^{p+1}`, using `|U_m|_2 = 2 cos(pi / (2m + 1))`.
pub fn hard_family_lipschitz(p: usize, m: usize) -> f64 {
    let norm = if m <= 1 {
        1.0
    } else {
        2.0 * (std::f64::consts::PI / (2 * m + 1) as f64).cos()
    };
    let fact: f64 = (1..=p).map(|i| i as f64).product();
    fact * norm.powi(p as i32 + 1)
}

#[derive(Debug)]
struct HardFamilyThird {
    family: HardFamily,
    weights: DVector<f64>,
}

impl ThirdDerivative for HardFamilyThird {
    fn along(&self, h: &DVector<f64>) -> DVector<f64> {
        let ah = self.family.apply(h);
        let inner = self.weights.component_mul(&ah).component_mul(&ah);
        self.family.apply_transpose(&inner)
    }

    fn matrix(&self, h: &DVector<f64>) -> DMatrix<f64> {
        let ah = self.family.apply(h);
        self.family.weighted_gram(&self.weights.component_mul(&ah))
    }
}

impl Problem for HardFamily {
    fn dim(&self) -> usize {
        self.n
    }

    fn max_order(&self) -> usize {
        3
    }

    fn value(&self, x: &Point) -> f64 {
        let p1 = self.p as i32 + 1;
        let u = self.apply(x);
        u.iter().map(|v| v.abs().powi(p1)).sum::<f64>() / p1 as f64 - x[0]
    }

    fn derivatives(&self, x: &Point, order: usize) -> DerivativeBundle {
        let p = self.p as i32;
        let u = self.apply(x);
        let value = u.iter().map(|v| v.abs().powi(p + 1)).sum::<f64>() / (p + 1) as f64 - x[0];
        let first = u.map(|v| v.abs().powi(p) * v.signum());
        let mut gradient = self.apply_transpose(&first);
        gradient[0] -= 1.0;
        let hessian = (order >= 2).then(|| {
            let w = u.map(|v| p as f64 * v.abs().powi(p - 1));
            self.weighted_gram(&w)
        });
        let third = (order >= 3).then(|| {
            let weights = if p < 2 {
                DVector::zeros(self.n)
            } else {
                u.map(|v| {
                    if v == 0.0 {
                        0.0
                    } else {
                        (p * (p - 1)) as f64 * v.abs().powi(p - 2) * v.signum()
                    }
                })
            };
            Arc::new(HardFamilyThird {
                family: self.clone(),
                weights,
            }) as Arc<dyn ThirdDerivative>
        });
        DerivativeBundle {
            center: x.clone(),
            value,
            gradient,
            hessian,
            third,
            order,
        }
    }

    fn lipschitz(&self, p: usize) -> Option<f64> {
        (p == self.p).then(|| hard_family_lipschitz(self.p, self.m))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dense_a(f: &HardFamily) -> DMatrix<f64> {
        let mut a = DMatrix::identity(f.n, f.n);
        for i in 0..f.m - 1 {
            a[(i, i + 1)] = -1.0;
        }
        a
    }

    #[test]
    fn value_and_gradient_at_origin() {
        let f = HardFamily::new(2, 2, 3).unwrap();
        let b = f.eval(&DVector::zeros(2), 3).unwrap();
        assert_eq!(b.value, 0.0);
        assert_eq!(b.gradient.as_slice(), &[-1.0, 0.0]);
        assert_eq!(b.hessian.unwrap().norm(), 0.0);
        let t = b.third.unwrap().along(&DVector::from_vec(vec![0.3, -0.7]));
        assert_eq!(t.norm(), 0.0);
    }

    #[test]
    fn value_and_gradient_at_ones() {
        let f = HardFamily::new(2, 2, 3).unwrap();
        let b = f.eval(&DVector::from_vec(vec![1.0, 1.0]), 1).unwrap();
        assert_relative_eq!(b.value, -0.75);
        assert_eq!(b.gradient.as_slice(), &[-1.0, 1.0]);
    }

    #[test]
    fn operator_matches_dense_matrix() {
        for (n, m) in [(1, 1), (3, 2), (5, 5), (8, 3), (8, 8)] {
            let f = HardFamily::new(n, m, 3).unwrap();
            let a = dense_a(&f);
            let x = DVector::from_fn(n, |i, _| (i as f64 * 0.7).sin() + 0.1);
            assert!((f.apply(&x) - &a * &x).norm() <= 1e-14);
            assert!((f.apply_transpose(&x) - a.transpose() * &x).norm() <= 1e-14);
            let d = DVector::from_fn(n, |i, _| 1.0 + i as f64);
            let gram = a.transpose() * DMatrix::from_diagonal(&d) * &a;
            assert!((f.weighted_gram(&d) - gram).norm() <= 1e-14);
        }
    }

    #[test]
    fn closed_form_minimizer_is_stationary() {
        for (n, m) in [(5, 5), (10, 4)] {
            let f = HardFamily::new(n, m, 3).unwrap();
            let (x, fstar) = f.closed_form_minimizer();
            assert!(f.gradient(&x).norm() < 1e-12);
            assert_relative_eq!(f.value(&x), fstar, max_relative = 1e-14);
        }
    }

    #[test]
    fn operator_norm_matches_closed_form() {
        for m in [2, 5, 10] {
            let f = HardFamily::new(m, m, 3).unwrap();
            let svd = dense_a(&f).singular_values();
            let exact = svd.max();
            let closed = 2.0 * (std::f64::consts::PI / (2 * m + 1) as f64).cos();
            assert_relative_eq!(exact, closed, max_relative = 1e-12);
            assert_relative_eq!(f.operator_norm_power_iteration(100_000), exact, max_relative = 1e-6);
        }
    }

    #[test]
    fn lipschitz_bound_values() {
        // A = I: third derivative of t^4/4 is 6t.
        assert_relative_eq!(hard_family_lipschitz(3, 1), 6.0);
        assert!(hard_family_lipschitz(3, 10) <= 96.0);
        // identity tail does not change the bound
        let tail = HardFamily::new(10, 4, 3).unwrap();
        let block = HardFamily::new(4, 4, 3).unwrap();
        assert_eq!(tail.lipschitz(3), block.lipschitz(3));
    }
}
