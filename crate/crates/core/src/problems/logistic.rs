use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::oracle::{DerivativeBundle, Point, Problem, ThirdDerivative};
use crate::rng::SeededRng;

/// Unregularized logistic loss `(1/d) sum_i ln(1 + exp(-y_i <w_i, x>))`.
#[derive(Debug, Clone)]
pub struct LogisticRegression {
    /// d x n, one sample per row.
    features: Arc<DMatrix<f64>>,
    /// entries in {-1, +1}
    labels: DVector<f64>,
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^{-t})` without overflow.
fn softplus_neg(t: f64) -> f64 {
    (-t).max(0.0) + (-t.abs()).exp().ln_1p()
}

impl LogisticRegression {
    pub fn new(features: DMatrix<f64>, labels: DVector<f64>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.nrows(),
                got: labels.len(),
            });
        }
        if features.nrows() == 0 || features.ncols() == 0 {
            return Err(Error::InvalidArgument("empty dataset".into()));
        }
        if let Some(bad) = labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
            return Err(Error::LabelDomain(format!("label {bad} not in {{-1, +1}}")));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("features"));
        }
        Ok(Self {
            features: Arc::new(features),
            labels,
        })
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &DVector<f64> {
        &self.labels
    }

    pub fn samples(&self) -> usize {
        self.features.nrows()
    }

    fn margins(&self, x: &Point) -> DVector<f64> {
        (self.features.as_ref() * x).component_mul(&self.labels)
    }
}

#[derive(Debug)]
struct LogisticThird {
    features: Arc<DMatrix<f64>>,
    /// `phi'''(t_i) y_i / d`
    coeffs: DVector<f64>,
}

impl ThirdDerivative for LogisticThird {
    fn along(&self, h: &DVector<f64>) -> DVector<f64> {
        let wh = self.features.as_ref() * h;
        let c = self.coeffs.component_mul(&wh).component_mul(&wh);
        self.features.tr_mul(&c)
    }

    fn matrix(&self, h: &DVector<f64>) -> DMatrix<f64> {
        let wh = self.features.as_ref() * h;
        let c = self.coeffs.component_mul(&wh);
        let scaled = DMatrix::from_fn(self.features.nrows(), self.features.ncols(), |i, j| {
            self.features[(i, j)] * c[i]
        });
        self.features.tr_mul(&scaled)
    }
}

impl Problem for LogisticRegression {
    fn dim(&self) -> usize {
        self.features.ncols()
    }

    fn max_order(&self) -> usize {
        3
    }

    fn value(&self, x: &Point) -> f64 {
        let t = self.margins(x);
        t.iter().map(|&ti| softplus_neg(ti)).sum::<f64>() / self.samples() as f64
    }

    fn derivatives(&self, x: &Point, order: usize) -> DerivativeBundle {
        let d = self.samples() as f64;
        let t = self.margins(x);
        let s = t.map(sigmoid);
        let value = t.iter().map(|&ti| softplus_neg(ti)).sum::<f64>() / d;
        // phi'(t) = s - 1 = -sigmoid(-t)
        let first = DVector::from_fn(t.len(), |i, _| -sigmoid(-t[i]) * self.labels[i] / d);
        let gradient = self.features.tr_mul(&first);
        let hessian = (order >= 2).then(|| {
            let w = s.map(|si| si * (1.0 - si) / d);
            let scaled = DMatrix::from_fn(self.features.nrows(), self.features.ncols(), |i, j| {
                self.features[(i, j)] * w[i]
            });
            self.features.tr_mul(&scaled)
        });
        let third = (order >= 3).then(|| {
            let coeffs = DVector::from_fn(t.len(), |i, _| {
                let si = s[i];
                si * (1.0 - si) * (1.0 - 2.0 * si) * self.labels[i] / d
            });
            Arc::new(LogisticThird {
                features: Arc::clone(&self.features),
                coeffs,
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
        logreg_lipschitz(self, p)
    }
}

/// Bounds from `sup |phi''| = 1/4`, `sup |phi'''| = 1/(6 sqrt 3)`,
/// `sup |phi''''| = 1/8`: `M_p <= sup|phi^{(p+1)}| / d * sum |w_i|^{p+1}`.
pub fn logreg_lipschitz(problem: &LogisticRegression, p: usize) -> Option<f64> {
    let sup = match p {
        1 => 0.25,
        2 => 1.0 / (6.0 * 3f64.sqrt()),
        3 => 0.125,
        _ => return None,
    };
    let d = problem.samples() as f64;
    let total: f64 = problem
        .features
        .row_iter()
        .map(|w| w.norm().powi(p as i32 + 1))
        .sum();
    Some(sup * total / d)
}

/// Synthetic separable data: `x_hat` and every feature uniform on [-1, 1],
/// `y_i = sign(<w_i, x_hat>)` with ties labelled +1.
///
/// Draw order from [`SeededRng`]: the n entries of `x_hat`, then the samples
/// row by row.
pub fn synth_logreg_with_truth(n: usize, d: usize, seed: u64) -> Result<(LogisticRegression, DVector<f64>)> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument("n and d must be positive".into()));
    }
    let mut rng = SeededRng::new(seed);
    let x_hat = rng.uniform_vector(n, -1.0, 1.0);
    let mut features = DMatrix::zeros(d, n);
    for i in 0..d {
        for j in 0..n {
            features[(i, j)] = rng.uniform(-1.0, 1.0);
        }
    }
    let labels = (&features * &x_hat).map(|v| if v < 0.0 { -1.0 } else { 1.0 });
    Ok((LogisticRegression::new(features, labels)?, x_hat))
}

pub fn synth_logreg(n: usize, d: usize, seed: u64) -> Result<LogisticRegression> {
    synth_logreg_with_truth(n, d, seed).map(|(p, _)| p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn single(t_scale: f64) -> LogisticRegression {
        LogisticRegression::new(
            DMatrix::from_row_slice(1, 2, &[t_scale, 0.0]),
            DVector::from_vec(vec![1.0]),
        )
        .unwrap()
    }

    #[test]
    fn value_at_origin_is_ln2() {
        let p = synth_logreg(10, 100, 3).unwrap();
        let b = p.eval(&DVector::zeros(10), 1).unwrap();
        assert_relative_eq!(b.value, std::f64::consts::LN_2, max_relative = 1e-15);
        let expected = p.features().tr_mul(p.labels()) * (-0.5 / 100.0);
        assert!((b.gradient - expected).norm() < 1e-15);
    }

    #[test]
    fn single_sample_matches_definition() {
        let p = single(1.0);
        for t in [-2.0, 0.0, 2.0] {
            let v = p.value(&DVector::from_vec(vec![t, 0.0]));
            assert_relative_eq!(v, (1.0 + (-t as f64).exp()).ln(), max_relative = 1e-14);
        }
    }

    #[test]
    fn stable_for_extreme_margins() {
        let p = single(1.0);
        for t in [-800.0, -40.0, 40.0, 800.0] {
            let b = p.eval(&DVector::from_vec(vec![t, 0.0]), 3).unwrap();
            assert!(b.value.is_finite() && b.value >= 0.0);
        }
        let big = p.value(&DVector::from_vec(vec![-800.0, 0.0]));
        assert_relative_eq!(big, 800.0, max_relative = 1e-14);
    }

    #[test]
    fn lipschitz_single_sample() {
        let p = single(1.0);
        assert_relative_eq!(logreg_lipschitz(&p, 2).unwrap(), 1.0 / (6.0 * 3f64.sqrt()));
        assert_relative_eq!(logreg_lipschitz(&p, 3).unwrap(), 0.125);
        let doubled = single(2.0);
        assert_relative_eq!(
            logreg_lipschitz(&doubled, 3).unwrap(),
            16.0 * logreg_lipschitz(&p, 3).unwrap()
        );
    }

    #[test]
    fn sup_of_phi_derivatives_by_dense_grid() {
        // phi''' and phi'''' as functions of s = sigmoid(t)
        let mut m3: f64 = 0.0;
        let mut m4: f64 = 0.0;
        for i in 0..=200_000 {
            let t = -20.0 + 40.0 * i as f64 / 200_000.0;
            let s = sigmoid(t);
            m3 = m3.max((s * (1.0 - s) * (1.0 - 2.0 * s)).abs());
            m4 = m4.max((s * (1.0 - s) * (1.0 - 6.0 * s + 6.0 * s * s)).abs());
        }
        assert_relative_eq!(m3, 1.0 / (6.0 * 3f64.sqrt()), max_relative = 1e-6);
        assert_relative_eq!(m4, 0.125, max_relative = 1e-9);
    }

    #[test]
    fn synthetic_is_deterministic_and_separable() {
        let (a, x_hat) = synth_logreg_with_truth(10, 100, 42).unwrap();
        let b = synth_logreg(10, 100, 42).unwrap();
        assert_eq!(a.features(), b.features());
        assert_eq!(a.labels(), b.labels());
        let margins = (a.features() * &x_hat).component_mul(a.labels());
        assert!(margins.iter().all(|&m| m >= 0.0));
        assert!(a.features().iter().all(|v| (-1.0..1.0).contains(v)));
    }

    #[test]
    fn rejects_bad_labels() {
        let err = LogisticRegression::new(DMatrix::zeros(1, 1), DVector::from_vec(vec![0.0])).unwrap_err();
        assert!(matches!(err, Error::LabelDomain(_)));
    }
}
