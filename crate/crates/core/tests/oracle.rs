use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use tensoropt_core::oracle::{finite_diff_report, taylor_model_gradient, taylor_model_value, DerivativeBundle, Problem};
use tensoropt_core::problems::{synth_logreg, HardFamily, Quadratic, SeparableQuartic};
use tensoropt_core::rng::SeededRng;
use tensoropt_core::Error;

fn one(v: f64) -> DVector<f64> {
    DVector::from_vec(vec![v])
}

fn square_bundle(x: f64) -> DerivativeBundle {
    DerivativeBundle {
        center: one(x),
        value: x * x,
        gradient: one(2.0 * x),
        hessian: Some(DMatrix::from_element(1, 1, 2.0)),
        third: None,
        order: 2,
    }
}

#[test]
fn taylor_model_of_exact_polynomials() {
    let b = square_bundle(1.0);
    assert_eq!(taylor_model_value(&b, &one(3.0), 2, 0.0).unwrap(), 9.0);
    assert_eq!(taylor_model_gradient(&b, &one(3.0), 2, 0.0).unwrap()[0], 6.0);

    let q = SeparableQuartic::new(1);
    let b = q.eval(&one(1.0), 3).unwrap();
    let v = taylor_model_value(&b, &one(2.0), 3, 0.0).unwrap();
    assert!((v - 3.75).abs() < 1e-14);
}

#[test]
fn model_at_center_is_the_bundle() {
    let f = HardFamily::new(4, 3, 3).unwrap();
    let x = DVector::from_vec(vec![0.3, -0.7, 1.1, 0.2]);
    let b = f.eval(&x, 3).unwrap();
    for p in 1..=3 {
        assert_eq!(taylor_model_value(&b, &x, p, 5.0).unwrap(), b.value);
        assert_eq!(taylor_model_gradient(&b, &x, p, 5.0).unwrap(), b.gradient);
    }
}

#[test]
fn model_order_checks() {
    let b = square_bundle(1.0);
    assert!(matches!(
        taylor_model_value(&b, &one(0.0), 3, 0.0),
        Err(Error::UnsupportedOrder { requested: 3, supported: 2 })
    ));
    assert!(taylor_model_gradient(&b, &DVector::zeros(2), 2, 0.0).is_err());
}

#[test]
fn quartic_model_gradient_by_differences() {
    let q = SeparableQuartic::new(1);
    let b = q.eval(&one(1.0), 3).unwrap();
    let g = taylor_model_gradient(&b, &one(2.0), 3, 6.0).unwrap()[0];
    let step = 1e-6;
    let fd = (taylor_model_value(&b, &one(2.0 + step), 3, 6.0).unwrap()
        - taylor_model_value(&b, &one(2.0 - step), 3, 6.0).unwrap())
        / (2.0 * step);
    // 1 + 3 + 3 from the Taylor part, M/3! |h|^2 h = 1 from the regularizer
    assert!((g - 8.0).abs() < 1e-13);
    assert!((g - fd).abs() / g.abs() < 1e-6);
}

#[test]
fn eval_rejects_bad_input() {
    let f = Quadratic::isotropic(2);
    assert!(matches!(f.eval(&DVector::zeros(2), 4), Err(Error::UnsupportedOrder { .. })));
    assert!(matches!(f.eval(&DVector::zeros(3), 1), Err(Error::DimensionMismatch { .. })));
    assert!(matches!(
        f.eval(&DVector::from_vec(vec![f64::NAN, 0.0]), 1),
        Err(Error::NonFinite(_))
    ));
}

#[test]
fn logistic_finite_differences() {
    let f = synth_logreg(10, 100, 1).unwrap();
    let mut rng = SeededRng::new(2);
    let x = rng.uniform_vector(10, -1.0, 1.0);
    let r = finite_diff_report(&f, &x, 3, 1e-5, 3).unwrap();
    assert!(r.max_error() <= 1e-5, "{r:?}");
}

#[test]
fn quadratic_hessian_differences_are_exact() {
    let f = Quadratic::isotropic(4);
    let x = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
    let r = finite_diff_report(&f, &x, 2, 1e-5, 0).unwrap();
    assert!(r.hessian_vector.unwrap() <= 1e-10, "{r:?}");
}

#[test]
fn hard_family_third_differences() {
    let f = HardFamily::new(5, 5, 3).unwrap();
    let mut rng = SeededRng::new(4);
    let x = rng.uniform_vector(5, -1.0, 1.0);
    let r = finite_diff_report(&f, &x, 3, 1e-5, 5).unwrap();
    assert!(r.third_directional.unwrap() <= 1e-4, "{r:?}");
}

fn all_problems() -> Vec<Box<dyn Problem>> {
    vec![
        Box::new(HardFamily::new(6, 4, 3).unwrap()),
        Box::new(HardFamily::new(5, 5, 2).unwrap()),
        Box::new(HardFamily::new(4, 4, 1).unwrap()),
        Box::new(SeparableQuartic::new(5)),
        Box::new(synth_logreg(6, 40, 8).unwrap()),
        Box::new(Quadratic::isotropic(3)),
    ]
}

#[test]
fn all_problems_agree_with_differences() {
    let mut rng = SeededRng::new(99);
    for f in all_problems() {
        for k in 0..100 {
            let x = rng.uniform_vector(f.dim(), -1.5, 1.5);
            let r = finite_diff_report(f.as_ref(), &x, 3, 1e-5, k).unwrap();
            assert!(r.gradient <= 1e-5, "{r:?}");
            assert!(r.hessian_vector.unwrap_or(0.0) <= 1e-4, "{r:?}");
            assert!(r.third_directional.unwrap_or(0.0) <= 1e-4, "{r:?}");
        }
    }
}

#[test]
fn bundle_invariants() {
    let mut rng = SeededRng::new(7);
    for f in all_problems() {
        let x = rng.uniform_vector(f.dim(), -1.0, 1.0);
        let b = f.eval(&x, 3.min(f.max_order())).unwrap();
        let h = b.hessian.as_ref().unwrap();
        assert!((h - h.transpose()).amax() <= 1e-12 * h.amax().max(1.0));
        if let Some(t) = &b.third {
            let d = rng.unit_direction(f.dim());
            let base = t.along(&d);
            let scaled = t.along(&(&d * 2.5));
            assert!((scaled - &base * 6.25).norm() <= 1e-10 * base.norm().max(1e-300) * 6.25);
            let mat = t.matrix(&d);
            assert!((mat * &d - base).norm() <= 1e-8 * t.along(&d).norm().max(1.0));
        }
    }
}

proptest! {
    #[test]
    fn model_reproduces_cubic_polynomials(c in prop::array::uniform4(-3.0f64..3.0), x in -2.0f64..2.0, y in -2.0f64..2.0) {
        // f(t) = c0 + c1 t + c2 t^2 + c3 t^3 written as a bundle at x
        #[derive(Debug)]
        struct Const(f64);
        impl tensoropt_core::oracle::ThirdDerivative for Const {
            fn along(&self, h: &DVector<f64>) -> DVector<f64> {
                h.map(|v| self.0 * v * v)
            }
        }
        let f = |t: f64| c[0] + c[1] * t + c[2] * t * t + c[3] * t.powi(3);
        let b = DerivativeBundle {
            center: one(x),
            value: f(x),
            gradient: one(c[1] + 2.0 * c[2] * x + 3.0 * c[3] * x * x),
            hessian: Some(DMatrix::from_element(1, 1, 2.0 * c[2] + 6.0 * c[3] * x)),
            third: Some(std::sync::Arc::new(Const(6.0 * c[3]))),
            order: 3,
        };
        let v = taylor_model_value(&b, &one(y), 3, 0.0).unwrap();
        prop_assert!((v - f(y)).abs() <= 1e-10 * f(y).abs().max(1.0));
    }

    #[test]
    fn model_gradient_matches_differences(seed in any::<u64>(), p in 1usize..=3, m in 0.0f64..10.0) {
        let f = HardFamily::new(4, 3, 3).unwrap();
        let mut rng = SeededRng::new(seed);
        let x = rng.uniform_vector(4, -1.0, 1.0);
        let y = rng.uniform_vector(4, -1.0, 1.0);
        let b = f.eval(&x, 3).unwrap();
        let g = taylor_model_gradient(&b, &y, p, m).unwrap();
        let step = 1e-6;
        let mut fd = DVector::zeros(4);
        for i in 0..4 {
            let mut yp = y.clone();
            yp[i] += step;
            let mut ym = y.clone();
            ym[i] -= step;
            fd[i] = (taylor_model_value(&b, &yp, p, m).unwrap() - taylor_model_value(&b, &ym, p, m).unwrap()) / (2.0 * step);
        }
        prop_assert!((&fd - &g).norm() <= 1e-6 * g.norm().max(1.0));
    }
}
