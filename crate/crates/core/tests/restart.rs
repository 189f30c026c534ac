use nalgebra::{DMatrix, DVector};
use tensoropt_core::oracle::{DerivativeBundle, Point, Problem};
use tensoropt_core::optimal::MethodConfig;
use tensoropt_core::problems::{Quadratic, SeparableQuartic};
use tensoropt_core::restart::{estimate_sigma_q, run_restarted, total_steps_bound, RestartSchedule};
use tensoropt_core::Error;

/// `f(x) = s <1, x>` (s = 0 linear, s < 0 paired with a concave term).
struct Curved {
    n: usize,
    curvature: f64,
}

impl Problem for Curved {
    fn dim(&self) -> usize {
        self.n
    }
    fn max_order(&self) -> usize {
        2
    }
    fn value(&self, x: &Point) -> f64 {
        x.sum() + 0.5 * self.curvature * x.norm_squared()
    }
    fn derivatives(&self, x: &Point, _order: usize) -> DerivativeBundle {
        DerivativeBundle {
            center: x.clone(),
            value: self.value(x),
            gradient: DVector::from_element(self.n, 1.0) + x * self.curvature,
            hessian: Some(DMatrix::identity(self.n, self.n) * self.curvature),
            third: None,
            order: 2,
        }
    }
    fn lipschitz(&self, _p: usize) -> Option<f64> {
        Some(1.0)
    }
}

#[test]
fn quadratic_gap_halves_every_stage() {
    let f = Quadratic::isotropic(3);
    let z0 = DVector::from_vec(vec![2.0, -1.0, 0.5]);
    let delta0 = f.value(&z0);
    let schedule = RestartSchedule::new(1, 2.0, 1.0, 1.0, delta0, delta0 * 2f64.powi(-20)).unwrap();
    assert_eq!(schedule.stages.len(), 20);
    assert!(schedule.stages.iter().all(|s| s.1 == 12));
    let trace = run_restarted(&f, &z0, schedule, &MethodConfig::new(1, 1.0), Some(0.0))
        .unwrap()
        .into_result()
        .unwrap();
    for s in &trace.stages {
        assert!(s.f_z <= delta0 * 2f64.powi(-(s.index as i32)));
    }
}

#[test]
fn separable_quartic_halving_and_step_budget() {
    let n = 4;
    let f = SeparableQuartic::new(n);
    let analytic = f.uniform_convexity().unwrap().sigma;
    let certified = estimate_sigma_q(&f, 4.0, 1.0, 2000, 17).unwrap();
    let sigma = analytic.min(certified);
    assert!(sigma > 0.0);

    let z0 = DVector::from_element(n, 1.0);
    let delta0 = 1.01 * f.value(&z0);
    let m3 = f.lipschitz(3).unwrap();
    let schedule = RestartSchedule::new(3, 4.0, m3, sigma, delta0, delta0 * 2f64.powi(-15)).unwrap();
    let n_k = schedule.stages[0].1;
    assert!(schedule.stages.iter().all(|s| s.1 == n_k));
    let trace = run_restarted(&f, &z0, schedule, &MethodConfig::new(3, m3), Some(0.0))
        .unwrap()
        .into_result()
        .unwrap();
    assert_eq!(trace.stages.len(), 15);
    for s in &trace.stages {
        let k = s.index;
        assert!(s.f_z <= delta0 * 2f64.powi(-(k as i32)));
        assert!(sigma / 4.0 * s.z.norm().powi(4) <= s.f_z * (1.0 + 1e-12));
        assert!(s.cumulative_steps as f64 <= total_steps_bound(3, m3, 4.0, sigma, delta0, k));
    }
}

#[test]
fn nothing_to_do_when_target_is_loose() {
    let f = Quadratic::isotropic(2);
    let z0 = DVector::from_vec(vec![1.0, 1.0]);
    let schedule = RestartSchedule::new(1, 2.0, 1.0, 1.0, 1.0, 1.0).unwrap();
    let trace = run_restarted(&f, &z0, schedule, &MethodConfig::new(1, 1.0), Some(0.0)).unwrap();
    assert!(trace.stages.is_empty());
    assert_eq!(trace.last_point(), &z0);
}

#[test]
fn overestimated_modulus_is_caught() {
    let f = Quadratic::isotropic(2);
    let z0 = DVector::from_vec(vec![3.0, -4.0]);
    let delta0 = f.value(&z0);
    // sigma = 1e6 promises one-step stages that cannot halve the gap
    let schedule = RestartSchedule::new(1, 2.0, 1.0, 1e6, delta0, 1e-6).unwrap();
    assert!(schedule.stages.iter().all(|s| s.1 == 1));
    let mut cfg = MethodConfig::new(1, 1.0);
    cfg.line_search.l_init = Some(1e3);
    let err = run_restarted(&f, &z0, schedule, &cfg, Some(0.0)).unwrap().into_result().unwrap_err();
    assert!(matches!(err, Error::StageRegression { stage: 1, .. }), "{err}");
}

#[test]
fn sigma_estimates() {
    let q = Quadratic::isotropic(5);
    assert!((estimate_sigma_q(&q, 2.0, 1.0, 1000, 1).unwrap() - 0.5).abs() < 1e-9);
    let linear = Curved { n: 3, curvature: 0.0 };
    assert!(estimate_sigma_q(&linear, 2.0, 1.0, 1000, 1).unwrap().abs() < 1e-12);
    let concave = Curved { n: 3, curvature: -1.0 };
    assert!(matches!(
        estimate_sigma_q(&concave, 2.0, 1.0, 1000, 1),
        Err(Error::NonConvexWitness { .. })
    ));
    let quartic = SeparableQuartic::new(10);
    let a = estimate_sigma_q(&quartic, 4.0, 1.0, 1000, 7).unwrap();
    let b = estimate_sigma_q(&quartic, 4.0, 1.0, 1000, 7).unwrap();
    assert!(a > 0.0);
    assert_eq!(a, b);
    assert!(estimate_sigma_q(&quartic, 4.0, 1.0, 999, 7).is_err());
}
