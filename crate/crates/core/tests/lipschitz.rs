use tensoropt_core::oracle::{sampled_lipschitz_ratio, Problem};
use tensoropt_core::problems::{synth_logreg, HardFamily, Quadratic, SeparableQuartic};

fn check(problem: &dyn Problem, radius: f64) {
    for p in 1..=problem.max_order() {
        if problem.lipschitz(p).is_some() {
            let ratio = sampled_lipschitz_ratio(problem, p, 10_000, radius, p as u64).unwrap();
            assert!(ratio <= 1.0 + 1e-6, "order {p}: ratio {ratio}");
        }
    }
}

#[test]
fn analytic_bounds_hold_on_samples() {
    check(&HardFamily::new(10, 10, 3).unwrap(), 2.0);
    check(&HardFamily::new(6, 4, 2).unwrap(), 2.0);
    check(&HardFamily::new(6, 6, 1).unwrap(), 2.0);
    check(&SeparableQuartic::new(5), 3.0);
    check(&Quadratic::isotropic(4), 3.0);
    check(&synth_logreg(10, 100, 4).unwrap(), 3.0);
}

#[test]
fn bounds_are_not_vacuous() {
    // sampling should get within a modest factor of the scalar bound
    let ratio = sampled_lipschitz_ratio(&SeparableQuartic::new(1), 3, 10_000, 3.0, 9).unwrap();
    assert!(ratio > 0.5, "{ratio}");
}
