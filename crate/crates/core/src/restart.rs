//! Restarted optimal method for uniformly convex objectives: stages of fixed
//! length `N_k` chosen so that each stage halves the gap bound `Delta_k`.

use crate::error::{Error, Result};
use crate::optimal::{run, MethodConfig, RunTrace, StopCriteria};
use crate::oracle::{Point, Problem};
use crate::rng::SeededRng;
use crate::tensor_step::factorial;

/// `c = 2^{(3(p+1)^2 + 4)/4} (p+1) / p!`, the constant of the rate
/// `f(y^N) - f* <= c M_p R^{p+1} / N^{(3p+1)/2}`.
pub fn constant_c(p: usize) -> f64 {
    let e = (3 * (p + 1) * (p + 1) + 4) as f64 / 4.0;
    2f64.powf(e) * (p + 1) as f64 / factorial(p)
}

/// `N_k = max(ceil((2 c M_p q^{(p+1)/q} Delta_k^{(p+1-q)/q} / sigma^{(p+1)/q})^{2/(3p+1)}), 1)`.
pub fn stage_iterations(p: usize, m_p: f64, q: f64, sigma: f64, delta: f64) -> usize {
    let pp = (p + 1) as f64;
    let base = 2.0 * constant_c(p) * m_p * q.powf(pp / q) * delta.powf((pp - q) / q) / sigma.powf(pp / q);
    let n = base.powf(2.0 / (3 * p + 1) as f64).ceil();
    if n.is_finite() && n >= 1.0 {
        n as usize
    } else {
        1
    }
}

/// Bound on the number of method steps needed to produce `z_k`.
pub fn total_steps_bound(p: usize, m_p: f64, q: f64, sigma: f64, delta0: f64, k: usize) -> f64 {
    let pp = (p + 1) as f64;
    let r = (3 * p + 1) as f64;
    let c_tilde = (2.0 * constant_c(p) * q.powf(pp / q)).powf(2.0 / r);
    let e = 2.0 * (pp - q) / (q * r);
    let geometric: f64 = (0..=k).map(|i| 2f64.powf(-(i as f64) * e)).sum();
    c_tilde * m_p.powf(2.0 / r) / sigma.powf(2.0 * pp / (q * r)) * delta0.powf(e) * geometric + k as f64
}

#[derive(Debug, Clone)]
pub struct RestartSchedule {
    pub p: usize,
    pub q: f64,
    pub m_p: f64,
    pub sigma: f64,
    pub delta0: f64,
    /// `(Delta_k, N_k)` for every stage that is run.
    pub stages: Vec<(f64, usize)>,
}

impl RestartSchedule {
    /// Stages `k = 0, 1, ...` while `Delta_k > eps_target`.
    pub fn new(p: usize, q: f64, m_p: f64, sigma: f64, delta0: f64, eps_target: f64) -> Result<Self> {
        if !(2.0..=(p + 1) as f64).contains(&q) {
            return Err(Error::InvalidArgument(format!("need 2 <= q <= p+1, got q = {q}")));
        }
        if !(sigma > 0.0) || !(m_p > 0.0) || !(delta0 > 0.0) || !(eps_target > 0.0) {
            return Err(Error::InvalidArgument(
                "sigma, M_p, Delta_0 and the target must be positive".into(),
            ));
        }
        let mut stages = Vec::new();
        let mut delta = delta0;
        while delta > eps_target {
            stages.push((delta, stage_iterations(p, m_p, q, sigma, delta)));
            delta *= 0.5;
            if stages.len() > 2000 {
                return Err(Error::InvalidArgument("target needs more than 2000 stages".into()));
            }
        }
        Ok(Self {
            p,
            q,
            m_p,
            sigma,
            delta0,
            stages,
        })
    }
}

#[derive(Debug)]
pub struct StageRecord {
    /// `k + 1`: this stage produced `z_{k+1}`.
    pub index: usize,
    pub delta: f64,
    pub n_k: usize,
    pub z: Point,
    pub f_z: f64,
    /// Method steps taken to produce `z`.
    pub cumulative_steps: usize,
    pub run: RunTrace,
}

#[derive(Debug)]
pub struct RestartTrace {
    pub schedule: RestartSchedule,
    pub z0: Point,
    pub f0: f64,
    pub stages: Vec<StageRecord>,
    pub error: Option<Error>,
}

impl RestartTrace {
    pub fn last_point(&self) -> &Point {
        self.stages.last().map_or(&self.z0, |s| &s.z)
    }

    pub fn into_result(self) -> Result<Self> {
        match self.error {
            Some(e) => Err(e),
            None => Ok(self),
        }
    }
}

/// Runs every stage of `schedule` from `z0`. With `f_star` known, a stage
/// ending above `Delta_{k+1}` stops the run with `StageRegression`.
pub fn run_restarted(
    problem: &dyn Problem,
    z0: &Point,
    schedule: RestartSchedule,
    method: &MethodConfig,
    f_star: Option<f64>,
) -> Result<RestartTrace> {
    let f0 = problem.eval(z0, 1)?.value;
    let mut trace = RestartTrace {
        schedule,
        z0: z0.clone(),
        f0,
        stages: Vec::new(),
        error: None,
    };
    let mut z = z0.clone();
    let mut cumulative = 0;
    for (k, &(delta, n_k)) in trace.schedule.stages.clone().iter().enumerate() {
        let stage = run(problem, &z, method, &StopCriteria::iterations(n_k))?;
        if let Some(e) = &stage.error {
            trace.error = Some(Error::InnerFailure(format!("stage {k}: {e}")));
            trace.stages.push(stage_record(k, delta, n_k, cumulative, stage));
            return Ok(trace);
        }
        cumulative += stage.records.len();
        let record = stage_record(k, delta, n_k, cumulative, stage);
        z = record.z.clone();
        let f_z = record.f_z;
        trace.stages.push(record);
        if let Some(f_star) = f_star {
            let target = 0.5 * delta;
            let gap = f_z - f_star;
            if gap > target {
                trace.error = Some(Error::StageRegression {
                    stage: k + 1,
                    gap,
                    target,
                });
                return Ok(trace);
            }
        }
    }
    Ok(trace)
}

fn stage_record(k: usize, delta: f64, n_k: usize, cumulative: usize, run: RunTrace) -> StageRecord {
    StageRecord {
        index: k + 1,
        delta,
        n_k,
        z: run.last_point().clone(),
        f_z: run.last_value(),
        cumulative_steps: cumulative,
        run,
    }
}

pub const SIGMA_SAFETY: f64 = 0.5;

/// `0.5 * min q (f(y) - f(x) - <grad f(x), y - x>) / |y - x|^q` over `count`
/// pairs drawn uniformly from the box `[-radius, radius]^n`.
pub fn estimate_sigma_q(problem: &dyn Problem, q: f64, radius: f64, count: usize, seed: u64) -> Result<f64> {
    if count < 1000 {
        return Err(Error::InvalidArgument("need at least 1000 sample pairs".into()));
    }
    let n = problem.dim();
    let mut rng = SeededRng::new(seed);
    let mut inf = f64::INFINITY;
    for _ in 0..count {
        let x = rng.uniform_vector(n, -radius, radius);
        let y = rng.uniform_vector(n, -radius, radius);
        let d = &y - &x;
        let dist = d.norm();
        if dist == 0.0 {
            continue;
        }
        let b = problem.eval(&x, 1)?;
        let bregman = problem.value(&y) - b.value - b.gradient.dot(&d);
        let ratio = q * bregman / dist.powf(q);
        if ratio < -1e-10 {
            return Err(Error::NonConvexWitness { ratio });
        }
        inf = inf.min(ratio);
    }
    Ok(SIGMA_SAFETY * inf.max(0.0))
}
