//! The CLI subcommands as library functions returning structured outcomes.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use tensoropt_core::baselines;
use tensoropt_core::hpe::{evaluate_theory, TheoryReport, TheoryStep};
use tensoropt_core::optimal::{self, normalized_gap, StopCriteria, Termination};
use tensoropt_core::oracle::Problem;
use tensoropt_core::problems::{load_libsvm, synth_logreg, write_libsvm, Dataset};
use tensoropt_core::restart::{constant_c, estimate_sigma_q, run_restarted, RestartSchedule};
use tensoropt_core::trace::{read_csv, rows_from_baseline, rows_from_restart, rows_from_run, write_csv, TraceRow};

use crate::config::{build_problem, starting_point, AutoOr, MethodKind, RunConfig};
use crate::reference::{reference_for, ReferenceSolution};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_BUDGET: i32 = 2;

const DEFAULT_TARGET_GAP: f64 = 1e-10;
const DEFAULT_TARGET_GRAD: f64 = 1e-9;

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub max_iters: Option<usize>,
    /// Target gradient norm.
    pub tol: Option<f64>,
    /// Target normalized gap.
    pub threshold: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &RunConfig) -> RunConfig {
        let mut cfg = cfg.clone();
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(m) = self.max_iters {
            cfg.limits.max_iters = m;
        }
        if let Some(t) = self.tol {
            cfg.limits.target_grad_norm = Some(t);
        }
        if let Some(t) = self.threshold {
            cfg.limits.target_gap = Some(t);
        }
        if let Some(o) = &self.out {
            cfg.output = Some(o.clone());
        }
        cfg.problem = cfg.resolved_problem();
        cfg
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SidecarIteration {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    pub inner_tol: f64,
}

/// Written next to every trace as `<trace>.run.json`: what `check` needs
/// beyond the CSV columns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSidecar {
    pub config: RunConfig,
    pub fingerprint: String,
    pub p: usize,
    pub m_p: f64,
    pub x0: Vec<f64>,
    pub termination: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Iterates of the optimal method (empty for other methods).
    pub iterations: Vec<SidecarIteration>,
}

pub fn sidecar_path(trace: &Path) -> PathBuf {
    let mut s = trace.as_os_str().to_owned();
    s.push(".run.json");
    PathBuf::from(s)
}

#[derive(Debug)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub csv: PathBuf,
    pub termination: Termination,
    pub rows: Vec<TraceRow>,
    pub reference: ReferenceSolution,
    pub m_p: f64,
    pub error: Option<String>,
}

fn vec_of(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn exit_code(termination: Termination) -> i32 {
    match termination {
        t if t.converged() => EXIT_OK,
        Termination::Failed => EXIT_ERROR,
        _ => EXIT_BUDGET,
    }
}

/// Runs one configured method and writes its trace and sidecar.
pub fn execute_run(config: &RunConfig, overrides: &Overrides) -> Result<RunOutcome> {
    let cfg = overrides.apply(config);
    let out = cfg
        .output
        .clone()
        .ok_or_else(|| anyhow!("no output path: pass --out or set \"output\" in the config"))?;
    let built = build_problem(&cfg.problem)?;
    let problem = built.problem.as_ref();
    let x0 = starting_point(&cfg, problem.dim())?;
    let m_p = cfg.method.resolve_m_p(problem)?;
    let reference = reference_for(&built, &x0, None)?;
    let f_star = reference.attained.then_some(reference.f_star);

    let mut stop = StopCriteria {
        max_iters: cfg.limits.max_iters,
        target_gap: None,
        f_star,
        target_grad_norm: cfg.limits.target_grad_norm,
        max_wall: cfg.limits.wall_clock_sec.map(Duration::from_secs_f64),
    };
    match f_star {
        Some(_) => stop.target_gap = Some(cfg.limits.target_gap.unwrap_or(DEFAULT_TARGET_GAP)),
        None => {
            if cfg.limits.target_gap.is_some() {
                log::warn!("no attained optimum for this problem; stopping on the gradient norm instead of the gap");
            }
            stop.target_grad_norm.get_or_insert(DEFAULT_TARGET_GRAD);
        }
    }

    let (rows, termination, iterations, error) = match cfg.method.kind {
        MethodKind::Optimal => {
            let trace = optimal::run(problem, &x0, &cfg.method.method_config(m_p), &stop)?;
            let iterations = trace
                .records
                .iter()
                .map(|r| SidecarIteration {
                    x: vec_of(&r.x),
                    y: vec_of(&r.y),
                    u: vec_of(&r.u),
                    inner_tol: r.inner_tol,
                })
                .collect();
            (
                rows_from_run(&trace, f_star, 0),
                trace.termination,
                iterations,
                trace.error.map(|e| e.to_string()),
            )
        }
        MethodKind::Plain | MethodKind::Accelerated => {
            let trace = baselines::run(problem, &x0, &cfg.method.baseline_config(m_p), &stop)?;
            (
                rows_from_baseline(&trace, f_star),
                trace.termination,
                Vec::new(),
                trace.error.map(|e| e.to_string()),
            )
        }
        MethodKind::Restart => {
            let (rows, termination, error) = restarted(&cfg, problem, &x0, m_p, &reference)?;
            (rows, termination, Vec::new(), error)
        }
    };

    write_trace(&out, &rows)?;
    let sidecar = RunSidecar {
        config: cfg.clone(),
        fingerprint: built.fingerprint.clone(),
        p: cfg.method.p,
        m_p,
        x0: vec_of(&x0),
        termination: format!("{termination:?}"),
        error: error.clone(),
        iterations,
    };
    std::fs::write(sidecar_path(&out), serde_json::to_string_pretty(&sidecar)?)?;

    Ok(RunOutcome {
        exit_code: exit_code(termination),
        csv: out,
        termination,
        rows,
        reference,
        m_p,
        error,
    })
}

fn restarted(
    cfg: &RunConfig,
    problem: &dyn Problem,
    x0: &DVector<f64>,
    m_p: f64,
    reference: &ReferenceSolution,
) -> Result<(Vec<TraceRow>, Termination, Option<String>)> {
    let spec = cfg
        .method
        .restart
        .as_ref()
        .ok_or_else(|| anyhow!("method \"restart\" needs a \"restart\" block"))?;
    let b0 = problem.eval(x0, 1)?;
    let x_star = reference.point();
    let radius = x0.amax().max(x_star.amax()).max(1.0);
    let certified = estimate_sigma_q(problem, spec.q, radius, spec.sigma_samples, cfg.seed)?;
    let claimed = match spec.sigma {
        AutoOr::Value(v) => Some(v),
        AutoOr::Auto(_) => problem
            .uniform_convexity()
            .filter(|u| (u.q - spec.q).abs() < 1e-12)
            .map(|u| u.sigma),
    };
    let sigma = claimed.map_or(certified, |c| c.min(certified));
    if !(sigma > 0.0) {
        bail!("no positive uniform-convexity modulus could be certified for q = {}", spec.q);
    }
    let f_star = reference.attained.then_some(reference.f_star);
    let delta0 = match (spec.delta0, f_star) {
        (Some(d), _) => d,
        (None, Some(fs)) => 1.01 * (b0.value - fs),
        (None, None) => bail!("restart needs delta0 when the optimum is not attained"),
    };
    let target = cfg.limits.target_gap.unwrap_or(DEFAULT_TARGET_GAP);
    let eps = match f_star {
        Some(fs) if fs.abs() > 1e-12 => target * fs.abs(),
        _ => target,
    };
    log::info!("restart: sigma = {sigma:e} (certified {certified:e}), delta0 = {delta0:e}");
    if !(delta0 > 0.0) {
        return Ok((rows_from_restart_empty(problem, x0, f_star)?, Termination::TargetGap, None));
    }
    let schedule = RestartSchedule::new(cfg.method.p, spec.q, m_p, sigma, delta0, eps)?;
    let trace = run_restarted(problem, x0, schedule, &cfg.method.method_config(m_p), f_star)?;
    let rows = rows_from_restart(&trace, f_star, b0.gradient.norm());
    let error = trace.error.as_ref().map(|e| e.to_string());
    let termination = if error.is_some() {
        Termination::Failed
    } else {
        Termination::TargetGap
    };
    Ok((rows, termination, error))
}

fn rows_from_restart_empty(problem: &dyn Problem, x0: &DVector<f64>, f_star: Option<f64>) -> Result<Vec<TraceRow>> {
    let b = problem.eval(x0, 1)?;
    Ok(vec![TraceRow {
        k: 0,
        stage: 0,
        time_sec: Some(0.0),
        f: b.value,
        gap: f_star.map(|s| normalized_gap(b.value, s)),
        grad_norm: b.gradient.norm(),
        a_total: None,
        a: None,
        l: None,
        rho: None,
        probes: None,
        inner_iters: None,
    }])
}

fn write_trace(path: &Path, rows: &[TraceRow]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_csv(rows, BufWriter::new(file))?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ratio {
    pub value: f64,
    /// The accelerated run stopped before the threshold, so the true ratio
    /// is at least `value`.
    pub lower_bound: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodSummary {
    pub label: String,
    pub kind: MethodKind,
    pub iterations_run: usize,
    pub iterations_to_threshold: Option<usize>,
    pub final_gap: Option<f64>,
    pub csv: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareSummary {
    pub fingerprint: String,
    pub threshold: f64,
    pub f_star: Option<f64>,
    pub methods: Vec<MethodSummary>,
    /// Iterations of the accelerated baseline over those of the optimal method.
    pub accelerated_over_optimal: Option<Ratio>,
}

/// Runs every config (they must share a problem) in parallel and writes
/// `<label>.csv` per method plus `summary.json` into `out_dir`.
pub fn execute_compare(configs: &[RunConfig], out_dir: &Path, overrides: &Overrides) -> Result<CompareSummary> {
    if configs.is_empty() {
        bail!("compare needs at least one config");
    }
    let threshold = overrides.threshold.unwrap_or(DEFAULT_TARGET_GAP);
    let mut resolved = Vec::with_capacity(configs.len());
    let mut labels: Vec<String> = Vec::new();
    for c in configs {
        let mut o = overrides.clone();
        o.threshold = Some(threshold);
        let mut label = c.method.label();
        if labels.contains(&label) {
            label = format!("{label}_{}", labels.len());
        }
        o.out = Some(out_dir.join(format!("{label}.csv")));
        labels.push(label);
        resolved.push((o.apply(c), o));
    }
    let fingerprints: Vec<String> = resolved
        .iter()
        .map(|(c, _)| build_problem(&c.problem).map(|b| b.fingerprint))
        .collect::<Result<_>>()?;
    if fingerprints.iter().any(|f| f != &fingerprints[0]) {
        bail!("compare: configs describe different problems");
    }
    std::fs::create_dir_all(out_dir)?;
    // Compute the shared reference once before fanning out.
    {
        let built = build_problem(&resolved[0].0.problem)?;
        let x0 = starting_point(&resolved[0].0, built.problem.dim())?;
        reference_for(&built, &x0, None)?;
    }

    let outcomes: Vec<Result<RunOutcome>> = std::thread::scope(|s| {
        let handles: Vec<_> = resolved
            .iter()
            .map(|(c, o)| s.spawn(move || execute_run(c, o)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(anyhow!("worker panicked"))))
            .collect()
    });

    let mut methods = Vec::new();
    let mut f_star = None;
    for ((cfg, _), (label, outcome)) in resolved.iter().zip(labels.into_iter().zip(outcomes)) {
        let outcome = outcome.with_context(|| format!("method {label}"))?;
        f_star = outcome.reference.attained.then_some(outcome.reference.f_star);
        let to_threshold = outcome
            .rows
            .iter()
            .find(|r| r.gap.is_some_and(|g| g <= threshold))
            .map(|r| r.k);
        methods.push(MethodSummary {
            label,
            kind: cfg.method.kind,
            iterations_run: outcome.rows.last().map_or(0, |r| r.k),
            iterations_to_threshold: to_threshold,
            final_gap: outcome.rows.last().and_then(|r| r.gap),
            csv: outcome.csv,
        });
    }

    let find = |kind| methods.iter().find(|m| m.kind == kind);
    let ratio = match (find(MethodKind::Optimal), find(MethodKind::Accelerated)) {
        (Some(opt), Some(acc)) => opt.iterations_to_threshold.filter(|n| *n > 0).map(|n_opt| match acc.iterations_to_threshold {
            Some(n_acc) => Ratio {
                value: n_acc as f64 / n_opt as f64,
                lower_bound: false,
            },
            None => Ratio {
                value: acc.iterations_run as f64 / n_opt as f64,
                lower_bound: true,
            },
        }),
        _ => None,
    };
    let summary = CompareSummary {
        fingerprint: fingerprints[0].clone(),
        threshold,
        f_star,
        methods,
        accelerated_over_optimal: ratio,
    };
    std::fs::write(out_dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    /// Smallest `rhs - lhs` over all iterations (negative when violated).
    pub worst_slack: f64,
    pub first_failure: Option<usize>,
}

#[derive(Debug)]
pub struct CheckOutcome {
    pub lines: Vec<CheckLine>,
    pub report: TheoryReport,
    pub reference: ReferenceSolution,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.lines.iter().all(|l| l.passed)
    }
}

fn line(name: &str, slacks: &[f64]) -> CheckLine {
    let first_failure = slacks.iter().position(|s| *s < 0.0 || s.is_nan());
    CheckLine {
        name: name.to_string(),
        passed: first_failure.is_none(),
        worst_slack: slacks.iter().copied().fold(f64::INFINITY, f64::min),
        first_failure,
    }
}

/// Re-checks a stored optimal-method trace against the convergence
/// inequalities. `A_k`, `L_k` and `f` come from the CSV columns, the
/// iterates from the sidecar.
pub fn execute_check(trace: &Path, rel_tol: f64) -> Result<CheckOutcome> {
    let rows = read_csv(File::open(trace).with_context(|| format!("opening {}", trace.display()))?)?;
    let side_path = sidecar_path(trace);
    let sidecar: RunSidecar = serde_json::from_str(
        &std::fs::read_to_string(&side_path).with_context(|| format!("reading {}", side_path.display()))?,
    )?;
    if sidecar.config.method.kind != MethodKind::Optimal {
        bail!("check applies to optimal-method traces only");
    }
    let iter_rows: Vec<&TraceRow> = rows.iter().filter(|r| r.k > 0).collect();
    if iter_rows.len() != sidecar.iterations.len() {
        bail!(
            "trace has {} iterations but the sidecar has {}",
            iter_rows.len(),
            sidecar.iterations.len()
        );
    }
    let built = build_problem(&sidecar.config.problem)?;
    let x0 = DVector::from_vec(sidecar.x0.clone());
    let reference = reference_for(&built, &x0, None)?;
    let x_star = reference.point();

    let mut steps = Vec::with_capacity(iter_rows.len());
    for (row, it) in iter_rows.iter().zip(&sidecar.iterations) {
        steps.push(TheoryStep {
            a_total: row.a_total.ok_or_else(|| anyhow!("row {}: missing A_k", row.k))?,
            l: row.l.ok_or_else(|| anyhow!("row {}: missing L_k", row.k))?,
            x: DVector::from_vec(it.x.clone()),
            y: DVector::from_vec(it.y.clone()),
            u: DVector::from_vec(it.u.clone()),
            f_y: row.f,
            inner_tol: it.inner_tol,
        });
    }
    let report = evaluate_theory(&x0, &steps, &x_star, reference.f_star, rel_tol);
    let mut lines = vec![
        line("potential (11)", &report.potential),
        line("gap (12)", &report.gap),
        line("step-sum (13)", &report.step_sum),
        line("growth (14)", &report.growth),
    ];
    if reference.attained {
        let p = sidecar.p;
        let c = constant_c(p);
        let r = report.radius;
        let e = (3 * p + 1) as f64 / 2.0;
        let rate: Vec<f64> = steps
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let n = (i + 1) as f64;
                c * sidecar.m_p * r.powi(p as i32 + 1) / n.powf(e) * (1.0 + rel_tol) - (s.f_y - reference.f_star)
            })
            .collect();
        let growth: Vec<f64> = steps
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let n = (i + 1) as f64;
                s.a_total - n.powf(e) / (c * sidecar.m_p * r.powi(p as i32 - 1)) * (1.0 - rel_tol)
            })
            .collect();
        lines.push(line("rate", &rate));
        lines.push(line("growth (rate)", &growth));
    }
    Ok(CheckOutcome {
        lines,
        report,
        reference,
    })
}

/// Writes a synthetic logistic dataset in libsvm format plus
/// `<out>.manifest.json`.
pub fn execute_gen(n: usize, d: usize, seed: u64, out: &Path) -> Result<Dataset> {
    let lr = synth_logreg(n, d, seed)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_libsvm(&lr, out)?;
    let (_, mut dataset) = load_libsvm(out, Some(n))?;
    dataset.name = format!("synth-logreg-n{n}-d{d}-seed{seed}");
    let mut manifest = out.as_os_str().to_owned();
    manifest.push(".manifest.json");
    std::fs::write(PathBuf::from(manifest), serde_json::to_string_pretty(&dataset)?)?;
    Ok(dataset)
}

pub fn execute_reference(config: &RunConfig, overrides: &Overrides) -> Result<ReferenceSolution> {
    let cfg = overrides.apply(config);
    let built = build_problem(&cfg.problem)?;
    let x0 = starting_point(&cfg, built.problem.dim())?;
    let r = reference_for(&built, &x0, overrides.tol)?;
    if let Some(out) = &overrides.out {
        std::fs::write(out, serde_json::to_string_pretty(&r)?)?;
    }
    Ok(r)
}
