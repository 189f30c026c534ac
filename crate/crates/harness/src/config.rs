//! JSON run configuration. Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use tensoropt_core::baselines::{BaselineConfig, BaselineMethod};
use tensoropt_core::optimal::{LineSearchConfig, MethodConfig};
use tensoropt_core::oracle::Problem;
use tensoropt_core::problems::{load_libsvm, sha256_hex, synth_logreg, HardFamily, LogisticRegression, Quadratic, SeparableQuartic};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemConfig {
    HardFamily {
        n: usize,
        m: usize,
        p: usize,
    },
    /// `n` features, `d` samples. `seed` defaults to the run seed.
    LogisticSynthetic {
        n: usize,
        d: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Libsvm {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<usize>,
        /// Expected checksum of the file; checked when present.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sha256: Option<String>,
    },
    Quadratic {
        q: Vec<Vec<f64>>,
        b: Vec<f64>,
    },
    QuadraticIsotropic {
        n: usize,
    },
    SeparableQuartic {
        n: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Optimal,
    Plain,
    Accelerated,
    Restart,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Auto {
    #[default]
    Auto,
}

/// A number, or `"auto"` for the analytic/certified value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AutoOr {
    Value(f64),
    Auto(Auto),
}

impl Default for AutoOr {
    fn default() -> Self {
        AutoOr::Auto(Auto::Auto)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct LineSearchSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_init: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expand_factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_probes: Option<usize>,
}

fn default_sigma_samples() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RestartSpec {
    pub q: f64,
    #[serde(default)]
    pub sigma: AutoOr,
    #[serde(default = "default_sigma_samples")]
    pub sigma_samples: usize,
    /// Initial gap bound; default `1.01 (f(z0) - f*)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta0: Option<f64>,
}

fn default_inner_max_iters() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub kind: MethodKind,
    pub p: usize,
    #[serde(default)]
    pub m_p: AutoOr,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_tol: Option<f64>,
    #[serde(default = "default_inner_max_iters")]
    pub inner_max_iters: usize,
    #[serde(default)]
    pub line_search: LineSearchSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub restart: Option<RestartSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl MethodSpec {
    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| {
            match self.kind {
                MethodKind::Optimal => "optimal",
                MethodKind::Plain => "plain",
                MethodKind::Accelerated => "accelerated",
                MethodKind::Restart => "restart",
            }
            .to_string()
        })
    }

    pub fn resolve_m_p(&self, problem: &dyn Problem) -> Result<f64> {
        match self.m_p {
            AutoOr::Value(v) if v > 0.0 && v.is_finite() => Ok(v),
            AutoOr::Value(v) => bail!("m_p = {v} must be positive"),
            AutoOr::Auto(_) => problem
                .lipschitz(self.p)
                .ok_or_else(|| anyhow!("no analytic M_{} bound for this problem; set m_p explicitly", self.p)),
        }
    }

    pub fn method_config(&self, m_p: f64) -> MethodConfig {
        let mut cfg = MethodConfig::new(self.p, m_p);
        cfg.inner_tol = self.inner_tol;
        cfg.inner_max_iters = self.inner_max_iters;
        let defaults = LineSearchConfig::default();
        cfg.line_search = LineSearchConfig {
            l_init: self.line_search.l_init,
            expand_factor: self.line_search.expand_factor.unwrap_or(defaults.expand_factor),
            max_probes: self.line_search.max_probes.unwrap_or(defaults.max_probes),
            relaxed_window: defaults.relaxed_window,
        };
        cfg
    }

    pub fn baseline_config(&self, m_p: f64) -> BaselineConfig {
        let method = match self.kind {
            MethodKind::Accelerated => BaselineMethod::Accelerated,
            _ => BaselineMethod::Plain,
        };
        let mut cfg = BaselineConfig::new(method, self.p, m_p);
        cfg.inner_tol = self.inner_tol;
        cfg.inner_max_iters = self.inner_max_iters;
        cfg
    }
}

fn default_max_iters() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Limits {
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// On the normalized gap `(f - f*)/|f*|` (absolute when `f* = 0`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_gap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_grad_norm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_sec: Option<f64>,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            max_iters: default_max_iters(),
            target_gap: None,
            target_grad_norm: None,
            wall_clock_sec: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub method: MethodSpec,
    #[serde(default)]
    pub limits: Limits,
    #[serde(default)]
    pub seed: u64,
    /// Starting point; zeros when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| anyhow!("invalid config at line {}, column {}: {e}", e.line(), e.column()))
    }

    /// Reads a config; relative paths inside it are taken relative to the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::parse(&text).with_context(|| format!("in {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let ProblemConfig::Libsvm { path: p, .. } = &mut cfg.problem {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(out) = &mut cfg.output {
            if out.is_relative() {
                *out = base.join(&*out);
            }
        }
        Ok(cfg)
    }

    /// Problem config with the run seed filled in, so equal problems compare equal.
    pub fn resolved_problem(&self) -> ProblemConfig {
        match &self.problem {
            ProblemConfig::LogisticSynthetic { n, d, seed } => ProblemConfig::LogisticSynthetic {
                n: *n,
                d: *d,
                seed: Some(seed.unwrap_or(self.seed)),
            },
            other => other.clone(),
        }
    }
}

/// A constructed objective plus what the harness needs to know about it.
pub struct BuiltProblem {
    pub problem: Box<dyn Problem>,
    /// Set for logistic objectives (separability check of the reference).
    pub logistic: Option<LogisticRegression>,
    pub fingerprint: String,
    pub config: ProblemConfig,
}

impl std::fmt::Debug for BuiltProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BuiltProblem")
            .field("fingerprint", &self.fingerprint)
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

/// Builds the objective. The fingerprint hashes the canonical JSON of the
/// config, with a dataset's path replaced by its checksum.
pub fn build_problem(config: &ProblemConfig) -> Result<BuiltProblem> {
    let mut canonical = config.clone();
    let (problem, logistic): (Box<dyn Problem>, Option<LogisticRegression>) = match config {
        ProblemConfig::HardFamily { n, m, p } => (Box::new(HardFamily::new(*n, *m, *p)?), None),
        ProblemConfig::LogisticSynthetic { n, d, seed } => {
            let seed = seed.ok_or_else(|| anyhow!("synthetic logistic problem needs a seed"))?;
            let lr = synth_logreg(*n, *d, seed)?;
            (Box::new(lr.clone()), Some(lr))
        }
        ProblemConfig::Libsvm { path, n, sha256 } => {
            let (lr, dataset) = load_libsvm(path, *n).with_context(|| format!("loading {}", path.display()))?;
            if let Some(expected) = sha256 {
                if !expected.eq_ignore_ascii_case(&dataset.sha256) {
                    bail!("checksum mismatch for {}: expected {expected}, found {}", path.display(), dataset.sha256);
                }
            }
            canonical = ProblemConfig::Libsvm {
                path: PathBuf::new(),
                n: Some(dataset.n),
                sha256: Some(dataset.sha256.clone()),
            };
            (Box::new(lr.clone()), Some(lr))
        }
        ProblemConfig::Quadratic { q, b } => {
            let n = b.len();
            if q.len() != n || q.iter().any(|row| row.len() != n) {
                bail!("quadratic: q must be {n} x {n}");
            }
            let qm = DMatrix::from_fn(n, n, |i, j| q[i][j]);
            (Box::new(Quadratic::new(qm, DVector::from_vec(b.clone()))?), None)
        }
        ProblemConfig::QuadraticIsotropic { n } => (Box::new(Quadratic::isotropic(*n)), None),
        ProblemConfig::SeparableQuartic { n } => (Box::new(SeparableQuartic::new(*n)), None),
    };
    let canonical_json = serde_json::to_string(&canonical)?;
    Ok(BuiltProblem {
        problem,
        logistic,
        fingerprint: sha256_hex(canonical_json.as_bytes()),
        config: config.clone(),
    })
}

pub fn starting_point(config: &RunConfig, dim: usize) -> Result<DVector<f64>> {
    match &config.x0 {
        None => Ok(DVector::zeros(dim)),
        Some(v) if v.len() == dim => Ok(DVector::from_vec(v.clone())),
        Some(v) => bail!("x0 has length {}, problem dimension is {dim}", v.len()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"problem": {"type": "hard_family", "n": 5, "m": 5, "p": 3},
                             "method": {"kind": "optimal", "p": 3}}"#;

    #[test]
    fn defaults_fill_in() {
        let cfg = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.method.m_p, AutoOr::Auto(Auto::Auto));
        assert_eq!(cfg.limits.max_iters, 1000);
        assert_eq!(cfg.method.inner_max_iters, 100);
        assert!(cfg.x0.is_none());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = MINIMAL.replace("\"p\": 3}}", "\"p\": 3, \"stepsize\": 1}}");
        assert!(RunConfig::parse(&bad).is_err());
        let bad = MINIMAL.replace("\"m\": 5,", "\"m\": 5, \"extra\": 0,");
        assert!(RunConfig::parse(&bad).is_err());
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = RunConfig::parse("{\n  \"problem\": ,\n}").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        assert!(err.contains("column"), "{err}");
    }

    #[test]
    fn explicit_m_p_and_fingerprints() {
        let text = MINIMAL.replace("\"p\": 3}}", "\"p\": 3, \"m_p\": 96.0}}");
        let cfg = RunConfig::parse(&text).unwrap();
        assert_eq!(cfg.method.m_p, AutoOr::Value(96.0));
        let a = build_problem(&cfg.resolved_problem()).unwrap();
        let b = build_problem(&RunConfig::parse(MINIMAL).unwrap().resolved_problem()).unwrap();
        assert_eq!(a.fingerprint, b.fingerprint);
        let c = build_problem(&ProblemConfig::HardFamily { n: 6, m: 5, p: 3 }).unwrap();
        assert_ne!(a.fingerprint, c.fingerprint);
    }
}
