use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use tensoropt_core::trace::{read_csv, to_csv_string, without_timing};

struct Env {
    dir: TempDir,
}

impl Env {
    fn new() -> Self {
        Self {
            dir: TempDir::new().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn cli(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_tensoropt"))
            .args(args)
            .env("TENSOROPT_CACHE_DIR", self.path("cache"))
            .output()
            .unwrap()
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const HARD5: &str = r#"{"problem": {"type": "hard_family", "n": 5, "m": 5, "p": 3},
  "method": {"kind": "optimal", "p": 3},
  "limits": {"max_iters": 100, "target_gap": 1e-10}}"#;

#[test]
fn run_reaches_target_and_check_passes() {
    let env = Env::new();
    let cfg = env.write("hard.json", HARD5);
    let out = env.path("hard.csv");
    let o = env.cli(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_csv(std::fs::File::open(&out).unwrap()).unwrap();
    assert!(rows.len() <= 101);
    assert!(rows.last().unwrap().gap.unwrap() <= 1e-10);

    let o = env.cli(&["check", "--trace", s(&out)]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{text}");
    assert!(text.contains("growth (14)") && text.contains("PASS"));
    assert!(!text.contains("FAIL"));
}

#[test]
fn corrupted_coefficients_fail_the_growth_check() {
    let env = Env::new();
    let cfg = env.write("hard.json", HARD5);
    let out = env.path("hard.csv");
    env.cli(&["run", "--config", s(&cfg), "--out", s(&out), "--max-iters", "20"]);
    let mut rows = read_csv(std::fs::File::open(&out).unwrap()).unwrap();
    for r in rows.iter_mut().skip(1) {
        r.a_total = r.a_total.map(|a| a * 0.1);
    }
    std::fs::write(&out, to_csv_string(&rows)).unwrap();
    let o = env.cli(&["check", "--trace", s(&out)]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(1), "{text}");
    let growth = text.lines().find(|l| l.starts_with("growth (14)")).unwrap();
    assert!(growth.contains("FAIL"), "{text}");
}

#[test]
fn empty_trace_passes_vacuously() {
    let env = Env::new();
    let cfg = env.write("hard.json", HARD5);
    let out = env.path("empty.csv");
    let o = env.cli(&["run", "--config", s(&cfg), "--out", s(&out), "--max-iters", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(read_csv(std::fs::File::open(&out).unwrap()).unwrap().len(), 1);
    let o = env.cli(&["check", "--trace", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn invalid_json_reports_position() {
    let env = Env::new();
    let cfg = env.write("bad.json", "{\n  \"problem\": {\"type\": \"hard_family\",\n  }\n}");
    let o = env.cli(&["run", "--config", s(&cfg), "--out", s(&env.path("x.csv"))]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3"), "{err}");
    assert!(err.contains("column"), "{err}");

    let cfg = env.write("unknown.json", &HARD5.replace("\"p\": 3}", "\"p\": 3, \"speed\": 2}"));
    let o = env.cli(&["run", "--config", s(&cfg), "--out", s(&env.path("x.csv"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("speed"));
}

#[test]
fn wall_clock_cap_flushes_partial_trace() {
    let env = Env::new();
    // an unreachable target keeps the run going until the cap
    let cfg = env.write(
        "slow.json",
        r#"{"problem": {"type": "logistic_synthetic", "n": 5, "d": 40}, "seed": 3,
            "method": {"kind": "accelerated", "p": 3},
            "limits": {"max_iters": 100000000, "target_grad_norm": 1e-300, "wall_clock_sec": 1.0}}"#,
    );
    let out = env.path("slow.csv");
    let o = env.cli(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_csv(std::fs::File::open(&out).unwrap()).unwrap();
    assert!(rows.len() > 1);
    let last = rows.last().unwrap().time_sec.unwrap();
    assert!((1.0..5.0).contains(&last), "{last}");
}

#[test]
fn reference_is_cached_and_stable() {
    let env = Env::new();
    let cfg = env.write("hard.json", HARD5);
    let a = env.cli(&["reference", "--config", s(&cfg)]);
    assert_eq!(a.status.code(), Some(0));
    let first: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    let b = env.cli(&["reference", "--config", s(&cfg)]);
    let second: serde_json::Value = serde_json::from_slice(&b.stdout).unwrap();
    assert_eq!(first, second);
    let f_star = first["f_star"].as_f64().unwrap();
    assert!(first["attained"].as_bool().unwrap());

    // recomputation from scratch agrees with the cached value
    std::fs::remove_dir_all(env.path("cache")).unwrap();
    let c = env.cli(&["reference", "--config", s(&cfg)]);
    let third: serde_json::Value = serde_json::from_slice(&c.stdout).unwrap();
    let again = third["f_star"].as_f64().unwrap();
    assert!((f_star - again).abs() <= 1e-12 * f_star.abs().max(1.0));
    assert_eq!(first["fingerprint"], third["fingerprint"]);
}

#[test]
fn quadratic_reference_is_exact() {
    let env = Env::new();
    let cfg = env.write(
        "quad.json",
        r#"{"problem": {"type": "quadratic_isotropic", "n": 4}, "method": {"kind": "optimal", "p": 1},
            "x0": [1.0, -2.0, 0.5, 3.0]}"#,
    );
    let o = env.cli(&["reference", "--config", s(&cfg)]);
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(r["f_star"].as_f64().unwrap().abs() <= 1e-26);
    for x in r["x_star"].as_array().unwrap() {
        assert!(x.as_f64().unwrap().abs() <= 1e-13);
    }
}

#[test]
fn separable_logistic_reference_is_not_attained() {
    let env = Env::new();
    let cfg = env.write(
        "lr.json",
        r#"{"problem": {"type": "logistic_synthetic", "n": 5, "d": 40}, "method": {"kind": "optimal", "p": 3},
            "seed": 3}"#,
    );
    let o = env.cli(&["reference", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(!r["attained"].as_bool().unwrap());
    assert!(r["f_star"].as_f64().unwrap() > 0.0);
}

#[test]
fn compare_is_deterministic_and_reports_ratio() {
    let env = Env::new();
    let opt = env.write("opt.json", HARD5);
    let acc = env.write("acc.json", &HARD5.replace("\"kind\": \"optimal\"", "\"kind\": \"accelerated\"").replace("100,", "100000,"));
    let mut runs = Vec::new();
    for dir in ["a", "b"] {
        let out = env.path(dir);
        let o = env.cli(&["compare", "--config", s(&opt), "--config", s(&acc), "--out", s(&out)]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let summary: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
        let ratio = summary["accelerated_over_optimal"]["value"].as_f64().unwrap();
        assert!(ratio >= 10.0, "{summary}");
        assert_eq!(summary["accelerated_over_optimal"]["lower_bound"], false);
        let traces: Vec<String> = ["optimal.csv", "accelerated.csv"]
            .iter()
            .map(|f| without_timing(&read_csv(std::fs::File::open(out.join(f)).unwrap()).unwrap()))
            .collect();
        runs.push(traces);
    }
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn compare_rejects_mixed_problems() {
    let env = Env::new();
    let a = env.write("a.json", HARD5);
    let b = env.write("b.json", &HARD5.replace("\"n\": 5", "\"n\": 6"));
    let o = env.cli(&["compare", "--config", s(&a), "--config", s(&b), "--out", s(&env.path("o"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn gen_is_deterministic_and_round_trips() {
    let env = Env::new();
    let a = env.path("a.svm");
    let b = env.path("b.svm");
    for p in [&a, &b] {
        let o = env.cli(&["gen", "synth-logreg", "--n", "10", "--d", "100", "--seed", "42", "--out", s(p)]);
        assert_eq!(o.status.code(), Some(0));
    }
    let text = std::fs::read(&a).unwrap();
    assert_eq!(text, std::fs::read(&b).unwrap());
    let (lr, ds) = tensoropt_core::problems::load_libsvm(&a, Some(10)).unwrap();
    assert_eq!((ds.n, ds.d), (10, 100));
    assert_eq!(tensoropt_core::problems::format_libsvm(&lr).as_bytes(), &text[..]);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(env.path("a.svm.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["sha256"], ds.sha256.as_str());

    let big = env.path("big.svm");
    env.cli(&["gen", "synth-logreg", "--n", "100", "--d", "1000", "--seed", "1", "--out", s(&big)]);
    assert_eq!(std::fs::read_to_string(&big).unwrap().lines().count(), 1000);
}

#[test]
fn libsvm_config_runs_with_checksum() {
    let env = Env::new();
    let data = env.path("data.svm");
    env.cli(&["gen", "synth-logreg", "--n", "4", "--d", "30", "--seed", "5", "--out", s(&data)]);
    let sha = tensoropt_core::problems::sha256_hex(&std::fs::read(&data).unwrap());
    let cfg = env.write(
        "lr.json",
        &format!(
            r#"{{"problem": {{"type": "libsvm", "path": "data.svm", "sha256": "{sha}"}},
                "method": {{"kind": "optimal", "p": 2}}, "limits": {{"max_iters": 30}}}}"#
        ),
    );
    let o = env.cli(&["run", "--config", s(&cfg), "--out", s(&env.path("lr.csv"))]);
    assert!(matches!(o.status.code(), Some(0) | Some(2)), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_csv(std::fs::File::open(env.path("lr.csv")).unwrap()).unwrap();
    assert!(rows.iter().all(|r| r.gap.is_none()));

    let bad = env.write("bad.json", &std::fs::read_to_string(&cfg).unwrap().replace(&sha, &"0".repeat(64)));
    let o = env.cli(&["run", "--config", s(&bad), "--out", s(&env.path("x.csv"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("checksum"));
}

#[test]
fn restart_runs_from_config() {
    let env = Env::new();
    let cfg = env.write(
        "quartic.json",
        r#"{"problem": {"type": "separable_quartic", "n": 3},
            "method": {"kind": "restart", "p": 3, "restart": {"q": 4}},
            "x0": [1.0, -1.0, 0.5], "limits": {"target_gap": 1e-3}}"#,
    );
    let out = env.path("r.csv");
    let o = env.cli(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_csv(std::fs::File::open(&out).unwrap()).unwrap();
    assert_eq!((rows[0].k, rows[0].stage), (0, 0));
    assert!(rows[1..].iter().all(|r| r.stage >= 1 && r.k >= 1));
    let stages: std::collections::BTreeSet<usize> = rows.iter().map(|r| r.stage).collect();
    for stage in stages.iter().filter(|s| **s > 0) {
        let ks: Vec<usize> = rows.iter().filter(|r| r.stage == *stage).map(|r| r.k).collect();
        assert_eq!(ks[0], 1);
        assert!(ks.windows(2).all(|w| w[1] == w[0] + 1));
    }
    assert!(rows.last().unwrap().gap.unwrap() <= 1e-3 * rows[0].gap.unwrap());
}
