use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

use fpk_core::fpk::{GridSpec, SolveOptions};
use fpk_core::stability::{stability_sweep, OuFamily};

fn fpk(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fpk"))
        .args(args)
        .current_dir(dir)
        .env_remove("FPK_WORKERS")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run(dir: &Path, cmd: &str, config: &str, out: &str, extra: &[&str]) -> Output {
    let cfg = write_config(dir, &format!("{out}.json"), config);
    let mut args = vec![cmd, "--config", cfg.to_str().unwrap(), "--out", out];
    args.extend_from_slice(extra);
    fpk(&args, dir)
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

/// Relative paths of every CSV and result JSON (not `report.json`) under `root`.
fn artifacts(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "report.json"
                && matches!(p.extension().and_then(|e| e.to_str()), Some("csv" | "json"))
            {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

const OU_SOLVE: &str = r#"{
  "model": {"builtin": "ou-1d"},
  "grid": {"d": 1, "R": 8, "n": 256},
  "solve": {"weak_form_functions": 4}
}"#;

#[test]
fn minimal_solve_writes_density_and_report() {
    let t = tempfile::tempdir().unwrap();
    let o = run(t.path(), "solve", OU_SOLVE, "out", &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = t.path().join("out");
    let csv = fs::read_to_string(out.join("solve.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("x,rho"));
    assert_eq!(csv.lines().count(), 257);
    let report = json(&out.join("report.json"));
    assert_eq!(report["passed"], true);
    assert_eq!(report["command"], "solve");
    let result = json(&out.join("solve.json"));
    assert!((result["mass"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    // E|X|² = 1 for N(0, 1).
    let m2 = result["moments"]["moments"][1][1].as_f64().unwrap();
    assert!((m2 - 1.0).abs() < 1e-2, "{m2}");
}

#[test]
fn manifest_lists_exactly_the_written_files() {
    let t = tempfile::tempdir().unwrap();
    let cfg = r#"{"model": {"builtin": "ou-1d"}, "grid": {"d": 1, "n": 128}, "output": {"svg": true}}"#;
    assert_eq!(run(t.path(), "solve", cfg, "out", &[]).status.code(), Some(0));
    let out = t.path().join("out");
    let report = json(&out.join("report.json"));
    let manifest = report["manifest"].as_array().unwrap();
    let mut listed: Vec<String> = Vec::new();
    for entry in manifest {
        let rel = entry["path"].as_str().unwrap();
        let bytes = fs::read(out.join(rel)).unwrap();
        assert_eq!(entry["bytes"].as_u64().unwrap(), bytes.len() as u64);
        let digest: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(entry["sha256"].as_str().unwrap(), digest);
        listed.push(rel.to_string());
    }
    listed.sort();
    assert_eq!(listed, ["solve.csv", "solve.json", "solve.svg"]);
}

#[test]
fn unknown_key_is_a_validation_error_naming_the_key() {
    let t = tempfile::tempdir().unwrap();
    let cfg = r#"{
  "model": {"drift": {"components": ["-x"],
    "bounds": {"beta": 1, "beta1": 1, "betaa2": 1, "beta3": 1}}},
  "grid": {"d": 1, "n": 64}
}"#;
    let o = run(t.path(), "solve", cfg, "out", &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("betaa2") && err.contains("line 3"), "{err}");
    assert!(!t.path().join("out").exists());
}

#[test]
fn range_errors_name_every_offending_field() {
    let t = tempfile::tempdir().unwrap();
    let cfg = r#"{
  "model": {"diffusion": {"entries": ["1"], "lambda": 1.5},
            "drift": {"components": ["-x"], "bounds": {"beta": 0.5, "beta1": 1, "beta2": 1, "beta3": 1}}},
  "grid": {"d": 3, "n": 2}
}"#;
    let o = run(t.path(), "solve", cfg, "out", &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    for field in ["grid.d", "grid.n", "model.diffusion.lambda", "model.drift.bounds.beta"] {
        assert!(err.contains(field), "{field} missing from: {err}");
    }
}

#[test]
fn expression_errors_are_validation_errors() {
    let t = tempfile::tempdir().unwrap();
    let cfg = r#"{"model": {"drift": {"components": ["-x +"], "bounds": {"beta": 1, "beta1": 1, "beta2": 1, "beta3": 1}}},
                 "grid": {"d": 1, "n": 64}}"#;
    let o = run(t.path(), "solve", cfg, "out", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("model.drift.components[0]"));
}

#[test]
fn command_guard_and_missing_config() {
    let t = tempfile::tempdir().unwrap();
    let cfg = r#"{"command": "dini", "model": {"builtin": "ou-1d"}, "grid": {"d": 1, "n": 64}}"#;
    assert_eq!(run(t.path(), "solve", cfg, "out", &[]).status.code(), Some(2));
    assert_eq!(fpk(&["solve"], t.path()).status.code(), Some(2));
    assert_eq!(
        run(t.path(), "solve", OU_SOLVE, "out2", &["--workers", "0"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn rerun_with_same_seed_is_byte_identical() {
    let t = tempfile::tempdir().unwrap();
    let cfg = r#"{
  "seed": 7,
  "dini": {"field": {"example": "log-modulus"}, "sampling": {"centers": 12},
           "radii": {"min": 1e-3, "max": 0.2, "count": 8}, "mollify": [0.1, 0.01]}
}"#;
    for out in ["a", "b"] {
        assert_eq!(run(t.path(), "dini", cfg, out, &[]).status.code(), Some(0));
    }
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    let files = artifacts(&a);
    assert_eq!(files, artifacts(&b));
    assert!(files.len() >= 3);
    for f in &files {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f:?}");
    }
    let (ra, rb) = (json(&a.join("report.json")), json(&b.join("report.json")));
    assert_eq!(ra["config_digest"], rb["config_digest"]);

    // A different seed moves the sampled centers and the digest.
    assert_eq!(run(t.path(), "dini", cfg, "c", &["--seed", "8"]).status.code(), Some(0));
    let rc = json(&t.path().join("c/report.json"));
    assert_eq!(rc["seed"], 8);
    assert_ne!(rc["config_digest"], ra["config_digest"]);
    assert_ne!(
        fs::read(a.join("dini.csv")).unwrap(),
        fs::read(t.path().join("c/dini.csv")).unwrap()
    );
}

#[test]
fn worker_count_does_not_change_outputs() {
    let t = tempfile::tempdir().unwrap();
    let cfg = r#"{"grid": {"d": 1, "R": 8, "n": 256}, "stability": {"family": "ou-drift"},
                 "sweep": {"target": "stability", "values": [0.01, 0.03, 0.1]}}"#;
    assert_eq!(
        run(t.path(), "sweep", cfg, "one", &["--workers", "1"]).status.code(),
        Some(0)
    );
    let o = Command::new(env!("CARGO_BIN_EXE_fpk"))
        .args(["sweep", "--config", "one.json", "--out", "env"])
        .current_dir(t.path())
        .env("FPK_WORKERS", "4")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let (a, b) = (t.path().join("one"), t.path().join("env"));
    let files = artifacts(&a);
    assert_eq!(files, artifacts(&b));
    for f in &files {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f:?}");
    }
}

#[test]
fn failed_check_exits_one() {
    let t = tempfile::tempdir().unwrap();
    let cfg =
        r#"{"dini": {"field": {"expr": "x"}, "radii": {"min": 1e-3, "max": 0.1, "count": 8}, "expect": "divergent"}}"#;
    let o = run(t.path(), "dini", cfg, "out", &[]);
    assert_eq!(o.status.code(), Some(1));
    let report = json(&t.path().join("out/report.json"));
    assert_eq!(report["passed"], false);
    assert_eq!(report["checks"][0]["name"], "dini-verdict");
}

#[test]
fn numerical_failure_exits_three_with_report() {
    let t = tempfile::tempdir().unwrap();
    // Stationary variance 6 on [-4, 4] leaves far more than 1e-4 of the mass in the boundary cells.
    let cfg = r#"{"model": {"diffusion": {"entries": ["6"], "lambda": 0.1},
                           "drift": {"components": ["-x"], "bounds": {"beta": 1, "beta1": 1, "beta2": 1, "beta3": 1}}},
                 "grid": {"d": 1, "R": 4, "n": 64}, "solve": {"condition_h": false}}"#;
    let o = run(t.path(), "solve", cfg, "out", &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("under-truncated"));
    let report = json(&t.path().join("out/report.json"));
    assert!(report["error"].as_str().unwrap().contains("under-truncated"));
    assert_eq!(report["manifest"].as_array().unwrap().len(), 0);
}

#[test]
fn delta_sweep_summary_matches_the_stability_module() {
    let t = tempfile::tempdir().unwrap();
    let values = [1e-3, 3e-3, 1e-2, 3e-2, 1e-1];
    let cfg = r#"{"grid": {"d": 1, "R": 8, "n": 512}, "stability": {"family": "ou-drift"},
                 "sweep": {"target": "stability", "values": [0.001, 0.003, 0.01, 0.03, 0.1]}}"#;
    let o = run(t.path(), "sweep", cfg, "out", &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let out = t.path().join("out");
    let summary = json(&out.join("sweep.json"));
    let slope = summary["slope"].as_f64().expect("slope populated");
    let oracle = stability_sweep(
        |d| OuFamily::Drift.pair(1, d),
        &values,
        &GridSpec::new(1, 8.0, 512).unwrap(),
        2.0,
        1.0,
        &SolveOptions::default(),
    )
    .unwrap();
    assert!((slope - oracle.slope).abs() < 1e-12, "{slope} vs {}", oracle.slope);
    assert!((slope - 1.0).abs() <= 0.1);
    assert_eq!(summary["failures"], 0);
    for i in 0..values.len() {
        let dir = out.join(format!("point-{i:03}"));
        assert!(dir.join("stability.csv").exists() && dir.join("report.json").exists());
    }
    assert_eq!(fs::read_to_string(out.join("sweep.csv")).unwrap().lines().count(), 6);
}

#[test]
fn one_point_axis_is_rejected() {
    let t = tempfile::tempdir().unwrap();
    let cfg = r#"{"grid": {"d": 1, "n": 64}, "stability": {"family": "ou-drift"},
                 "sweep": {"target": "stability", "values": [0.1]}}"#;
    let o = run(t.path(), "sweep", cfg, "out", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sweep.values"));
}

const MIXED: &str = r#"{
  "grid": {"d": 1, "R": 8, "n": 256},
  "model": {"drift": {"components": ["-x"], "bounds": {"beta": 1, "beta1": 1, "beta2": 1, "beta3": 1}}},
  "stability": {"family": "custom", "checks": {"c_hat_spread_max": null},
    "perturbed": {"diffusion": {"entries": ["1 + delta"], "lambda": 0.5},
                  "drift": {"components": ["-x"], "bounds": {"beta": 1, "beta1": 1, "beta2": 1, "beta3": 1}}}},
  "sweep": {"target": "stability", "values": [0.001, 0.01, 0.1, 5.0]}
}"#;

#[test]
fn lenient_sweep_enumerates_failures_and_exits_zero() {
    let t = tempfile::tempdir().unwrap();
    let o = run(t.path(), "sweep", MIXED, "out", &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let out = t.path().join("out");
    let report = json(&out.join("report.json"));
    let failures = report["failures"].as_array().unwrap();
    assert_eq!(failures.len(), 1);
    assert_eq!(failures[0]["index"], 3);
    let summary = json(&out.join("sweep.json"));
    assert_eq!(summary["failures"], 1);
    assert_eq!(summary["points"][3]["ok"], false);
    assert!(summary["slope"].as_f64().is_some());
    let point = json(&out.join("point-003/report.json"));
    assert!(point["error"].is_string());
}

#[test]
fn strict_sweep_fails_on_any_point() {
    let t = tempfile::tempdir().unwrap();
    let o = run(t.path(), "sweep", MIXED, "out", &["--strict"]);
    assert_eq!(o.status.code(), Some(3));
    let report = json(&t.path().join("out/report.json"));
    assert!(report["error"].is_string());
    assert_eq!(report["passed"], false);
}

#[test]
fn removing_a_point_leaves_the_others_unchanged() {
    let t = tempfile::tempdir().unwrap();
    let cfg = |values: &str| {
        format!(
            r#"{{"model": {{"builtin": "ou-1d"}}, "grid": {{"d": 1, "R": 8, "n": 128}},
               "meanfield": {{"kernel": {{"builtin": "tanh-drift"}}, "starts": [{{"mean": [0.5], "var": 1}}]}},
               "sweep": {{"target": "meanfield", "values": {values}}}}}"#
        )
    };
    assert_eq!(
        run(t.path(), "sweep", &cfg("[0.02, 0.05, 0.1, 0.2]"), "full", &[])
            .status
            .code(),
        Some(0)
    );
    assert_eq!(
        run(t.path(), "sweep", &cfg("[0.02, 0.1, 0.2]"), "part", &[])
            .status
            .code(),
        Some(0)
    );
    for (full, part) in [(0, 0), (2, 1), (3, 2)] {
        for f in ["meanfield.csv", "meanfield.json"] {
            let a = fs::read(t.path().join(format!("full/point-{full:03}/{f}"))).unwrap();
            let b = fs::read(t.path().join(format!("part/point-{part:03}/{f}"))).unwrap();
            assert_eq!(a, b, "point {full} vs {part}: {f}");
        }
    }
    let summary = json(&t.path().join("full/sweep.json"));
    assert!(summary["fit_r_squared"].as_f64().unwrap() > 0.9);
}

#[test]
fn poisson_command_reports_bounds_and_witness() {
    let t = tempfile::tempdir().unwrap();
    let cfg = r#"{"grid": {"d": 1, "R": 8, "n": 256}, "poisson": {"builtin": "ou-tanh-1d", "k": 2}}"#;
    let o = run(t.path(), "poisson", cfg, "out", &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let r = json(&t.path().join("out/poisson.json"));
    for key in ["G0", "G1", "H", "Psi", "M0", "R0"] {
        assert!(r[key].as_f64().unwrap().is_finite(), "{key}");
    }
    assert_eq!(r["k"], 2.0);
    let csv = fs::read_to_string(t.path().join("out/poisson.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("x,u,du,residual"));
}

#[test]
fn two_dimensional_solve_and_meanfield() {
    let t = tempfile::tempdir().unwrap();
    let cfg = r#"{"model": {"builtin": "ou-anisotropic-2d"}, "grid": {"d": 2, "R": 8, "n": 64},
                 "solve": {"weighted_lp": {"k": 1, "p": 2}}}"#;
    assert_eq!(run(t.path(), "solve", cfg, "s", &[]).status.code(), Some(0));
    let csv = fs::read_to_string(t.path().join("s/solve.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("x1,x2,rho"));
    assert_eq!(csv.lines().count(), 64 * 64 + 1);
    assert!(
        json(&t.path().join("s/solve.json"))["weighted_lp_norm"]
            .as_f64()
            .unwrap()
            > 0.0
    );

    let cfg = r#"{"model": {"builtin": "ou-2d"}, "grid": {"d": 2, "R": 8, "n": 32},
                 "meanfield": {"kernel": {"h": ["tanh(y1)", "0"], "h_sup": 1}, "eps": 0.1,
                               "starts": [{"mean": [0.5, 0], "var": 1}], "contraction": false}}"#;
    let o = run(t.path(), "meanfield", cfg, "m", &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(json(&t.path().join("m/meanfield.json"))["converged"], true);
}

#[test]
fn shipped_configs_run_cleanly() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut names: Vec<PathBuf> = fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).collect();
    names.sort();
    assert!(names.len() >= 5);
    let t = tempfile::tempdir().unwrap();
    for path in names {
        let cfg = json(&path);
        let cmd = cfg["command"].as_str().expect("shipped configs name their command");
        let out = t.path().join(path.file_stem().unwrap());
        let o = fpk(
            &[cmd, "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()],
            t.path(),
        );
        assert_eq!(
            o.status.code(),
            Some(0),
            "{path:?}: {}",
            String::from_utf8_lossy(&o.stdout)
        );
    }
}
