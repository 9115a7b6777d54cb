use std::collections::HashMap;
use std::fs;
use std::process::{Command, Output};

use alm_panoc_cli::{cmd_mpc, cmd_suite, RunConfig};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_alm-panoc")).args(args).output().unwrap()
}

fn json(path: &std::path::Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const MPC_HEADER: &str = "step,variant,warm,inner_iters,outer_iters,f_evals,grad_f_evals,g_evals,grad_g_prod_evals,grad_psi_evals,wall_time_s,status";

#[test]
fn solve_writes_a_converged_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let o = bin(&[
        "solve",
        "--problem",
        "rosenbrock-box",
        "--variant",
        "approx-struct-panoc-ils",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&out);
    assert_eq!(r["status"], "Converged");
    assert_eq!(r["kkt_verified"], true);
    assert!(r["stationarity"].as_f64().unwrap() <= 1e-3);
    assert!(r["violation"].as_f64().unwrap() <= 1e-3);
    assert!(r["wall_time_s"].as_f64().unwrap() >= 0.0);
    let x: Vec<f64> = serde_json::from_value(r["x"].clone()).unwrap();
    assert!((x[0] - 1.0).abs() < 1e-2 && (x[1] - 1.0).abs() < 1e-2);
}

#[test]
fn unknown_problem_is_a_config_error() {
    let o = bin(&["solve", "--problem", "no-such-problem"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown problem"));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(bin(&["solve", "--bogus"]).status.code(), Some(2));
    assert_eq!(bin(&["mpc", "--warm", "--cold"]).status.code(), Some(2));
    assert_eq!(bin(&["solve", "--problem", "hs071", "--variant", "newton"]).status.code(), Some(2));
}

#[test]
fn outer_budget_failure_still_writes_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let o = bin(&["solve", "--problem", "hs071", "--max-outer", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(json(&out)["status"], "MaxOuterIter");
}

#[test]
fn config_file_is_strict_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "problem = \"penalty-1d\"\nvariant = \"panoc\"\n[alm]\neps = 1e-2\n").unwrap();
    let out = dir.path().join("r.json");
    let o = bin(&["solve", "--config", cfg.to_str().unwrap(), "--eps", "1e-6", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let r = json(&out);
    assert_eq!(r["variant"], "panoc");
    assert_eq!(r["eps"], 1e-6);

    fs::write(&cfg, "problem = \"penalty-1d\"\ntolerance = 1e-2\n").unwrap();
    let o = bin(&["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("tolerance"));
}

#[test]
fn mpc_csv_has_the_documented_layout() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mpc.csv");
    let o = bin(&[
        "mpc",
        "--balls",
        "3",
        "--horizon",
        "10",
        "--steps",
        "3",
        "--variants",
        "panoc,struct-panoc-ils",
        "--jobs",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert!(!text.contains('\r'));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], MPC_HEADER);
    assert_eq!(lines.len(), 1 + 3 * 2 * 2);
    assert!(lines[1].starts_with("0,panoc,false,"));
    assert!(lines.last().unwrap().starts_with("2,struct-panoc-ils,true,"));
    assert!(lines[1..].iter().all(|l| l.ends_with(",Converged") && l.split(',').count() == 12));
}

#[test]
fn full_mpc_grid_and_warm_start_benefit() {
    let cfg = RunConfig::from_toml("n_steps = 10\njobs = 4\n[chain]\nn_balls = 3\nhorizon = 10\n").unwrap();
    let rows = cmd_mpc(&cfg.resolve().unwrap()).unwrap();
    assert_eq!(rows.len(), 120);
    let mut totals: HashMap<(String, bool), usize> = HashMap::new();
    for r in &rows {
        *totals.entry((r.variant.clone(), r.warm)).or_default() += r.inner_iters;
    }
    for v in alm_panoc::SolverVariant::ALL {
        let (w, c) = (totals[&(v.to_string(), true)], totals[&(v.to_string(), false)]);
        assert!(w < c, "{v}: warm {w} vs cold {c}");
    }
}

#[test]
fn suite_counts_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for (path, jobs) in [(&a, "1"), (&b, "3")] {
        let o = bin(&["suite", "--variants", "panoc", "--seed", "5", "--jobs", jobs, "--out", path.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
        assert!(String::from_utf8_lossy(&o.stderr).contains("panoc: solved"));
    }
    let strip = |p: &std::path::Path| -> Vec<String> {
        fs::read_to_string(p)
            .unwrap()
            .lines()
            .map(|l| {
                let mut cols: Vec<&str> = l.split(',').collect();
                cols.truncate(4);
                cols.join(",")
            })
            .collect()
    };
    let rows = strip(&a);
    assert_eq!(rows[0], "problem,variant,status,inner_iters");
    assert!(rows.len() > 20);
    assert!(rows[1..].iter().all(|r| r.split(',').nth(1) == Some("panoc")));
    assert_eq!(rows, strip(&b));

    let cfg = RunConfig::from_toml("variants = [\"panoc\", \"struct-panoc-ils\"]\njobs = 4").unwrap();
    let outcome = cmd_suite(&cfg.resolve().unwrap()).unwrap();
    let solved: HashMap<_, _> = outcome.solved.iter().copied().collect();
    assert!(outcome.total >= 20);
    assert!(solved[&alm_panoc::SolverVariant::StructPanocIls] >= solved[&alm_panoc::SolverVariant::Panoc]);
}
