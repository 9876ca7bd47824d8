use std::path::Path;
use std::process::{Command, Output};

use gocpt::harness::read_steps_csv;
use gocpt::tensor::io::read_coo_file;

fn gocpt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gocpt")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// steps.csv without the timing column.
fn untimed(csv: &Path) -> String {
    std::fs::read_to_string(csv)
        .unwrap()
        .lines()
        .map(|l| {
            let cols: Vec<&str> = l.split(',').collect();
            [&cols[..4], &cols[5..]].concat().join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

const SMALL: [&str; 8] = ["--shape", "6,5,12", "--rank", "2", "--prep-iters", "30", "--seed", "3,4"];

#[test]
fn run_is_deterministic_apart_from_timing() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = gocpt(&[&["run", "--scenario", "general"][..], &SMALL, &["--out", path(out)]].concat());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = untimed(&a.join("steps.csv"));
    assert!(text.starts_with("solver,seed,t,pof,nnz_delta,shape\n"));
    assert_eq!(text, untimed(&b.join("steps.csv")));
    let records = read_steps_csv(a.join("steps.csv")).unwrap();
    // 12 slices at 50% prep -> 6 steps, four default solvers, two seeds
    assert_eq!(records.len(), 6 * 4 * 2);

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("summary.json")).unwrap()).unwrap();
    let solvers = summary["solvers"].as_array().unwrap();
    assert_eq!(solvers.len(), 4);
    for s in solvers {
        assert_eq!(s["runs"], 2);
        assert!(s["avg_pof_mean"].as_f64().unwrap() <= 1.0);
        assert!(s["total_time_ms_std"].as_f64().unwrap() >= 0.0);
    }
}

#[test]
fn generate_writes_mask_with_exact_cardinality() {
    let dir = tempfile::tempdir().unwrap();
    let o = gocpt(&[&["generate", "--density", "0.02"][..], &["--shape", "10,10,20", "--out", path(dir.path())]].concat());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mask = read_coo_file(dir.path().join("mask.coo")).unwrap();
    assert_eq!(mask.nnz(), 40);
    let truth = read_coo_file(dir.path().join("truth.coo")).unwrap();
    assert_eq!(truth.nnz(), 2000);
    assert!(dir.path().join("events.jsonl").exists());

    // the generated files drive a replay
    let out = dir.path().join("replay");
    let o = gocpt(&[
        "run",
        "--events",
        path(&dir.path().join("events.jsonl")),
        "--rank",
        "2",
        "--prep-iters",
        "10",
        "--max-steps",
        "3",
        "--solver",
        "gocpt_e",
        "--out",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read_steps_csv(out.join("steps.csv")).unwrap().len(), 3);
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.json");
    std::fs::write(
        &cfg,
        r#"{"scenario": "factorization", "shape": [5, 4, 10], "rank": 2, "prep_iters": 20, "solvers": ["gocpt", "em_als_decay"]}"#,
    )
    .unwrap();
    let out = dir.path().join("r");
    let o = gocpt(&["run", "--config", path(&cfg), "--seed", "7", "--strategy", "sparse", "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let records = read_steps_csv(out.join("steps.csv")).unwrap();
    assert_eq!(records.len(), 2 * 9);
    assert!(records.iter().all(|r| r.seed == 7));
    assert_eq!(records[0].solver, "gocpt");
    assert_eq!(records.last().unwrap().solver, "em_als_decay");
}

#[test]
fn plot_writes_svg() {
    let dir = tempfile::tempdir().unwrap();
    let o = gocpt(&[&["run"][..], &SMALL, &["--variant", "efficient", "--out", path(dir.path())]].concat());
    assert!(o.status.success());
    let o = gocpt(&["plot", path(&dir.path().join("steps.csv")), "--out", path(dir.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let svg = std::fs::read_to_string(dir.path().join("pof.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("gocpt_e"));
}

#[test]
fn plot_of_empty_csv_fails_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("steps.csv");
    std::fs::write(&csv, "solver,seed,t,pof,step_time_ms,nnz_delta,shape\n").unwrap();
    let o = gocpt(&["plot", path(&csv), "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!dir.path().join("pof.svg").exists());
}

#[test]
fn ablation_writes_csv_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let o = gocpt(&[
        "ablate-density",
        "--shape",
        "8,8,8",
        "--rank",
        "2",
        "--densities",
        "0.2,1.0",
        "--iters",
        "5",
        "--out",
        path(dir.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 2);
    assert!(dir.path().join("ablation.svg").exists());
}

#[test]
fn usage_errors_exit_one() {
    for args in [
        &["run", "--bogus"][..],
        &["run", "--solver", "nope"],
        &["run", "--variant", "full", "--solver", "gocpt"],
        &["run", "--alpha-schedule", "linear:2"],
        &["run", "--seed", ""],
        &["run", "--config", "/nonexistent/exp.json"],
        &["run", "--shape", "3,0,2"],
        &["frobnicate"],
        &[],
    ] {
        let o = gocpt(args);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(gocpt(&["--help"]).status.code(), Some(0));
    assert_eq!(gocpt(&["run", "--help"]).status.code(), Some(0));
}

#[test]
fn singular_solve_exits_two() {
    // all-zero data with no ridge collapses a factor to zero and leaves
    // the next gram singular
    let dir = tempfile::tempdir().unwrap();
    let tensor = dir.path().join("zeros.coo");
    let mut text = String::from("dims: 3 3 4 base: 0\n");
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..4 {
                text.push_str(&format!("{i} {j} {k} 0\n"));
            }
        }
    }
    std::fs::write(&tensor, text).unwrap();
    let out = dir.path().join("r");
    let o = gocpt(&["run", "--tensor", path(&tensor), "--beta", "0", "--rank", "2", "--solver", "cpc_als", "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["failures"][0]["t"], 0);
    assert_eq!(summary["solvers"][0]["runs"], 0);
}
