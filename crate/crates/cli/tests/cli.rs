use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn arblab(args: &[&str]) -> Output {
    arblab_env(args, None)
}

fn arblab_env(args: &[&str], seed_env: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_arblab"));
    cmd.args(args).env_remove("ARBLAB_SEED");
    if let Some(s) = seed_env {
        cmd.env("ARBLAB_SEED", s);
    }
    cmd.output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.json");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn bessel_exit_probability_is_one() {
    let v = json(&arblab(&[
        "estimate-u",
        "--model",
        "bessel3",
        "--x0",
        "1",
        "--T",
        "1",
        "--method",
        "exit",
        "--paths",
        "20000",
    ]));
    assert!(v["value"].as_f64().unwrap() >= 0.99, "{v}");
    assert_eq!(v["n_paths"], 20000);
}

#[test]
fn fichera_report_on_first_face() {
    let v = json(&arblab(&[
        "fichera", "--model", "volstab", "--zeta", "1", "--n", "3", "--face", "1",
    ]));
    assert_eq!(v["sign_pattern_holds"], true);
    assert!(v["f_face_min"].as_f64().unwrap() > 0.0);
    assert!(v["f_hat_face_max"].as_f64().unwrap() < 0.0);
    assert!(v["closed_form_max_abs_error"].as_f64().unwrap() < 1e-10);
    for row in v["samples"].as_array().unwrap() {
        assert_eq!(row["x"][0], 0.0);
    }
}

#[test]
fn zero_horizon_simulation_echoes_the_initial_state() {
    let v = json(&arblab(&[
        "simulate", "--model", "volstab", "--n", "2", "--zeta", "1", "--x0", "1,1", "--T", "0",
    ]));
    assert_eq!(v["n_steps"], 0);
    assert_eq!(v["initial"], serde_json::json!([1.0, 1.0]));
    assert_eq!(v["recorded_times"], serde_json::json!([0.0]));
    assert_eq!(v["hit_fraction"], 0.0);
}

#[test]
fn agreement_table_lists_three_pairs() {
    let v = json(&arblab(&[
        "estimate-u",
        "--model",
        "volstab",
        "--x0",
        "1,1",
        "--T",
        "0.5",
        "--method",
        "all",
        "--paths",
        "2000",
    ]));
    let text = v.to_string();
    assert!(text.contains("joint_sigma"), "{text}");
    assert_eq!(v["agreement"].as_array().map(Vec::len), Some(3), "{v}");
}

#[test]
fn help_lists_precedence() {
    let out = arblab(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("command-line flag, then the --config file"));
}

#[test]
fn validation_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"model": {"name": "volstab"}, "sim": {"dtt": 0.1}}"#,
    );
    let cases: [Vec<&str>; 5] = [
        vec!["simulate", "--config", &cfg],
        vec!["simulate", "--model", "volstab", "--x0", "1,-1"],
        vec!["simulate", "--model", "volstab", "--x0", "1,1,1"],
        vec!["estimate-u", "--model", "nosuch", "--x0", "1"],
        vec!["frobnicate"],
    ];
    for args in cases {
        let out = arblab(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(out.stdout.is_empty(), "{args:?}");
        assert!(!out.stderr.is_empty(), "{args:?}");
    }
}

#[test]
fn missing_files_exit_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.json");
    let out = arblab(&["simulate", "--config", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    let csv = dir.path().join("absent.csv");
    let out = arblab(&[
        "solve-pde",
        "--model",
        "volstab",
        "--x0",
        "1,1",
        "--load",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn unreachable_step_count_exits_with_three() {
    let out = arblab(&[
        "solve-pde",
        "--model",
        "volstab",
        "--x0",
        "1,1",
        "--T",
        "1000",
        "--points",
        "2001",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("step"));
}

#[test]
fn seed_precedence_is_flag_config_env() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"model": {"name": "volstab"}, "x0": [1, 1], "T": 0.3, "seed": 5}"#,
    );
    let base = ["estimate-u", "--method", "exit", "--paths", "500"];
    let with = |extra: &[&str], env: Option<&str>| {
        let mut args = base.to_vec();
        args.extend_from_slice(extra);
        arblab_env(&args, env).stdout
    };
    let config_seed = with(&["--config", &cfg], None);
    let flag_seed = with(&["--config", &cfg, "--seed", "5"], None);
    assert_eq!(config_seed, flag_seed);
    // the config wins over the environment, the flag over both
    assert_eq!(with(&["--config", &cfg], Some("6")), config_seed);
    let flag6 = with(&["--config", &cfg, "--seed", "6"], Some("5"));
    assert_ne!(flag6, config_seed);
    let plain = ["--model", "volstab", "--x0", "1,1", "--T", "0.3"];
    assert_eq!(with(&plain, Some("6")), flag6);
    assert_eq!(with(&[&plain[..], &["--seed", "6"]].concat(), None), flag6);
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"model": {"name": "volstab"}, "x0": [1, 1], "T": 0.3, "mc": {"paths": 300}, "sim": {"steps_per_unit": 500}}"#,
    );
    let v = json(&arblab(&[
        "estimate-u",
        "--config",
        &cfg,
        "--method",
        "exit",
    ]));
    assert_eq!(v["n_paths"], 300);
    assert_eq!(v["cfg_echo"]["n_steps"], 150);
    let v = json(&arblab(&[
        "estimate-u",
        "--config",
        &cfg,
        "--method",
        "exit",
        "--paths",
        "200",
        "--dt",
        "0.01",
    ]));
    assert_eq!(v["n_paths"], 200);
    assert_eq!(v["cfg_echo"]["n_steps"], 30);
}

#[test]
fn stdout_is_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let runs: [&[&str]; 3] = [
        &[
            "simulate", "--model", "volstab", "--n", "3", "--zeta", "0.5", "--x0", "1,2,3", "--T",
            "0.2", "--paths", "200",
        ],
        &[
            "estimate-u",
            "--model",
            "volstab",
            "--x0",
            "1,1",
            "--T",
            "0.5",
            "--method",
            "deflated",
            "--paths",
            "1000",
        ],
        &[
            "backtest",
            "--model",
            "volstab",
            "--x0",
            "1,1",
            "--T",
            "0.3",
            "--strategy",
            "diversity",
            "--p",
            "0.5",
            "--paths",
            "200",
        ],
    ];
    for args in runs {
        let a = arblab(&[args, &["--workers", "1"][..]].concat());
        let b = arblab(&[args, &["--workers", "4"][..]].concat());
        assert!(a.status.success() && b.status.success(), "{args:?}");
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
    let csv = dir.path().join("p.csv");
    let out = arblab(&[
        "simulate",
        "--model",
        "bessel3",
        "--x0",
        "1",
        "--T",
        "0.1",
        "--paths",
        "5",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(std::fs::read_to_string(&csv).unwrap().lines().count() > 5);
}

#[test]
fn solution_round_trips_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("u.csv");
    let path = csv.to_str().unwrap();
    let grid = ["--model", "volstab", "--x0", "1,1", "--T", "0.5"];
    let solved = json(&arblab(
        &[&grid[..], &["solve-pde", "--points", "41", "--out", path]].concat(),
    ));
    let loaded = json(&arblab(
        &[&grid[..], &["solve-pde", "--load", path]].concat(),
    ));
    assert_eq!(solved["value"], loaded["value"]);
    let u = solved["value"].as_f64().unwrap();
    assert!(u > 0.8 && u < 0.9, "{u}");
    let w = json(&arblab(
        &[
            &grid[..],
            &["strategy", "--kind", "optimal", "--solution", path],
        ]
        .concat(),
    ));
    let pi = w["pi"].as_array().unwrap();
    assert!(
        (pi[0].as_f64().unwrap() - pi[1].as_f64().unwrap()).abs() < 1e-9,
        "{w}"
    );
}
