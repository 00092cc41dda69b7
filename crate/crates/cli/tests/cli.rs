use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn oustein(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oustein"))
        .args(args)
        .env_remove("OUSTEIN_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Compares stdout with `tests/golden/<name>`; `UPDATE_GOLDEN=1` rewrites it.
fn golden(name: &str, args: &[&str]) {
    let out = oustein(args);
    assert!(
        out.status.code().is_some_and(|c| c <= 1),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let file = golden_dir().join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(golden_dir()).unwrap();
        std::fs::write(&file, &out.stdout).unwrap();
    }
    let expected = std::fs::read_to_string(&file).expect("golden file present");
    assert_eq!(
        stdout(&out),
        expected,
        "output of {args:?} differs from {name}"
    );
}

#[test]
fn stein_verify_example_passes() {
    let out = oustein(&[
        "stein-verify",
        "--g",
        "terminal_square",
        "--path",
        "const:2",
        "--seed",
        "7",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let report = json(&out);
    assert_eq!(report["passed"], true);
    let detail = &report["checks"][0]["detail"];
    assert_eq!(detail["check"], "stein_residual");
    // 𝒜φ(g) = g and g(2) = 2² − 1
    assert_eq!(detail["reference"], 3.0);
    assert!(
        detail["residual"].as_f64().unwrap().abs()
            <= detail["tolerance"].as_f64().unwrap() + 4.0 * detail["stderr"].as_f64().unwrap()
    );
}

#[test]
fn stein_verify_with_horizon_adds_identity() {
    let out = oustein(&[
        "stein-verify",
        "--g",
        "terminal_linear",
        "--path",
        "const:1",
        "--t",
        "1",
        "--n",
        "2000",
    ]);
    let report = json(&out);
    let names: Vec<&str> = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["stein_residual", "lemma3"]);
}

#[test]
fn unknown_functional_lists_registry() {
    let out = oustein(&[
        "semigroup-eval",
        "--functional",
        "nope",
        "--u",
        "1",
        "--path",
        "const:1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    for name in oustein_core::REGISTRY {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn counterexample_has_one_row_per_k() {
    let out = oustein(&["counterexample", "--kmax", "8", "--n", "500"]);
    assert_eq!(json(&out)["witnesses"].as_array().unwrap().len(), 8);
    let csv = oustein(&[
        "counterexample",
        "--kmax",
        "8",
        "--n",
        "500",
        "--format",
        "csv",
    ]);
    let text = stdout(&csv);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,u_k,gap_ratio,stderr,surrogate"));
    assert_eq!(lines.count(), 8);
}

#[test]
fn failing_check_exits_one_and_still_writes() {
    // The pointwise gap at π/2 stays above 0.05 at u = 1e-4.
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("report.json");
    let out = oustein(&[
        "counterexample",
        "--kmax",
        "2",
        "--n",
        "500",
        "--out",
        target.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(target).unwrap()).unwrap();
    assert_eq!(report["passed"], false);
    assert!(out.stdout.is_empty());
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"samples": 3}"#).unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["--config", bad.to_str().unwrap(), "sample"],
        vec!["--config", "/nonexistent/config.json", "sample"],
        vec!["counterexample", "--kmax", "1001"],
        vec![
            "semigroup-eval",
            "--g",
            "terminal_linear",
            "--path",
            "const:1",
        ],
        vec![
            "semigroup-eval",
            "--g",
            "terminal_linear",
            "--u",
            "1",
            "--path",
            "const:x",
        ],
        vec![
            "stein-solve",
            "--g",
            "counterexample_sin",
            "--path",
            "const:1",
        ],
        vec!["lemma3", "--g", "terminal_linear", "--path", "const:1"],
        vec!["sample", "--n", "0"],
        vec!["sample", "--out", "/nonexistent/dir/out.json"],
        vec!["no-such-command"],
    ];
    for args in cases {
        assert_eq!(oustein(&args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"functional": "terminal_linear", "path": "const:1", "u": 0.5, "n": 100, "seed": 3}"#,
    )
    .unwrap();
    let from_file = json(&oustein(&[
        "--config",
        cfg.to_str().unwrap(),
        "semigroup-eval",
    ]));
    assert_eq!(from_file["seed"], 3);
    assert_eq!(from_file["n"], 100);
    let overridden = json(&oustein(&[
        "--config",
        cfg.to_str().unwrap(),
        "semigroup-eval",
        "--seed",
        "4",
    ]));
    assert_eq!(overridden["seed"], 4);
    assert_eq!(overridden["n"], 100);
}

#[test]
fn seed_falls_back_to_environment() {
    let run = |env: Option<&str>, extra: &[&str]| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_oustein"));
        cmd.args([
            "semigroup-eval",
            "--g",
            "terminal_square",
            "--u",
            "1",
            "--path",
            "const:0",
            "--n",
            "100",
        ])
        .args(extra)
        .env_remove("OUSTEIN_SEED");
        if let Some(seed) = env {
            cmd.env("OUSTEIN_SEED", seed);
        }
        serde_json::from_slice::<Value>(&cmd.output().unwrap().stdout).unwrap()["seed"].clone()
    };
    assert_eq!(run(None, &[]), 0);
    assert_eq!(run(Some("42"), &[]), 42);
    assert_eq!(run(Some("42"), &["--seed", "5"]), 5);
    let bad = Command::new(env!("CARGO_BIN_EXE_oustein"))
        .args(["sample"])
        .env("OUSTEIN_SEED", "minus one")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn sampled_path_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("w.json");
    let out = oustein(&[
        "sample",
        "--level",
        "4",
        "--seed",
        "9",
        "--out",
        file.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&file).unwrap();
    let path = oustein_core::Path::from_json(&text).unwrap();
    assert_eq!(path.to_json().unwrap() + "\n", text);
    assert_eq!(
        path,
        oustein_core::schauder::sample_brownian(4, 9).unwrap().path
    );

    let literal = format!("file:{}", file.display());
    let eval = oustein(&[
        "semigroup-eval",
        "--g",
        "terminal_linear",
        "--u",
        "0",
        "--path",
        &literal,
    ]);
    // reports carry 12 significant digits
    let mean = json(&eval)["mean"].as_f64().unwrap();
    assert!((mean - path.terminal()).abs() <= 1e-11 * path.terminal().abs());
}

#[test]
fn reports_are_byte_identical_across_runs_and_workers() {
    let base = [
        "stein-solve",
        "--g",
        "integral_square",
        "--path",
        "const:0.5",
        "--n",
        "3000",
        "--seed",
        "11",
    ];
    let a = oustein(&base);
    let b = oustein(&base);
    let mut threaded = base.to_vec();
    threaded.extend(["--threads", "3"]);
    let c = oustein(&threaded);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
}

#[test]
fn suite_is_deterministic_across_worker_counts() {
    let one = oustein(&["suite", "--seed", "7", "--n", "500", "--threads", "1"]);
    let three = oustein(&["suite", "--seed", "7", "--n", "500", "--threads", "3"]);
    assert!(!one.stdout.is_empty());
    assert_eq!(one.stdout, three.stdout);
    assert_eq!(one.status.code(), three.status.code());
    let report: Value = serde_json::from_slice(&one.stdout).unwrap();
    assert_eq!(report["checks"].as_array().unwrap().len(), 10);
}

#[test]
fn golden_semigroup_eval() {
    golden(
        "semigroup_eval.json",
        &[
            "semigroup-eval",
            "--g",
            "terminal_square",
            "--u",
            "0.5",
            "--path",
            "const:1.5",
            "--n",
            "1000",
            "--seed",
            "1",
        ],
    );
    golden(
        "semigroup_eval.csv",
        &[
            "semigroup-eval",
            "--g",
            "terminal_square",
            "--u",
            "0.5",
            "--path",
            "const:1.5",
            "--n",
            "1000",
            "--seed",
            "1",
            "--format",
            "csv",
        ],
    );
}

#[test]
fn golden_stein_reports() {
    golden(
        "stein_solve.json",
        &[
            "stein-solve",
            "--g",
            "terminal_linear",
            "--path",
            "const:2",
            "--n",
            "1000",
            "--seed",
            "1",
        ],
    );
    golden(
        "stein_verify.csv",
        &[
            "stein-verify",
            "--g",
            "integral_square",
            "--path",
            "const:1",
            "--t",
            "1",
            "--n",
            "1000",
            "--seed",
            "1",
            "--format",
            "csv",
        ],
    );
    golden(
        "lemma3.json",
        &[
            "lemma3",
            "--g",
            "terminal_square",
            "--path",
            "const:1",
            "--t",
            "0.5",
            "--n",
            "1000",
            "--seed",
            "1",
        ],
    );
    golden(
        "ftc.json",
        &[
            "ftc",
            "--functional",
            "terminal_cube",
            "--path",
            "const:1",
            "--r",
            "0.1",
            "--n",
            "1000",
            "--seed",
            "1",
        ],
    );
}

#[test]
fn golden_counterexample_and_sample() {
    golden(
        "counterexample.csv",
        &[
            "counterexample",
            "--kmax",
            "3",
            "--n",
            "500",
            "--seed",
            "1",
            "--format",
            "csv",
        ],
    );
    golden(
        "sample.csv",
        &["sample", "--level", "2", "--seed", "1", "--format", "csv"],
    );
}
