use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SMALL_SUITE: &str =
    "calibration_runs = 3\nmin_scripts = 5\nmagnitude_fractions = [1.0]\nstart_times_s = [2.0]\n";

fn bin(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rav-recover"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn build_small_suite(dir: &Path, out: &str) -> Output {
    fs::write(dir.join("suite.toml"), SMALL_SUITE).unwrap();
    bin(
        dir,
        &[
            "--sequential",
            "--out",
            out,
            "suite-build",
            "--config",
            "suite.toml",
        ],
    )
}

#[test]
fn phase2_without_checkpoint_is_a_config_error() {
    let d = tempfile::tempdir().unwrap();
    let o = bin(d.path(), &["--out", "p2", "train", "--phase", "2"]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    let m = json(&d.path().join("p2/manifest.json"));
    assert!(m["error"].as_str().unwrap().contains("init"));
}

#[test]
fn malformed_config_exits_with_config_code() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("bad.toml"), "no_such_field = 3\n").unwrap();
    let o = bin(
        d.path(),
        &["--out", "s", "suite-build", "--config", "bad.toml"],
    );
    assert_eq!(code(&o), 2);
    let o = bin(
        d.path(),
        &[
            "--out",
            "e",
            "eval",
            "--checkpoint",
            "missing.json",
            "--attack-free",
            "1",
        ],
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn unreachable_suite_size_fails_validation() {
    let d = tempfile::tempdir().unwrap();
    fs::write(
        d.path().join("suite.toml"),
        SMALL_SUITE.replace("min_scripts = 5", "min_scripts = 10000"),
    )
    .unwrap();
    let o = bin(
        d.path(),
        &[
            "--sequential",
            "--out",
            "s",
            "suite-build",
            "--config",
            "suite.toml",
        ],
    );
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn suite_build_is_reproducible_and_reports_rejections() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&build_small_suite(d.path(), "a")), 0);
    assert_eq!(code(&build_small_suite(d.path(), "b")), 0);
    let a = fs::read(d.path().join("a/suite.json")).unwrap();
    let b = fs::read(d.path().join("b/suite.json")).unwrap();
    assert_eq!(a, b);
    let ma = json(&d.path().join("a/manifest.json"));
    let mb = json(&d.path().join("b/manifest.json"));
    assert_eq!(ma["outputs"]["suite"], mb["outputs"]["suite"]);
    assert!(ma["config_sha256"].is_string());

    let suite = json(&d.path().join("a/suite.json"));
    let accepted = suite["entries"].as_array().unwrap().len();
    let rejected = suite["rejected"].as_array().unwrap().len();
    assert!(accepted >= 5);
    assert!(suite["t_min_s"].as_f64().unwrap() <= suite["t_max_s"].as_f64().unwrap());
    let rows = fs::read_to_string(d.path().join("a/rejected.csv"))
        .unwrap()
        .lines()
        .count();
    assert_eq!(rows, rejected + 1);
}

#[test]
fn training_eval_and_replay_end_to_end() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    assert_eq!(code(&build_small_suite(p, "s")), 0);

    for out in ["p1a", "p1b"] {
        let o = bin(
            p,
            &[
                "--sequential",
                "--out",
                out,
                "train",
                "--phase",
                "1",
                "--steps",
                "400",
            ],
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let ha = json(&p.join("p1a/manifest.json"))["outputs"]["policy"].clone();
    let hb = json(&p.join("p1b/manifest.json"))["outputs"]["policy"].clone();
    assert_eq!(ha, hb);
    let curve_rows = fs::read_to_string(p.join("p1a/curve.csv"))
        .unwrap()
        .lines()
        .count()
        - 1;
    let report = json(&p.join("p1a/report.json"));
    assert_eq!(curve_rows, report["curve"].as_array().unwrap().len());
    assert!(curve_rows > 0);

    let o = bin(
        p,
        &[
            "--sequential",
            "--out",
            "none",
            "eval",
            "--suite",
            "s/suite.json",
            "--mode",
            "none",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = json(&p.join("none/metrics.json"));
    assert_eq!(m["svr_percent"].as_f64().unwrap(), 100.0);
    assert!(p.join("none/aggregate.csv").exists());

    let o = bin(
        p,
        &[
            "--sequential",
            "--out",
            "nosr",
            "eval",
            "--suite",
            "s/suite.json",
            "--checkpoint",
            "p1a/policy.json",
            "--ablate",
            "no-sr",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        json(&p.join("nosr/metrics.json"))["label"],
        "ablation-no-sr"
    );

    let o = bin(
        p,
        &["--out", "fl", "fly", "--checkpoint", "p1a/policy.json"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = bin(
        p,
        &[
            "--out",
            "rp",
            "replay",
            "fl/record.jsonl",
            "--checkpoint",
            "p1a/policy.json",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));

    for dir in ["s", "p1a", "p1b", "none", "nosr", "fl", "rp"] {
        assert!(p.join(dir).join("manifest.json").exists(), "{dir}");
    }
}
