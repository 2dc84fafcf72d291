use std::path::Path;
use std::process::{Command, Output};

fn dbpmc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dbpmc")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

const SMALL: &str = r#"
[system]
antennas = 8
users = 2
clusters = 2
qam_order = 4

[run]
snr_db = [4.0, 8.0]
max_bits = 4000
max_errors = 100

[[detector]]
kind = "mini-nag-mcmc"
batch_size = 1
samples = 8

[[detector]]
kind = "lmmse"

[[detector]]
kind = "ml"
"#;

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("exp.toml");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn ber_writes_csv_for_every_detector_and_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out_dir = dir.path().join("out");
    let out = dbpmc(&[
        "ber",
        "--config",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
        "--workers",
        "2",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let ber = std::fs::read_to_string(out_dir.join("ber.csv")).unwrap();
    assert_eq!(
        ber.lines().next().unwrap(),
        "detector,snr_db,bits,bit_errors,ber,ci_lo,ci_hi"
    );
    assert_eq!(ber.lines().count(), 1 + 3 * 2);
    assert!(out_dir.join("ser.csv").exists());

    // Same seed, different worker count: identical bytes.
    let again = dir.path().join("again");
    let out = dbpmc(&[
        "ber",
        "--config",
        &cfg,
        "--out",
        again.to_str().unwrap(),
        "--workers",
        "1",
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(ber, std::fs::read_to_string(again.join("ber.csv")).unwrap());
}

#[test]
fn bandwidth_and_complexity_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dbpmc(&["bandwidth", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(dir.path().join("bandwidth.csv")).unwrap();
    assert!(text.starts_with("mode,B,U,C,m,S,Ng,omega,M,bits,measured_bits"));
    assert!(dir.path().join("bandwidth_ratio.csv").exists());

    let out = dbpmc(&[
        "complexity",
        "--preset",
        "oracle",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn convergence_writes_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[system]\nantennas = 8\nusers = 2\nclusters = 2\nqam_order = 4\n\n[run]\ntrials = 50\nsamples_grid = [1, 2, 4]\n\n[[detector]]\nkind = \"mini-nag-mcmc\"\nbatch_size = 1\n",
    );
    let out = dbpmc(&["convergence", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn diagnose_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = dbpmc(&["diagnose", "--out", d]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("diagnostics.json")).unwrap()).unwrap();
    assert!(json["checks"].as_array().unwrap().len() > 5);

    assert_eq!(
        code(&dbpmc(&["diagnose", "--suites", "stationary,hessian", "--out", d])),
        0
    );
    assert_eq!(
        code(&dbpmc(&[
            "diagnose",
            "--suites",
            "detailed-balance",
            "--mutate",
            "--out",
            d
        ])),
        3
    );
    assert_eq!(code(&dbpmc(&["diagnose", "--suites", "", "--out", d])), 1);
    assert_eq!(code(&dbpmc(&["diagnose", "--suites", "nonsense", "--out", d])), 1);
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(code(&dbpmc(&["frobnicate"])), 1);
    assert_eq!(code(&dbpmc(&["ber", "--preset", "no-such-preset"])), 1);
    assert_eq!(code(&dbpmc(&["validate-config"])), 1);
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[system]\nantennas = 8\nusers = 2\nclusters = 3\nqam_order = 4\n",
    );
    assert_eq!(code(&dbpmc(&["validate-config", "--config", &cfg])), 1);
    assert_eq!(code(&dbpmc(&["--help"])), 0);
}

#[test]
fn validate_config_prints_a_loadable_spec() {
    let out = dbpmc(&["validate-config", "--preset", "fig3-desk"]);
    assert_eq!(code(&out), 0);
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), std::str::from_utf8(&out.stdout).unwrap());
    let again = dbpmc(&["validate-config", "--config", &cfg]);
    assert_eq!(code(&again), 0);
    assert_eq!(out.stdout, again.stdout);
}
