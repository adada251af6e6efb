use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use inflate_core::scenarios::Scenario;
use serde_json::Value;

fn inflate(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_inflate"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn first_line(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

fn golden(name: &str) -> String {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    first_line(&p)
}

#[test]
fn norms_csv_header_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let out = inflate(dir.path(), &["run", "--case", "case2", "--N", "64,128", "--K", "3"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(first_line(&dir.path().join("norms.csv")), golden("norms_header.csv"));
    let rows = fs::read_to_string(dir.path().join("norms.csv")).unwrap();
    assert_eq!(rows.lines().count(), 3);
    assert!(dir.path().join("ratio.svg").exists());
}

#[test]
fn sweep_headers_follow_the_target_norm() {
    let dir = tempfile::tempdir().unwrap();
    let out = inflate(dir.path(), &["sweep", "--case", "case6", "--N", "64,256", "--r", "0.5", "--rho", "0.7", "--K", "4"]);
    assert_eq!(code(&out), 0);
    assert_eq!(first_line(&dir.path().join("sweep.csv")), golden("sweep_header.csv"));
    let text = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let exps: Vec<String> = rd.records().map(|r| r.unwrap()[14].to_string()).collect();
    assert!(exps.iter().all(|e| !e.is_empty() && e == &exps[0]));

    let b = tempfile::tempdir().unwrap();
    let out = inflate(b.path(), &["sweep", "--case", "appB_sub", "--N", "64"]);
    assert_eq!(code(&out), 0);
    assert_eq!(first_line(&b.path().join("sweep.csv")), golden("sweep_dnorm_header.csv"));
    let text = fs::read_to_string(b.path().join("sweep.csv")).unwrap();
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let row = rd.records().next().unwrap().unwrap();
    // one N: no fit
    assert_eq!(&row[14], "");
    assert_eq!(&row[15], "");
}

#[test]
fn report_records_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = inflate(dir.path(), &["run", "--case", "case5", "--N", "16,32", "--K", "4", "--r", "0.2"]);
    assert_eq!(code(&out), 0);
    let text = fs::read_to_string(dir.path().join("report.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 2);
    for line in text.lines() {
        let rec: Value = serde_json::from_str(line).unwrap();
        let sc: Scenario = serde_json::from_value(rec["scenario"].clone()).unwrap();
        assert_eq!(serde_json::to_value(&sc).unwrap(), rec["scenario"]);
        assert_eq!(sc.r, 0.2);
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    // usage and configuration problems
    assert_eq!(code(&inflate(p, &["run", "--case", "case6"])), 1);
    assert_eq!(code(&inflate(p, &["run", "--case", "case6", "--N", "48"])), 1);
    assert_eq!(code(&inflate(p, &["run", "--case", "nope", "--N", "64"])), 1);
    assert_eq!(code(&inflate(p, &["run", "--case", "case6", "--N", "64", "--T", "0.1", "--rho", "0.5"])), 1);
    assert_eq!(code(&inflate(p, &["frobnicate"])), 1);
    // numeric guards
    assert_eq!(code(&inflate(p, &["resonance", "--nu", "2", "--range", "100"])), 2);
    let out = inflate(p, &["run", "--case", "case6", "--N", "64", "--r", "0.5", "--rho", "1.5", "--K", "7"]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("convergence radius"));
    assert_eq!(code(&inflate(p, &["--help"])), 0);
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.json");
    fs::write(
        &cfg,
        r#"{"schema": "inflate-config/1", "case": "case5", "N": [16, 64], "K": 3, "output_dir": "out", "emit": ["jsonl"]}"#,
    )
    .unwrap();
    let out = inflate(dir.path(), &["run", "--config", "exp.json", "--N", "32"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("out/report.jsonl")).unwrap();
    let recs: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0]["scenario"]["n"], 32);
    assert_eq!(recs[0]["k_max"], 3);
    assert!(!dir.path().join("out/norms.csv").exists());

    fs::write(&cfg, r#"{"schema": "inflate-config/0", "case": "case5"}"#).unwrap();
    assert_eq!(code(&inflate(dir.path(), &["run", "--config", "exp.json", "--N", "32"])), 1);
    fs::write(&cfg, r#"{"schema": "inflate-config/1", "cas": "case5"}"#).unwrap();
    assert_eq!(code(&inflate(dir.path(), &["run", "--config", "exp.json", "--N", "32"])), 1);
}

#[test]
fn resonance_summary_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = inflate(dir.path(), &["resonance", "--d", "1", "--nu", "2", "--range", "3"]);
    assert_eq!(code(&out), 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("equal=true"), "{stdout}");
    let text = fs::read_to_string(dir.path().join("resonance.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "k1,k2,k3,k4,k5,k,phase,source");
    let brute = text.lines().filter(|l| l.ends_with(",brute")).count();
    let param = text.lines().filter(|l| l.ends_with(",param")).count();
    assert!(brute > 0 && brute == param);

    let out = inflate(dir.path(), &["resonance", "--d", "1", "--nu", "1", "--range", "4"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("brute force only"));
    let text = fs::read_to_string(dir.path().join("resonance.csv")).unwrap();
    assert!(!text.contains(",param"));
}

#[test]
fn sequence_and_workers() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_inflate"))
        .current_dir(dir.path())
        .env("INFLATE_WORKERS", "2")
        .args(["sequence", "--p", "3", "--kmax", "7", "--c", "1"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("a_7 = 5/2"));
    assert!(stdout.contains("holds"));
    let bad = Command::new(env!("CARGO_BIN_EXE_inflate"))
        .current_dir(dir.path())
        .env("INFLATE_WORKERS", "0")
        .args(["sequence"])
        .output()
        .unwrap();
    assert_eq!(code(&bad), 1);
}
