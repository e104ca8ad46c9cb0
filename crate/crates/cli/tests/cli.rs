use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SPECTRUM_HEADER: &str = "index,eigenvalue,multiplicity,sector_mu,convention";
const HEAT_HEADER: &str = "t,value,tail_bound,kind";

fn heatlab() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_heatlab"));
    cmd.env_remove("HEATLAB_THREADS");
    cmd
}

fn run(args: &[&str]) -> Output {
    heatlab().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn interval(dir: &Path) -> PathBuf {
    write(dir, "interval.json", r#"{"type":"interval","a":0,"b":"pi"}"#)
}

fn warped(dir: &Path) -> PathBuf {
    write(
        dir,
        "warped.json",
        r#"{"type":"warped_product","base":{"a":0,"b":"pi"},
            "f":{"op":"mul","args":[{"const":0.3},{"var":"x"},{"op":"sub","args":[{"const":"pi"},{"var":"x"}]}]},
            "fiber":{"type":"circle","radius":1}}"#,
    )
}

fn files_in(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    v.sort();
    v
}

#[test]
fn interval_spectrum_lists_squares() {
    let dir = TempDir::new().unwrap();
    let spec = interval(dir.path());
    let o = run(&["spectrum", "--spec", spec.to_str().unwrap(), "--count", "10"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(SPECTRUM_HEADER));
    let values: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(values, (1..=10).map(|n| (n * n) as f64).collect::<Vec<_>>());
    assert!(text.contains("\n1,1.0000000000000000e0,1,,\n"));
}

#[test]
fn warped_spectrum_rows_carry_sectors_and_convention() {
    let dir = TempDir::new().unwrap();
    let spec = warped(dir.path());
    let o = run(&["spectrum", "--spec", spec.to_str().unwrap(), "--cutoff", "3", "--convention", "paper_literal"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let first = text.lines().nth(1).unwrap();
    let fields: Vec<&str> = first.split(',').collect();
    assert_eq!(fields.len(), 5);
    assert_eq!(fields[3], "0.0000000000000000e0");
    assert_eq!(fields[4], "paper_literal");
}

#[test]
fn heat_csv_headers_are_stable() {
    let dir = TempDir::new().unwrap();
    let spec = interval(dir.path());
    let s = spec.to_str().unwrap();
    let trace = stdout(&run(&["heat-trace", "--spec", s, "--tmin", "0.1", "--tmax", "1", "--tpoints", "4"]));
    assert_eq!(trace.lines().next(), Some(HEAT_HEADER));
    assert_eq!(trace.lines().count(), 1 + 5);
    assert!(trace.lines().skip(1).all(|l| l.ends_with(",trace")));
    let content = stdout(&run(&["heat-content", "--spec", s, "--tmin", "0.1", "--tmax", "1", "--tpoints", "2", "--grid", "64"]));
    let lines: Vec<&str> = content.lines().collect();
    assert_eq!(lines[0], HEAT_HEADER);
    assert_eq!(lines.len(), 1 + 3 + 3);
    assert!(lines[1..4].iter().all(|l| l.ends_with(",content")));
    assert!(lines[4..].iter().all(|l| l.ends_with(",pde_oracle")));
    let t: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(t[0], "1.0000000000000001e-1");
}

#[test]
fn identical_inputs_give_identical_bytes_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let spec = warped(dir.path());
    let s = spec.to_str().unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(format!("content-{threads}.csv"));
        let o = heatlab()
            .env("HEATLAB_THREADS", threads)
            .args(["heat-content", "--spec", s, "--tmin", "0.05", "--tmax", "2", "--out", out.to_str().unwrap()])
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(fs::read(&out).unwrap());
        let o = heatlab()
            .env("HEATLAB_THREADS", threads)
            .args(["spectrum", "--spec", s, "--cutoff", "20"])
            .output()
            .unwrap();
        outputs.push(o.stdout);
    }
    assert_eq!(outputs[0], outputs[2]);
    assert_eq!(outputs[1], outputs[3]);
}

#[test]
fn content_fit_recovers_the_volume() {
    let dir = TempDir::new().unwrap();
    let spec = interval(dir.path());
    let o = run(&["fit", "--kind", "content", "--spec", spec.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let beta0 = doc["coefficients_fitted"][0].as_f64().unwrap();
    assert!((beta0 - std::f64::consts::PI).abs() < 1e-8);
    assert!(doc["summary"][0].as_str().unwrap().starts_with("beta_0 = 3.14159265358"));
}

#[test]
fn invariants_report_coefficients() {
    let dir = TempDir::new().unwrap();
    let spec = interval(dir.path());
    let o = run(&["invariants", "--spec", spec.to_str().unwrap()]);
    assert!(o.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((doc["trace"][1].as_f64().unwrap() + 0.5).abs() < 1e-15);
    assert_eq!(doc["dim"].as_u64(), Some(1));
}

#[test]
fn verify_cover_reports_the_trace_gap() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("report.json");
    let o = run(&["verify", "cover", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    let keys: Vec<&str> = ["\"experiment\"", "\"inputs\"", "\"checks\"", "\"data\"", "\"verdict\"", "\"runtime_seconds\""]
        .into_iter()
        .collect();
    let positions: Vec<usize> = keys.iter().map(|k| text.find(k).unwrap()).collect();
    assert!(positions.windows(2).all(|w| w[0] < w[1]), "top-level field order changed");
    assert_eq!(doc["verdict"], "pass");
    let gap = doc["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["quantity"].as_str().unwrap().starts_with("circle trace gap |Tr1(4)"))
        .unwrap();
    assert!((gap["observed"].as_f64().unwrap() - 0.3006).abs() < 1e-4);
    let fields: Vec<&str> = gap.as_object().unwrap().keys().map(String::as_str).collect();
    for f in ["quantity", "expected", "observed", "tolerance", "comparison", "pass", "provenance", "negative_control"] {
        assert!(fields.contains(&f), "check record lacks {f}");
    }
}

#[test]
fn verify_reports_are_reproducible_apart_from_runtime() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "cfg.json", r#"{"t_count": 6, "control_radii": [2.5, 1.0]}"#);
    let mut docs = Vec::new();
    for threads in ["1", "3"] {
        let o = heatlab()
            .env("HEATLAB_THREADS", threads)
            .args(["verify", "cover", "--config", cfg.to_str().unwrap()])
            .output()
            .unwrap();
        assert!(o.status.success());
        let mut doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        assert_eq!(doc["inputs"]["t_count"], 6);
        doc["runtime_seconds"] = serde_json::Value::Null;
        docs.push(serde_json::to_string(&doc).unwrap());
    }
    assert_eq!(docs[0], docs[1]);
}

#[test]
fn usage_errors_exit_with_two_and_write_nothing() {
    let dir = TempDir::new().unwrap();
    let bad = write(dir.path(), "bad.json", r#"{"type":"interval","a":1}"#);
    let empty = write(dir.path(), "empty.json", r#"{"type":"interval","a":2,"b":1}"#);
    let good = interval(dir.path());
    let out = dir.path().join("out.csv");
    let o = |args: &[&str]| run(args).status.code();
    let out_s = out.to_str().unwrap();
    assert_eq!(o(&["spectrum", "--spec", bad.to_str().unwrap(), "--count", "3", "--out", out_s]), Some(2));
    assert_eq!(o(&["spectrum", "--spec", empty.to_str().unwrap(), "--count", "3", "--out", out_s]), Some(2));
    assert_eq!(o(&["spectrum", "--spec", good.to_str().unwrap(), "--out", out_s]), Some(2));
    assert_eq!(o(&["spectrum", "--spec", good.to_str().unwrap(), "--count", "3", "--convention", "other"]), Some(2));
    assert_eq!(o(&["heat-trace", "--spec", good.to_str().unwrap(), "--tmin", "-1", "--out", out_s]), Some(2));
    assert_eq!(o(&["verify", "nonsense"]), Some(2));
    let cfg = write(dir.path(), "cfg.json", r#"{"unknown_field": 1}"#);
    assert_eq!(o(&["verify", "cover", "--config", cfg.to_str().unwrap(), "--out", out_s]), Some(2));
    assert_eq!(o(&["frobnicate"]), Some(2));
    let threads = heatlab()
        .env("HEATLAB_THREADS", "zero")
        .args(["spectrum", "--spec", good.to_str().unwrap(), "--count", "3"])
        .output()
        .unwrap();
    assert_eq!(threads.status.code(), Some(2));
    assert!(!out.exists());
    assert_eq!(files_in(dir.path()), vec!["bad.json", "cfg.json", "empty.json", "interval.json"]);
}

#[test]
fn computation_errors_exit_with_one_and_leave_old_output_alone() {
    let dir = TempDir::new().unwrap();
    let spec = interval(dir.path());
    let out = dir.path().join("trace.csv");
    fs::write(&out, "previous\n").unwrap();
    let o = run(&[
        "heat-trace",
        "--spec",
        spec.to_str().unwrap(),
        "--cutoff",
        "4",
        "--tmin",
        "0.01",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("tail bound"));
    assert_eq!(fs::read_to_string(&out).unwrap(), "previous\n");
    assert_eq!(files_in(dir.path()), vec!["interval.json", "trace.csv"]);
}

#[test]
fn successful_runs_replace_output_atomically() {
    let dir = TempDir::new().unwrap();
    let spec = interval(dir.path());
    let out = dir.path().join("spectrum.csv");
    fs::write(&out, "previous\n").unwrap();
    let o = run(&["spectrum", "--spec", spec.to_str().unwrap(), "--cutoff", "30", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    assert!(fs::read_to_string(&out).unwrap().starts_with(SPECTRUM_HEADER));
    assert_eq!(files_in(dir.path()), vec!["interval.json", "spectrum.csv"]);
}

#[test]
fn help_documents_every_flag() {
    let help = |sub: &str| stdout(&run(&["help", sub]));
    let spectrum = help("spectrum");
    for flag in ["--spec", "--cutoff", "--count", "--convention", "--out", "--format"] {
        assert!(spectrum.contains(flag), "spectrum help lacks {flag}");
    }
    let trace = help("heat-trace");
    for flag in ["--tmin", "--tmax", "--tpoints", "--tolerance", "--cutoff"] {
        assert!(trace.contains(flag), "heat-trace help lacks {flag}");
    }
    assert!(help("heat-content").contains("--grid"));
    assert!(help("fit").contains("--kind"));
    assert!(help("verify").contains("--config"));
    let top = stdout(&run(&["--help"]));
    assert!(top.contains("HEATLAB_THREADS"));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}
