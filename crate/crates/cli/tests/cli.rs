//! End-to-end tests of the `biasaware` binary against the bundled demo data.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_biasaware"))
}

fn demo_csv() -> String {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    root.join("../../demo/demo.csv").to_string_lossy().into_owned()
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_str(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn common_args(extra: &[&str]) -> Vec<String> {
    let mut v: Vec<String> = vec![
        "--data".into(),
        demo_csv(),
        "--y".into(),
        "y".into(),
        "--w".into(),
        "w".into(),
        "--baseline".into(),
        "z1_0,z1_1".into(),
        "--restricted".into(),
        "*".into(),
        "--penalty".into(),
        "l1".into(),
    ];
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

#[test]
fn estimate_smoke_produces_both_reports() {
    let args = common_args(&["-C", "0.6"]);
    let mut full = vec!["estimate".to_string()];
    full.extend(args);
    let out = bin().args(&full).output().unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = stdout_str(&out);
    assert!(text.contains("\"schema_version\":1"));
    assert!(text.contains("\"mse\":{"));
    assert!(text.contains("\"flci\":{"));
    assert!(text.contains("\"criterion\":\"flci\""));
}

#[test]
fn estimate_output_is_byte_stable() {
    let args = common_args(&["-C", "0.4"]);
    let mut full = vec!["estimate".to_string()];
    full.extend(args);
    let a = bin().args(&full).output().unwrap();
    let b = bin().args(&full).output().unwrap();
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout, "two identical runs must emit identical bytes");
}

#[test]
fn unknown_flag_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out_file = dir.path().join("report.json");
    let out = run(&[
        "estimate",
        "--data",
        &demo_csv(),
        "--definitely-not-a-flag",
        "--out",
        out_file.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_file.exists(), "no output file may be written on a flag error");
}

#[test]
fn bad_schema_exits_2_with_json_error() {
    let args = common_args(&["-C", "0.5"]);
    let mut full = vec!["estimate".to_string()];
    full.extend(args);
    // override the outcome column with a nonexistent one
    let pos = full.iter().position(|a| a == "--y").unwrap();
    full[pos + 1] = "no_such_column".into();
    let out = bin().args(&full).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("\"error\""), "stderr was: {err}");
    assert!(err.contains("schema"));
}

#[test]
fn sensitivity_rows_match_independent_estimates() {
    let mut full = vec!["sensitivity".to_string()];
    full.extend(common_args(&["--c-grid", "0:0.6:0.3", "--null", "0", "--format", "csv"]));
    let out = bin().args(&full).output().unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = stdout_str(&out);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);

    for row in rows {
        let cells: Vec<&str> = row.split(',').collect();
        let c: f64 = cells[0].parse().unwrap();
        let beta: f64 = cells[1].parse().unwrap();
        let ci_lo: f64 = cells[5].parse().unwrap();
        let ci_hi: f64 = cells[6].parse().unwrap();

        let mut est = vec!["estimate".to_string()];
        est.extend(common_args(&["-C", &format!("{c}"), "--format", "csv"]));
        let out2 = bin().args(&est).output().unwrap();
        assert!(out2.status.success());
        let text2 = stdout_str(&out2);
        let flci_row: Vec<&str> = text2
            .lines()
            .find(|l| l.starts_with("flci"))
            .expect("flci row present")
            .split(',')
            .collect();
        let beta2: f64 = flci_row[1].parse().unwrap();
        let lo2: f64 = flci_row[6].parse().unwrap();
        let hi2: f64 = flci_row[7].parse().unwrap();
        assert!((beta - beta2).abs() <= 1e-10 * beta.abs().max(1.0), "{beta} vs {beta2}");
        assert!((ci_lo - lo2).abs() <= 1e-10 * ci_lo.abs().max(1.0));
        assert!((ci_hi - hi2).abs() <= 1e-10 * ci_hi.abs().max(1.0));
    }
}

#[test]
fn r2curve_is_nondecreasing() {
    let mut full = vec!["r2curve".to_string()];
    full.extend(common_args(&["--c-grid", "0:1:0.25", "--format", "csv"]));
    let out = bin().args(&full).output().unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = stdout_str(&out);
    let r2: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(r2.len(), 5);
    for w in r2.windows(2) {
        assert!(w[1] >= w[0] - 1e-10);
    }
}

#[test]
fn lower_c_moderate_deviations_smoke() {
    let mut full = vec!["lower-c".to_string()];
    full.extend(common_args(&["--mode", "moderate-deviations"]));
    let out = bin().args(&full).output().unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = stdout_str(&out);
    assert!(text.contains("\"c_hat\""));
    assert!(text.contains("\"mode\":\"moderate-deviations\""));
}

#[test]
fn efficiency_respects_universal_floor() {
    let mut full = vec!["efficiency".to_string()];
    full.extend(common_args(&["-C", "0.6", "--format", "csv"]));
    let out = bin().args(&full).output().unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = stdout_str(&out);
    let row = text.lines().nth(1).expect("one data row");
    let kappa: f64 = row.split(',').next().unwrap().parse().unwrap();
    assert!(kappa >= 0.717 && kappa <= 1.0 + 1e-9, "kappa = {kappa}");
}

#[test]
fn simulate_coverage_writes_summary_and_records() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("cfg.txt");
    std::fs::write(
        &config,
        "experiment=coverage\nn=30\nk2=6\nbeta=0.5\ngamma=zero\nerror=gauss\nsigma=1\nreps=120\nseed=3\nc_assumed=0.4\n",
    )
    .unwrap();
    let prefix = dir.path().join("run");
    let out = run(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        prefix.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(dir.path().join("run.summary.json")).unwrap();
    assert!(summary.contains("\"coverage\""));
    let records = std::fs::read_to_string(dir.path().join("run.records.csv")).unwrap();
    assert_eq!(records.lines().count(), 121); // header + reps
}
