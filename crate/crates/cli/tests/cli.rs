//! End-to-end checks of the `cgw` binary: exit codes, output shapes, and
//! byte-level reproducibility.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cgw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cgw"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_pmf(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

fn stdout_of(out: &Output) -> String {
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn q_prints_root_and_closed_form_agreement() {
    let out = stdout_of(&cgw(&["q", "--binomial2", "0.75"]));
    assert!(out.contains("q 0.111111111"), "got: {out}");
    assert!(out.contains("q_closed_form 0.111111111"), "got: {out}");
    assert!(out.contains("agreement ok"), "got: {out}");
}

#[test]
fn q_from_pmf_file() {
    let dir = tempfile::tempdir().unwrap();
    let pmf = write_pmf(dir.path(), "law.pmf", "# two-point law\n0 0.4\n2 0.6\n");
    let out = stdout_of(&cgw(&["q", "--pmf", &pmf]));
    assert!(out.contains("q 0.666666667"), "got: {out}");
    assert!(!out.contains("closed_form"), "no closed form for pmf input");
}

#[test]
fn exact_json_carries_known_level_two_values() {
    let dir = tempfile::tempdir().unwrap();
    let pmf = write_pmf(dir.path(), "law.pmf", "0 0.4\n2 0.6\n");
    let out = stdout_of(&cgw(&["exact", "--pmf", &pmf, "--n", "2", "--ks"]));
    assert!(out.contains("\"n\": 2"), "got: {out}");
    assert!(out.contains("\"q_n\": 0.160000000"), "got: {out}");
    assert!(out.contains("6.25000000"), "got: {out}");
    assert!(out.contains("\"expected_v\": 5.25000000"), "got: {out}");
    assert!(out.contains("\"ks_to_exp\": 0.44"), "got: {out}");
    // Without --ks the distance fields are null, never omitted.
    let out = stdout_of(&cgw(&["exact", "--pmf", &pmf, "--n", "2"]));
    assert!(out.contains("\"ks_to_exp\": null"), "got: {out}");
    assert!(out.contains("\"ks_uncertainty\": null"), "got: {out}");
}

#[test]
fn exact_csv_has_pinned_header_and_out_mirrors_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let pmf = write_pmf(dir.path(), "law.pmf", "0 0.4\n2 0.6\n");
    let copy = dir.path().join("report.csv");
    let out = stdout_of(&cgw(&[
        "exact",
        "--pmf",
        &pmf,
        "--n",
        "2,5",
        "--format",
        "csv",
        "--out",
        copy.to_str().unwrap(),
    ]));
    assert!(
        out.starts_with("n,q,q_n,expected_u,expected_v,ratio_mean,ratio_qn,ks_to_exp,ks_uncertainty\n"),
        "got: {out}"
    );
    assert_eq!(out.lines().count(), 3, "header plus one row per level");
    assert_eq!(fs::read_to_string(&copy).unwrap(), out);
}

#[test]
fn sim_censored_emits_batch_table_then_ks_table() {
    let dir = tempfile::tempdir().unwrap();
    let pmf = write_pmf(dir.path(), "law.pmf", "0 0.4\n2 0.6\n");
    let out = stdout_of(&cgw(&[
        "sim-censored",
        "--pmf",
        &pmf,
        "--n",
        "2",
        "--runs",
        "200",
        "--seed",
        "7",
    ]));
    let mut parts = out.split("\n\n");
    let batch = parts.next().unwrap();
    let ks = parts.next().expect("ks table present for supercritical law");
    assert!(
        batch.starts_with("n,runs,mean_u,ci_u,mean_v,ci_v,mean_t,ci_t,p_hat\n"),
        "got: {batch}"
    );
    assert!(ks.starts_with("n,ks_d,ks_p\n"), "got: {ks}");
    let row: Vec<&str> = batch.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "2");
    assert_eq!(row[1], "200", "short horizons aside, every replica absorbs");
    let mean_u: f64 = row[2].parse().unwrap();
    assert!((mean_u - 6.25).abs() < 1.0, "mean_u far off: {mean_u}");
}

#[test]
fn sim_selection_reports_speed_inside_bracket() {
    let dir = tempfile::tempdir().unwrap();
    let pmf = write_pmf(dir.path(), "law.pmf", "0 0.4\n2 0.6\n");
    let traj = dir.path().join("traj.csv");
    let out = stdout_of(&cgw(&[
        "sim-selection",
        "--pmf",
        &pmf,
        "--n",
        "2",
        "--steps",
        "100000",
        "--seed",
        "0",
        "--trajectory",
        traj.to_str().unwrap(),
    ]));
    assert!(out.contains("\"n\": 2"), "got: {out}");
    assert!(out.contains("\"k\": 100000"), "got: {out}");
    // Two particles, two-point law, stay-on-zero pairing: both brackets are
    // exactly 0.84 and the estimate must sit close.
    assert!(out.contains("\"bracket_low\": 0.840000000"), "got: {out}");
    assert!(out.contains("\"bracket_high\": 0.840000000"), "got: {out}");
    let v_hat: f64 = out
        .lines()
        .find(|l| l.contains("v_hat"))
        .and_then(|l| l.split(':').nth(1))
        .and_then(|v| v.trim().trim_end_matches(',').parse().ok())
        .unwrap();
    assert!((v_hat - 0.84).abs() < 0.01, "v_hat {v_hat}");
    let rows = fs::read_to_string(&traj).unwrap();
    assert!(rows.starts_with("k,max_y,frontier_count\n"), "got: {rows}");
    assert_eq!(rows.lines().count(), 100002, "header + rows for k=0..=steps");
    assert!(rows.lines().nth(1).unwrap().starts_with("0,0,2"));
}

#[test]
fn verify_th1_table_shape() {
    let dir = tempfile::tempdir().unwrap();
    let pmf = write_pmf(dir.path(), "law.pmf", "0 0.4\n2 0.6\n");
    let out = stdout_of(&cgw(&["verify", "th1", "--pmf", &pmf, "--n-list", "5,10"]));
    assert!(out.starts_with("n,q_pow_n,ratio_mean,ratio_qn,d_n\n"), "got: {out}");
    assert!(out.contains("0.461643"), "exact distance at level 5, got: {out}");
    let skipped = stdout_of(&cgw(&[
        "verify", "th1", "--pmf", &pmf, "--n-list", "5", "--skip-ks",
    ]));
    assert!(skipped.lines().nth(1).unwrap().ends_with(','), "empty d_n column");
}

#[test]
fn verify_th2_table_shape() {
    let dir = tempfile::tempdir().unwrap();
    let pmf = write_pmf(dir.path(), "law.pmf", "0 0.4\n2 0.6\n");
    let out = stdout_of(&cgw(&[
        "verify", "th2", "--pmf", &pmf, "--n-list", "2", "--steps", "20000",
    ]));
    assert!(
        out.starts_with("n,one_minus_v,ratio,bracket_low,bracket_high\n"),
        "got: {out}"
    );
    let row: Vec<&str> = out.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "2");
    let one_minus: f64 = row[1].parse().unwrap();
    assert!((one_minus - 0.16).abs() < 0.01, "1 - v_hat {one_minus}");
}

#[test]
fn invalid_inputs_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let critical = write_pmf(dir.path(), "critical.pmf", "0 0.5\n2 0.5\n");
    let two_point = write_pmf(dir.path(), "law.pmf", "0 0.4\n2 0.6\n");
    let garbled = write_pmf(dir.path(), "bad.pmf", "0 0.4\nnot-a-number 0.6\n");

    let cases: Vec<(Vec<&str>, &str)> = vec![
        (vec!["q", "--pmf", &critical], "subcritical/critical law"),
        (vec!["exact", "--pmf", &two_point, "--n", "1"], "level below 2"),
        (vec!["exact", "--n", "2"], "missing source"),
        (
            vec!["q", "--binomial2", "0.75", "--pmf", &two_point],
            "both sources",
        ),
        (vec!["q", "--binomial2", "1.5"], "alpha outside (0,1)"),
        (vec!["q", "--pmf", &garbled], "unparseable pmf"),
        (vec!["q", "--pmf", "/definitely/not/there.pmf"], "missing file"),
        (
            vec!["sim-selection", "--pmf", &two_point, "--n", "2", "--steps", "5"],
            "too few steps",
        ),
    ];
    for (args, why) in cases {
        let out = cgw(&args);
        assert_eq!(out.status.code(), Some(2), "{why}: {args:?}");
    }
}

#[test]
fn reruns_are_byte_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let pmf = write_pmf(dir.path(), "law.pmf", "0 0.4\n2 0.6\n");
    let base = [
        "sim-censored", "--pmf", &pmf, "--n", "2,5", "--runs", "500", "--seed", "3",
    ];
    let w1 = cgw(&[&base[..], &["--workers", "1"]].concat());
    let w1_again = cgw(&[&base[..], &["--workers", "1"]].concat());
    let w8 = cgw(&[&base[..], &["--workers", "8"]].concat());
    assert!(w1.status.success());
    assert_eq!(w1.stdout, w1_again.stdout, "rerun differs");
    assert_eq!(w1.stdout, w8.stdout, "worker count leaks into output");

    let sel = ["sim-selection", "--pmf", &pmf, "--n", "3", "--steps", "5000", "--seed", "9"];
    assert_eq!(cgw(&sel).stdout, cgw(&sel).stdout);
}
