use std::path::Path;
use std::process::{Command, Output};

use eigeninfer::fluctuation::mean_vector;
use eigeninfer::lab::{fmt_f64, TraceStats};
use eigeninfer::moments::{null_wishart_moments, PopulationModel};
use eigeninfer::Field;
use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eigeninfer")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// CSV body without the leading config comment.
fn csv_rows(o: &Output) -> Vec<Vec<String>> {
    stdout(o).lines().filter(|l| !l.starts_with('#')).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn write_traces(path: &Path, rows: &[TraceStats]) {
    let mut buf = Vec::new();
    eigeninfer::lab::write_trace_csv(&mut buf, 0, rows).unwrap();
    std::fs::write(path, buf).unwrap();
}

#[test]
fn moments_of_two_block_model() {
    let o = run(&["moments", "--model", "2:0.5,1:0.5", "--c", "0.5", "--order", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let rows = csv_rows(&o);
    assert_eq!(rows[0], ["j", "alpha_sigma", "alpha_s", "alpha_stilde"]);
    assert_eq!(rows[1][2].parse::<f64>().unwrap(), 1.5);
}

#[test]
fn identity_moments_are_narayana() {
    let o = run(&["moments", "--model", "1:1", "--p", "40", "--n", "80", "--order", "8", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let expected = null_wishart_moments(1.0, 0.5, 8);
    for (j, e) in expected.iter().enumerate() {
        let got: f64 = v["alpha_s"][j].to_string().parse().unwrap();
        assert!((got - e).abs() <= 1e-12 * e.abs(), "order {}", j + 1);
    }
    assert_eq!(v["config"]["command"], "moments");
}

#[test]
fn zero_order_is_a_usage_error() {
    assert_eq!(run(&["moments", "--model", "1:1", "--c", "1", "--order", "0"]).status.code(), Some(2));
    assert_eq!(run(&["moments", "--c", "1"]).status.code(), Some(2));
    assert_eq!(run(&["moments", "--model", "1:0.5", "--c", "1"]).status.code(), Some(2));
}

#[test]
fn null_traces_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traces.csv");
    let id = PopulationModel::identity();
    let row = TraceStats {
        p: 40,
        n: 40,
        field: Field::Real,
        trace_powers: mean_vector(&id, 40, 40, 2, Field::Real).unwrap(),
        eigenvalues: None,
    };
    write_traces(&path, &[row]);
    let o = run(&["test", "--input", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    for key in ["kind", "theta", "statistic", "dof", "p_value", "decision", "diagnostics", "config"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert_eq!(v["decision"], "accept");
    assert_eq!(v["kind"], "sphericity");
}

#[test]
fn far_traces_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traces.csv");
    let row = TraceStats { p: 40, n: 40, field: Field::Real, trace_powers: vec![60.0, 200.0], eigenvalues: None };
    write_traces(&path, &[row]);
    let o = run(&["test", "--input", path.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(o.status.code(), Some(1));
    let rows = csv_rows(&o);
    assert_eq!(rows[1][6], "reject");
    assert!(rows[1][2].parse::<f64>().unwrap() > 5.9914);
}

#[test]
fn spiked_sample_fails_sphericity() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("x.csv");
    let o = run(&[
        "simulate",
        "--spike",
        "10",
        "--p",
        "80",
        "--n",
        "80",
        "--raw",
        "0",
        "--seed",
        "3",
        "--out",
        data.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let o = run(&["test", "--input", data.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn estimate_then_test_on_raw_data() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("x.csv");
    let d = data.to_str().unwrap();
    run(&["simulate", "--model", "2:0.5,1:0.5", "--p", "80", "--n", "160", "--beta", "2", "--raw", "1", "--out", d]);
    let o = run(&["estimate", "--input", d, "--model", "2?:0.5?,1:0.5", "--q", "3", "--test", "2"]);
    assert!(matches!(o.status.code(), Some(0 | 1)));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let a: f64 = v["estimate"]["theta"]["a"][0]["value"].to_string().parse().unwrap();
    assert!((a - 2.0).abs() < 0.3, "{a}");
    assert_eq!(v["test"]["dof"], 2);
    assert_eq!(v["config"]["q"], 3);
    let o = run(&["estimate", "--input", d, "--model", "2?:0.5?,1:0.5", "--q", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn order_selection_runs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("x.csv");
    let d = data.to_str().unwrap();
    run(&["simulate", "--model", "2:1", "--p", "40", "--n", "40", "--beta", "2", "--raw", "0", "--out", d]);
    let o = run(&["order", "--input", d, "--k-max", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["kind"], "order");
    assert_eq!(v["diagnostics"]["criteria"].as_array().unwrap().len(), 2);
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for path in [&a, &b] {
        let o = run(&[
            "simulate",
            "--model",
            "2:0.5,1:0.5",
            "--p",
            "20",
            "--n",
            "30",
            "--trials",
            "16",
            "--seed",
            "9",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
    }
    let (ta, tb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let strip = |t: &[u8]| String::from_utf8(t.to_vec()).unwrap().lines().skip(1).collect::<Vec<_>>().join("\n");
    assert_eq!(strip(&ta), strip(&tb));
    let o1 = run(&["reproduce", "9", "--p", "10", "--n", "20", "--trials", "50", "--seed", "2"]);
    let o2 = run(&["reproduce", "9", "--p", "10", "--n", "20", "--trials", "50", "--seed", "2"]);
    assert_eq!(o1.stdout, o2.stdout);
}

#[test]
fn thread_count_does_not_change_output() {
    let args = ["simulate", "--p", "10", "--n", "10", "--trials", "8", "--seed", "5"];
    let one =
        Command::new(env!("CARGO_BIN_EXE_eigeninfer")).args(args).env("EIGENINFER_THREADS", "1").output().unwrap();
    let two =
        Command::new(env!("CARGO_BIN_EXE_eigeninfer")).args(args).env("EIGENINFER_THREADS", "2").output().unwrap();
    assert_eq!(one.stdout, two.stdout);
    let bad =
        Command::new(env!("CARGO_BIN_EXE_eigeninfer")).args(args).env("EIGENINFER_THREADS", "0").output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn reproduce_row_with_reference_column() {
    let o = run(&["reproduce", "9", "--p", "40", "--n", "40", "--trials", "100"]);
    assert_eq!(o.status.code(), Some(0));
    let rows = csv_rows(&o);
    assert_eq!(
        rows[0],
        ["p", "n", "beta", "accept_identity", "ref_accept_identity", "accept_spike", "ref_accept_spike"]
    );
    assert_eq!(rows[1][4], fmt_f64(0.9487));
    assert_eq!(run(&["reproduce", "3"]).status.code(), Some(2));
}

#[test]
fn bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    assert_eq!(run(&["test", "--input", missing.to_str().unwrap()]).status.code(), Some(2));
    let junk = dir.path().join("junk.csv");
    std::fs::write(&junk, "1,2\n3,x\n").unwrap();
    assert_eq!(run(&["test", "--input", junk.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(&["cov", "--model", "1:1", "--p", "4", "--n", "4", "--beta", "3"]).status.code(), Some(2));
    assert_eq!(run(&["simulate", "--p", "4"]).status.code(), Some(2));
}

#[test]
fn ill_conditioned_q_is_a_numeric_failure() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traces.csv");
    let o = run(&["simulate", "--p", "2", "--n", "1000", "--q", "10", "--out", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(run(&["test", "--input", path.to_str().unwrap(), "--q", "10"]).status.code(), Some(3));
}

#[test]
fn cov_prints_q() {
    let o = run(&["cov", "--model", "1:1", "--p", "80", "--n", "40", "--q", "2"]);
    let rows = csv_rows(&o);
    let q11: f64 = rows[0][0].parse().unwrap();
    // Var(Tr S) = 2p/n for real identity data.
    assert!((q11 - 4.0).abs() < 1e-12);
    assert_eq!(rows[0][1], rows[1][0]);
}
