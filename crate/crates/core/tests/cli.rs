use std::path::Path;
use std::process::{Command, Output};

use relfit::dist::mixture_sample;
use relfit::io::write_csv;
use relfit::{Gaussian, Mixture, RngStream};

fn relfit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relfit")).args(args).output().expect("binary runs")
}

fn write_pair(path: &Path, n: usize, sep: f64) {
    let m = Mixture::new(
        vec![0.5, 0.5],
        vec![
            Gaussian::new(vec![-sep, 0.0], nalgebra::DMatrix::identity(2, 2)).unwrap(),
            Gaussian::new(vec![sep, 0.0], nalgebra::DMatrix::identity(2, 2)).unwrap(),
        ],
    )
    .unwrap();
    let (x, _) = mixture_sample(&m, n, &RngStream::new(1, 0)).unwrap();
    write_csv(std::fs::File::create(path).unwrap(), &["x".into(), "y".into()], &x).unwrap();
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("valid JSON")
}

#[test]
fn test_command_prints_outcome() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("pair.csv");
    write_pair(&input, 400, 5.0);
    let path = input.to_str().unwrap();
    for method in ["rift", "mrift", "l2rift", "mardia", "nn-ks", "nn-z"] {
        let v = json(&relfit(&["test", "--input", path, "--method", method, "--seed", "3"]));
        assert_eq!(v["method"], method);
        let p = v["p_value"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&p));
    }
    let v = json(&relfit(&["test", "--input", path, "--method", "rift", "--seed", "3"]));
    assert_eq!(v["reject"], true);
    let again = json(&relfit(&["test", "--input", path, "--method", "rift", "--seed", "3"]));
    assert_eq!(v, again);
}

#[test]
fn cluster_writes_tree_json() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("pair.csv");
    let out = dir.path().join("tree.json");
    write_pair(&input, 400, 5.0);
    for direction in ["topdown", "bottomup"] {
        let o = relfit(&[
            "cluster",
            "--input",
            input.to_str().unwrap(),
            "--method",
            "mrift",
            "--direction",
            direction,
            "--seed",
            "1",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
        assert_eq!(v["direction"], direction);
        assert_eq!(v["n_leaves"], 2);
        let nodes = v["nodes"].as_array().unwrap();
        for key in ["id", "depth", "parent", "children", "method", "level", "p_value", "reject", "n_d1", "n_d2", "mixture"] {
            assert!(nodes[0].get(key).is_some(), "missing {key}");
        }
    }
}

#[test]
fn selectk_and_criteria() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("pair.csv");
    write_pair(&input, 400, 5.0);
    let path = input.to_str().unwrap();
    let v = json(&relfit(&["selectk", "--input", path, "--kmax", "4", "--distance", "kl", "--seed", "2"]));
    assert_eq!(v["k_hat"], 2);
    let v = json(&relfit(&["selectk", "--input", path, "--kmax", "4", "--criterion", "bic", "--seed", "2"]));
    assert_eq!(v["k_hat"], 2);
}

#[test]
fn simulate_writes_one_row_per_rep_and_method() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.csv");
    let o = relfit(&[
        "simulate",
        "--scenario",
        "two_mix",
        "--param",
        "n=200",
        "--param",
        "a=3",
        "--methods",
        "rift,mrift,bic",
        "--reps",
        "4",
        "--seed",
        "9",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "rep,method,statistic,p_value,reject,k_hat");
    assert_eq!(lines.count(), 12);
    let o2 = relfit(&[
        "simulate", "--scenario", "two_mix", "--param", "n=200", "--param", "a=3", "--methods", "rift,mrift,bic", "--reps", "4", "--seed", "9",
    ]);
    assert_eq!(String::from_utf8(o2.stdout).unwrap(), text);
}

#[test]
fn genes_keeps_named_columns() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("expr.csv");
    let out = dir.path().join("top.csv");
    std::fs::write(&input, "g1,g2,g3\n1,1,1\n1,10,2\n1,100,3\n1,1000,4\n0,5,5\n").unwrap();
    let o = relfit(&["genes", "--input", input.to_str().unwrap(), "--top", "2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next().unwrap(), "g2,g3");
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let o = relfit(&["test", "--input", missing.to_str().unwrap(), "--method", "rift"]);
    assert_eq!(o.status.code(), Some(2));

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "a,b\n1,x\n").unwrap();
    assert_eq!(relfit(&["test", "--input", bad.to_str().unwrap(), "--method", "rift"]).status.code(), Some(2));

    let good = dir.path().join("pair.csv");
    write_pair(&good, 100, 3.0);
    let g = good.to_str().unwrap();
    assert_eq!(relfit(&["test", "--input", g, "--method", "unknown"]).status.code(), Some(2));
    assert_eq!(relfit(&["test", "--input", g, "--method", "rift", "--alpha", "1.5"]).status.code(), Some(2));

    let singular = dir.path().join("singular.csv");
    let rows: String = (0..50).map(|i| format!("{i},{}\n", 2 * i)).collect();
    std::fs::write(&singular, format!("a,b\n{rows}")).unwrap();
    assert_eq!(relfit(&["test", "--input", singular.to_str().unwrap(), "--method", "mardia"]).status.code(), Some(3));
}
