use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const MINIMAL: &str = r#"{
  "schema": "dynloc-config/1",
  "model": {"space": {"kind": "linear", "n": 3}, "operator": {"kind": "laplacian"}},
  "checks": [{"check": {"kind": "sulp"}}]
}"#;

const LANDAU: &str = r#"{
  "schema": "dynloc-config/1",
  "checks": [{"check": {"kind": "landau", "b": 1.0, "n_max": 100, "sigma": [1.0, 2.0]}, "expect": "fail"}]
}"#;

const ANDERSON: &str = r#"{
  "schema": "dynloc-config/1",
  "model": {
    "space": {"kind": "lattice_box", "dim": 1, "side": 24},
    "operator": {"kind": "anderson", "disorder": 4.0, "seed": 3}
  },
  "params": {"sigma": [0.1, 0.2], "zeta": [1.0], "epsilon": [0.0], "gamma": 0.5},
  "time_grid": {"times": [0.0, 1.0, 10.0, 100.0]},
  "ensemble": {"realizations": 3, "master_seed": 5},
  "checks": [
    {"check": {"kind": "moments"}},
    {"check": {"kind": "sulp"}},
    {"check": {"kind": "ak_ledger"}},
    {"check": {"kind": "kernel_interpolation"}},
    {"check": {"kind": "sule"}},
    {"check": {"kind": "sudec_plus"}},
    {"check": {"kind": "center_census"}},
    {"check": {"kind": "ensemble"}}
  ]
}"#;

const TREE: &str = r#"{
  "schema": "dynloc-config/1",
  "model": {
    "space": {"kind": "graph", "vertices": 7, "edges": [[0,1],[0,2],[1,3],[1,4],[2,5],[2,6]]},
    "operator": {"kind": "laplacian"}
  },
  "checks": [{"check": {"kind": "growth"}}]
}"#;

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn dynloc(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dynloc"));
    cmd.args(args).env_remove("DYNLOC_OUT");
    if let Some(d) = env_out {
        cmd.env("DYNLOC_OUT", d);
    }
    cmd.output().unwrap()
}

fn report(dir: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(dir.join("report.json")).unwrap()).unwrap()
}

fn payloads(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "metadata.json" {
                out.insert(
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    std::fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn minimal_config_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "minimal.json", MINIMAL);
    let out = tmp.path().join("out");
    let o = dynloc(&["--out", s(&out), "run", s(&cfg)], None);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let r = report(&out);
    assert_eq!(r["all_ok"], true);
    assert_eq!(r["checks"][0]["outcome"], "pass");
    assert!(out.join("spectrum.json").exists());
    assert!(out.join("metadata.json").exists());
    assert!(out.join("checks/00-sulp.json").exists());
}

#[test]
fn landau_expected_fail() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "landau.json", LANDAU);
    let out = tmp.path().join("out");
    let o = dynloc(&["--out", s(&out), "run", s(&cfg)], None);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let r = report(&out);
    assert_eq!(r["checks"][0]["outcome"], "expected-fail");
    assert_eq!(r["checks"][0]["verdict"], false);
    let table = std::fs::read_to_string(out.join("checks/00-landau-sigma0.csv")).unwrap();
    assert!(table.starts_with("n,separation,product,bound,ratio"));
    assert_eq!(table.lines().count(), 101);
}

#[test]
fn malformed_key_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "bad.json",
        "{\"schema\": \"dynloc-config/1\",\n  \"modle\": {}\n}",
    );
    let out = tmp.path().join("out");
    let o = dynloc(&["--out", s(&out), "run", s(&cfg)], None);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("modle"), "{err}");
    assert!(err.contains("bad.json:2:"), "{err}");
    assert!(!out.exists());
}

#[test]
fn failing_check_exits_1_and_names_inequality() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "tree.json", TREE);
    let out = tmp.path().join("out");
    let o = dynloc(&["--out", s(&out), "diagnose", s(&cfg)], None);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("growth") && err.contains("e^{L^β}"), "{err}");
    assert_eq!(report(&out)["all_ok"], false);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "anderson.json", ANDERSON);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let oa = dynloc(&["--out", s(&a), "run", s(&cfg)], None);
    let ob = dynloc(&["--out", s(&b), "--threads", "2", "run", s(&cfg)], None);
    assert!(
        oa.status.code().unwrap() < 2,
        "{}",
        String::from_utf8_lossy(&oa.stderr)
    );
    assert_eq!(oa.status.code(), ob.status.code());
    let (pa, pb) = (payloads(&a), payloads(&b));
    assert!(pa.len() > 10);
    assert_eq!(pa.keys().collect::<Vec<_>>(), pb.keys().collect::<Vec<_>>());
    for (k, v) in &pa {
        assert!(v == &pb[k], "{} differs", k.display());
    }
}

#[test]
fn seed_flag_changes_the_disorder() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "anderson.json", ANDERSON);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(dynloc(&["--out", s(&a), "spectrum", s(&cfg)], None)
        .status
        .success());
    assert!(
        dynloc(&["--out", s(&b), "--seed", "11", "spectrum", s(&cfg)], None)
            .status
            .success()
    );
    assert_ne!(
        std::fs::read(a.join("spectrum.csv")).unwrap(),
        std::fs::read(b.join("spectrum.csv")).unwrap()
    );
}

#[test]
fn output_directory_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "minimal.json", MINIMAL);
    let env = tmp.path().join("env");
    let flag = tmp.path().join("flag");
    assert!(dynloc(&["spectrum", s(&cfg)], Some(&env)).status.success());
    assert!(env.join("spectrum.json").exists());
    assert!(
        dynloc(&["--out", s(&flag), "spectrum", s(&cfg)], Some(&env))
            .status
            .success()
    );
    assert!(flag.join("spectrum.json").exists());
}

#[test]
fn moments_subcommand_writes_series() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "anderson.json", ANDERSON);
    let out = tmp.path().join("out");
    let o = dynloc(&["--out", s(&out), "moments", s(&cfg)], None);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(out.join("moments.json").exists());
    assert!(out.join("moments-p0.csv").exists());
    assert!(out.join("moments-p1.csv").exists());
}

#[test]
fn counterexample_subcommands() {
    let tmp = tempfile::tempdir().unwrap();
    let landau = tmp.path().join("landau");
    let o = dynloc(
        &[
            "--out",
            s(&landau),
            "counterexample",
            "landau",
            "--n-max",
            "100",
            "--sigma",
            "1,2",
        ],
        None,
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert_eq!(report(&landau)["checks"][0]["outcome"], "expected-fail");

    let cluster = tmp.path().join("cluster");
    let o = dynloc(&["--out", s(&cluster), "counterexample", "cluster"], None);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert_eq!(report(&cluster)["checks"][0]["outcome"], "expected-fail");
    assert!(cluster.join("checks/00-cluster.csv").exists());
}

#[test]
fn ensemble_subcommand() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "anderson.json", ANDERSON);
    let out = tmp.path().join("out");
    let o = dynloc(&["--out", s(&out), "ensemble", s(&cfg)], None);
    assert!(
        o.status.code().unwrap() < 2,
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let r: Value =
        serde_json::from_slice(&std::fs::read(out.join("ensemble.json")).unwrap()).unwrap();
    assert_eq!(r["moments"]["digests"].as_array().unwrap().len(), 3);
    let series = std::fs::read_to_string(out.join("ensemble-moments.csv")).unwrap();
    assert!(series.starts_with("t,mean,std,stderr,cesaro_T,abel_T"));
}
