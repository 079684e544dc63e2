mod common;

use std::fs;
use std::path::Path;
use std::process::Command;

use common::data;
use weyl_tensor::cli::PLOT_HEADER;

fn run(args: &[&str], out: &Path) -> i32 {
    let status = Command::new(env!("CARGO_BIN_EXE_weyl-tensor"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("WEYL_TENSOR_OUT")
        .status()
        .unwrap();
    status.code().unwrap()
}

fn ctx(n: usize) -> String {
    data(&format!("context{n}.json")).display().to_string()
}

fn pot(name: &str) -> String {
    data(&format!("{name}.json")).display().to_string()
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn validate_accepts_reference_context() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(&["validate", "--context", &ctx(2)], tmp.path()), 0);
    let v: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("validation.json")).unwrap()).unwrap();
    assert_eq!(v["basis"]["built"], true);
}

#[test]
fn validate_rejects_nonzero_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"n": 2, "A": [[[1, 0], [1.5, 0]], [[0.375, 0], [0, 0]]], "B": [[1, 0], [-1, 0]], "sector": {"theta_min": -1.2, "theta_max": 1.2}}"#).unwrap();
    let out = tmp.path().join("out");
    assert_eq!(run(&["validate", "--context", bad.to_str().unwrap()], &out), 2);
    assert!(out.join("validation.json").exists());
}

#[test]
fn usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(&["weyl", "--context", &ctx(2)], tmp.path()), 1);
    assert_eq!(run(&["weyl", "--context", &ctx(2), "--rho", "2+"], tmp.path()), 1);
    assert_eq!(run(&["sweep-ray", "--context", &ctx(2), "--rho", "2"], tmp.path()), 1);
    assert_eq!(run(&["bogus", "--context", &ctx(2)], tmp.path()), 1);
    // outside the sector
    assert_eq!(run(&["weyl", "--context", &ctx(2), "--rho", "-2"], tmp.path()), 1);
}

#[test]
fn degenerate_exit_code() {
    // the unit step scaled by s ~ -8.691049-2.473856i puts a zero of Delta_2 at rho = 2+0.8i
    let tmp = tempfile::tempdir().unwrap();
    let q = tmp.path().join("q.json");
    fs::write(&q, r#"{"pieces": [{"from": 0, "to": 1, "entries": {"(1,2)": {"kind": "poly", "params": [[-8.691049, -2.473856]]}}}]}"#).unwrap();
    let base = ["weyl", "--context", &ctx(2), "--potential", q.to_str().unwrap(), "--rho", "2+0.8i", "--xgrid", "1e-3:10:12:geometric"];
    let mut strict = base.to_vec();
    strict.extend(["--degeneracy-tol", "1e-4"]);
    assert_eq!(run(&strict, &tmp.path().join("a")), 3);
    assert_eq!(run(&base, &tmp.path().join("b")), 0);
}

#[test]
fn weyl_outputs_are_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["weyl", "--context", &ctx(3), "--potential", &pot("step"), "--rho", "3-0.4i", "--xgrid", "1e-4:20:40:geometric"];
    assert_eq!(run(&args, a.path()), 0);
    let mut threaded = args.to_vec();
    threaded.extend(["--threads", "1"]);
    assert_eq!(run(&threaded, b.path()), 0);
    let (ta, tb) = (read_tree(a.path()), read_tree(b.path()));
    assert_eq!(ta.iter().map(|t| &t.0).collect::<Vec<_>>(), ["delta_trace.csv", "plot_data.csv", "summary.json", "weyl/rho_0000.csv"]);
    assert!(ta == tb);
    let plot = String::from_utf8(ta[1].1.clone()).unwrap();
    assert!(plot.starts_with(PLOT_HEADER));
    // 40 points x 3 columns x 3 components x {psit, psihat}
    assert_eq!(plot.lines().count(), 1 + 40 * 3 * 3 * 2);
}

#[test]
fn sweep_ray_is_deterministic_across_threads() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let base = ["sweep-ray", "--context", &ctx(2), "--potential", &pot("step"), "--rho-ray", "0.5+0.5i:0.1:100:12", "--xgrid", "1e-4:50:60:geometric"];
    let mut one = base.to_vec();
    one.extend(["--threads", "1"]);
    let mut many = base.to_vec();
    many.extend(["--threads", "4"]);
    assert_eq!(run(&one, a.path()), 0);
    assert_eq!(run(&many, b.path()), 0);
    assert!(read_tree(a.path()) == read_tree(b.path()));
    let s: serde_json::Value = serde_json::from_slice(&fs::read(a.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(s["samples"].as_array().unwrap().len(), 12);
    assert!(s["basis"]["r_switch"].is_number());
}

#[test]
fn sector_sweep_and_verify() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["sweep-sector", "--context", &ctx(2), "--potential", &pot("power_tail"), "--rho-sector", "0.5:20:4:3", "--xgrid", "1e-3:10:10:geometric"];
    assert_eq!(run(&args, tmp.path()), 0);
    let plot = fs::read_to_string(tmp.path().join("plot_data.csv")).unwrap();
    // 12 samples x Delta_1, Delta_2
    assert_eq!(plot.lines().count(), 1 + 12 * 2);

    let v = tmp.path().join("verify");
    let args = ["verify", "--context", &ctx(2), "--potential", &pot("step"), "--rho", "2+0.8i", "--xgrid", "1e-6:20:60:geometric"];
    assert_eq!(run(&args, &v), 0);
    let report: serde_json::Value = serde_json::from_slice(&fs::read(v.join("verify.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
}

#[test]
fn tensors_mode_writes_every_field() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["tensors", "--context", &ctx(2), "--rho", "1+0.2i", "--xgrid", "0.01:5:8:linear"];
    assert_eq!(run(&args, tmp.path()), 0);
    for f in ["T1", "T2", "F1", "F2"] {
        assert!(tmp.path().join(format!("tensors/rho_0000_{f}.csv")).exists(), "{f}");
    }
}

#[test]
fn out_directory_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_weyl-tensor"))
        .args(["validate", "--context", &ctx(2)])
        .env("WEYL_TENSOR_OUT", tmp.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(tmp.path().join("validation.json").exists());
}
