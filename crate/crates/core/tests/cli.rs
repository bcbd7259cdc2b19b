use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn fractel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fractel")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, v: &Value) -> String {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p.to_string_lossy().into_owned()
}

fn base() -> Value {
    json!({
        "problem": {"rho": 0.6, "alpha": 1.5, "T": 1.0, "modes": 6, "steps": 128},
        "operator": {"kind": "dirichlet_laplacian_1d"},
        "data": {
            "phi1": {"coefficients": [0.5]},
            "q": {"coefficients": [1, 0.3]},
            "p": [{"kind": "poly", "coeffs": [1, 1]}]
        },
        "functional": {"kind": "point", "x0": std::f64::consts::FRAC_PI_2},
        "output": {"field_points": 9}
    })
}

fn read_csv(p: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(p).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap_or(f64::NAN)).collect())
        .collect();
    (header, rows)
}

fn json_file(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn run_ok(args: &[&str]) {
    let out = fractel(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn invalid_config_exits_2_with_field_paths() {
    let tmp = TempDir::new().unwrap();
    let mut v = base();
    v["problem"]["rho"] = json!(1.5);
    v["problem"]["modes"] = json!(-1);
    let cfg = write_config(tmp.path(), "bad.json", &v);
    let out_dir = tmp.path().join("out");
    let out = fractel(&["forward", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("problem.rho") && err.contains("problem.modes"), "{err}");
    assert!(!out_dir.exists());

    let out = fractel(&["forward", "--config", "/nonexistent.json", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
    let out = fractel(&["forward", "--config", &cfg, "--out", "x", "--override", "noequals"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(fractel(&["bogus"]).status.code(), Some(2));
}

#[test]
fn degenerate_functional_exits_1_without_output() {
    let tmp = TempDir::new().unwrap();
    let mut v = base();
    v["data"]["q"] = json!({"coefficients": [0, 1]});
    v["data"]["psi"] = json!({"expr": [{"kind": "poly", "coeffs": [0.5, 1]}]});
    let cfg = write_config(tmp.path(), "bq0.json", &v);
    let out_dir = tmp.path().join("out");
    let out = fractel(&["inverse", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("degenerate functional"));
    assert!(!out_dir.exists());
}

#[test]
fn zero_data_forward_writes_zero_csvs() {
    let tmp = TempDir::new().unwrap();
    let mut v = base();
    v["data"] = json!({"p": []});
    let cfg = write_config(tmp.path(), "zero.json", &v);
    let out = tmp.path().join("out");
    run_ok(&["forward", "--config", &cfg, "--out", out.to_str().unwrap()]);
    for name in ["u_coeffs.csv", "u_field.csv", "psi.csv"] {
        let (header, rows) = read_csv(&out.join(name));
        assert!(header.len() >= 2);
        assert!(!rows.is_empty());
        let skip = if name == "u_field.csv" { 2 } else { 1 };
        assert!(rows.iter().all(|r| r[skip..].iter().all(|&x| x == 0.0)), "{name}");
        let meta = json_file(&out.join(format!("{name}.meta.json")));
        assert_eq!(meta["config"]["problem"]["rho"], json!(0.6));
    }
    assert!(out.join("resolved_config.json").exists());
}

#[test]
fn forward_diagnostics_record_resonance_and_rk4() {
    let tmp = TempDir::new().unwrap();
    let mut v = base();
    v["problem"]["alpha"] = json!(2.0);
    let cfg = write_config(tmp.path(), "res.json", &v);
    let out = tmp.path().join("res");
    run_ok(&["forward", "--config", &cfg, "--out", out.to_str().unwrap()]);
    let d = json_file(&out.join("diagnostics.json"));
    assert_eq!(d["resonant_mode"], json!(2));
    assert!(d["rk4_max_deviation"].is_null());

    let classical = json!({
        "problem": {"rho": 1.0, "alpha": 1.0, "T": 2.0, "modes": 3, "steps": 512, "grid": {"kind": "uniform"}},
        "operator": {"kind": "explicit_eigenvalues", "eigenvalues": [1, 3, 5]},
        "data": {
            "phi0": {"coefficients": [0, 1, -0.5]},
            "phi1": {"coefficients": [1, 0, 0.25]},
            "q": {"coefficients": [1, 1, 1]},
            "f": [{"mode": 2, "t": [0, 1, 2], "values": [0, 1, 0]}],
            "p": [{"kind": "cos", "omega": 1.5}]
        },
        "functional": {"kind": "weights", "b": [1, 0.5, 0.25]}
    });
    let cfg = write_config(tmp.path(), "classical.json", &classical);
    let out = tmp.path().join("classical");
    run_ok(&["forward", "--config", &cfg, "--out", out.to_str().unwrap()]);
    let d = json_file(&out.join("diagnostics.json"));
    assert!(d["rk4_max_deviation"].as_f64().unwrap() <= 1e-4, "{d}");
    assert_eq!(d["resonant_mode"], json!(1));
    assert!(!out.join("u_field.csv").exists());
}

#[test]
fn manufacture_then_inverse_round_trip() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "rt.json", &base());
    let m = tmp.path().join("m");
    run_ok(&["manufacture", "--config", &cfg, "--out", m.to_str().unwrap()]);
    let inv_cfg = m.join("inverse_config.json");
    let i = tmp.path().join("i");
    run_ok(&["inverse", "--config", inv_cfg.to_str().unwrap(), "--out", i.to_str().unwrap()]);

    let (_, truth) = read_csv(&m.join("p_true.csv"));
    let (header, got) = read_csv(&i.join("p.csv"));
    assert_eq!(header, ["t", "p", "p_im"]);
    let err = truth.iter().zip(&got).skip(2).map(|(a, b)| (a[1] - b[1]).abs()).fold(0.0, f64::max);
    assert!(err < 2e-3, "{err}");
    let d = json_file(&i.join("diagnostics.json"));
    assert_eq!(d["psi_derivatives"], json!("analytic"));
    assert!(d["overdetermination_residual"].as_f64().unwrap() < 1e-10);
    assert!(i.join("mu.csv").exists() && i.join("u_coeffs.csv").exists());

    // Byte-identical reruns.
    let j = tmp.path().join("j");
    run_ok(&["inverse", "--config", inv_cfg.to_str().unwrap(), "--out", j.to_str().unwrap()]);
    for name in ["p.csv", "mu.csv", "u_coeffs.csv", "u_field.csv"] {
        assert_eq!(fs::read(i.join(name)).unwrap(), fs::read(j.join(name)).unwrap(), "{name}");
    }

    // Samples only: derivatives computed numerically.
    let k = tmp.path().join("k");
    let out = fractel(&[
        "inverse",
        "--config",
        inv_cfg.to_str().unwrap(),
        "--out",
        k.to_str().unwrap(),
        "--override",
        "data.psi.dpsi=null",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let mut v = json_file(&inv_cfg);
    let psi = v["data"]["psi"].as_object_mut().unwrap();
    psi.remove("dpsi");
    psi.remove("ddpsi");
    let cfg = write_config(tmp.path(), "numeric.json", &v);
    let n = tmp.path().join("n");
    run_ok(&["inverse", "--config", &cfg, "--out", n.to_str().unwrap()]);
    assert_eq!(json_file(&n.join("diagnostics.json"))["psi_derivatives"], json!("numeric"));
}

#[test]
fn zero_source_manufacture_recovers_zero() {
    let tmp = TempDir::new().unwrap();
    let mut v = base();
    v["data"]["p"] = json!([]);
    let cfg = write_config(tmp.path(), "z.json", &v);
    let m = tmp.path().join("m");
    run_ok(&["manufacture", "--config", &cfg, "--out", m.to_str().unwrap()]);
    let i = tmp.path().join("i");
    let inv = m.join("inverse_config.json");
    run_ok(&["inverse", "--config", inv.to_str().unwrap(), "--out", i.to_str().unwrap()]);
    let (_, p) = read_csv(&i.join("p.csv"));
    let worst = p.iter().skip(2).map(|r| r[1].abs()).fold(0.0, f64::max);
    assert!(worst < 1e-8, "{worst}");
}

#[test]
fn convergence_tables() {
    let tmp = TempDir::new().unwrap();
    let mut v = base();
    v["data"]["p"] = json!([{"kind": "sin", "omega": 2}]);
    v["convergence"] = json!({"schedule": [[64, 6], [128, 6], [256, 6]]});
    let cfg = write_config(tmp.path(), "conv.json", &v);
    let out = tmp.path().join("c");
    run_ok(&["convergence", "--config", &cfg, "--out", out.to_str().unwrap()]);
    let (header, rows) = read_csv(&out.join("convergence.csv"));
    assert_eq!(header, ["steps", "modes", "error", "order"]);
    assert_eq!(rows.len(), 3);
    assert!(rows[0][3].is_nan());
    for w in rows.windows(2) {
        assert!(w[1][2] < w[0][2]);
        assert!(w[1][3] > 0.5);
    }

    let single = tmp.path().join("s");
    run_ok(&[
        "convergence",
        "--config",
        &cfg,
        "--out",
        single.to_str().unwrap(),
        "--override",
        "convergence.schedule=[[64,6]]",
    ]);
    let (_, rows) = read_csv(&single.join("convergence.csv"));
    assert_eq!(rows.len(), 1);
    assert!(rows[0][3].is_nan());

    let mut v = base();
    v["data"] = json!({
        "q": {"coefficients": [1, 0.3]},
        "psi": {"expr": [{"kind": "poly", "coeffs": [0, 0, 1]}, {"kind": "sin", "omega": 1}]}
    });
    v["convergence"] = json!({"schedule": [[32, 6], [64, 6]], "reference": "finest", "reference_steps": 256});
    let cfg = write_config(tmp.path(), "self.json", &v);
    let out = tmp.path().join("f");
    run_ok(&["convergence", "--config", &cfg, "--out", out.to_str().unwrap()]);
    let (_, rows) = read_csv(&out.join("convergence.csv"));
    assert_eq!(rows.len(), 2);
    assert!(rows[1][2] < rows[0][2]);
}
