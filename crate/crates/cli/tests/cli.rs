use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn critbubble(args: &[&str], cache: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_critbubble"));
    cmd.args(args).env_remove("CRITBUBBLE_CACHE_DIR");
    if let Some(dir) = cache {
        cmd.env("CRITBUBBLE_CACHE_DIR", dir);
    }
    cmd.output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn constants_reports_every_key() {
    let v = json(&critbubble(&["constants", "--n", "3"], None));
    for key in ["K1", "K2", "K3", "S", "omega_n", "A_k", "gamma_tilde", "beta_tilde", "alpha_lower", "regime"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert!(v["K3"].is_null());
    assert!(v["regime"].as_str().unwrap().contains("K3"));
    let v = json(&critbubble(&["constants", "--n", "5", "--k", "2", "--beta", "1"], None));
    assert_eq!(v["gamma_tilde"].as_f64().unwrap(), 6.5625);
}

#[test]
fn expansion_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("exp.csv");
    let o = critbubble(
        &["expansion", "--n", "5", "--k", "2", "--beta", "1", "--lambda", "2", "--points", "6", "--out", out.to_str().unwrap()],
        None,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "eps,dirichlet,l2,lq,Q_lambda,regime_prediction");
    assert_eq!(lines.count(), 6);
}

#[test]
fn family_reports_functionals() {
    let v = json(&critbubble(&["family", "--n", "4", "--t", "0.5", "--k", "2", "--beta", "1", "--scale", "16"], None));
    for key in ["E", "Gamma", "F", "r_scale"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["F"].as_array().unwrap().len(), 4);
}

#[test]
fn unknown_config_key_fails_with_its_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.cfg", "n=3\nlambda_typo=2\n");
    let o = critbubble(&["eigen", "--config", &cfg], None);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("lambda_typo"));
}

#[test]
fn minimize_with_refinement_reports_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.cfg", "n=5\nbeta=1\nk=2\n");
    let v = json(&critbubble(&["minimize", "--config", &cfg, "--lambda", "19", "--grid-M", "128", "--refine"], None));
    assert_eq!(v["verdict"], "achieved");
    assert_eq!(v["achieved"], true);
}

#[test]
fn cache_serves_identical_output() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let cfg = write_config(dir.path(), "e.cfg", "n=3\ngrid_M=128\ngrid_ratio=1\n");
    let a = critbubble(&["eigen", "--config", &cfg], Some(&cache));
    let b = critbubble(&["eigen", "--config", &cfg], Some(&cache));
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(std::fs::read_dir(&cache).unwrap().count(), 1);
}

#[test]
fn annulus_then_pohozaev_on_stored_solution() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.cfg", "n=3\nbeta=1\nk=2\ndomain=annulus\neps_hole=0.3\ngrid_M=256\ngrid_ratio=1\n");
    let v = json(&critbubble(&["annulus", "--config", &cfg, "--hole", "0.3"], None));
    for key in ["energy", "window_lo", "window_hi", "residual"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    let sol = dir.path().join("u.json");
    std::fs::write(&sol, serde_json::to_string(&v["solution"]).unwrap()).unwrap();
    let p = json(&critbubble(
        &["pohozaev", "--config", &cfg, "--solution", sol.to_str().unwrap(), "--lambda", "0"],
        None,
    ));
    assert!(p["relative_residual"].as_f64().unwrap() < 0.05, "{p}");
}

#[test]
fn certify_below_alpha() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.cfg", "n=3\nbeta=1\nk=2\ngrid_M=128\n");
    let v = json(&critbubble(&["certify", "--config", &cfg, "--lambda", "1"], None));
    assert_eq!(v["certificate"]["kind"], "no-solution-below-alpha");
}

#[test]
fn curve_csv_is_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.cfg", "n=4\nbeta=1\nk=2\ngrid_M=128\n");
    let out = dir.path().join("curve.csv");
    let o = critbubble(
        &["curve", "--config", &cfg, "--lambda-from", "0", "--lambda-to", "20", "--steps", "6", "--out", out.to_str().unwrap()],
        None,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out).unwrap();
    let s: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(s.len(), 6);
    assert!(s.windows(2).all(|p| p[1] <= p[0]));
}
