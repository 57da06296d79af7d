use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ruinbound"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_config(dir: &TempDir, name: &str, cfg: &Value) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    p
}

fn law(claim: Value, inter: Value) -> Value {
    json!({"claim": claim, "inter": inter})
}

fn exp(rate: f64) -> Value {
    json!({"type": "exponential", "rate": rate})
}

fn two_cycle() -> Value {
    json!({
        "model": {
            "premium": 2.0,
            "gamma": 1.0,
            "schedule": {"cycle": [
                law(exp(2.0), exp(1.0)),
                law(exp(4.0), json!({"type": "deterministic", "value": 1.0})),
            ]}
        },
        "x_grid": [0.0, 1.0, 2.0],
        "trials": 20000,
        "horizon_n": 2000,
        "seed": 3,
        "abandon_epsilon": 1e-12
    })
}

fn exp_exp() -> Value {
    json!({
        "model": {"premium": 2.0, "gamma": 0.5, "schedule": {"cycle": [law(exp(1.0), exp(1.0))]}},
        "x_grid": [0.0, 1.0],
        "trials": 5000,
        "horizon_n": 500
    })
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("stdout is json")
}

#[test]
fn check_passes_and_reports_conditions() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.json", &two_cycle());
    let o = run(&["check", "--config", path_str(&cfg)]);
    assert_eq!(o.status.code(), Some(0));
    let v = stdout_json(&o);
    assert_eq!(v["c1_holds"], true);
    assert_eq!(v["c3_holds"], true);
}

#[test]
fn check_flags_infinite_mgf() {
    let dir = TempDir::new().unwrap();
    let mut cfg = exp_exp();
    cfg["model"]["gamma"] = json!(1.5);
    let p = write_config(&dir, "c.json", &cfg);
    let o = run(&["check", "--config", path_str(&p)]);
    assert_eq!(o.status.code(), Some(1));
    let v = stdout_json(&o);
    assert_eq!(v["c1_holds"], false);
    assert!(v["violations"][0].as_str().unwrap().starts_with("C1:"));
    // the bound refuses to build on the same model
    let o = run(&["bound", "--config", path_str(&p)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn zero_drift_fails_c3() {
    let dir = TempDir::new().unwrap();
    let mut cfg = exp_exp();
    cfg["model"]["premium"] = json!(1.0);
    let p = write_config(&dir, "c.json", &cfg);
    let o = run(&["check", "--config", path_str(&p)]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stdout_json(&o)["c3_holds"], false);
    assert_eq!(run(&["bound", "--config", path_str(&p)]).status.code(), Some(1));
}

#[test]
fn usage_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run(&["bound"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    let missing = dir.path().join("nope.json");
    assert_eq!(run(&["bound", "--config", path_str(&missing)]).status.code(), Some(2));

    let mut cfg = exp_exp();
    cfg["unknown_key"] = json!(1);
    let p = write_config(&dir, "u.json", &cfg);
    assert_eq!(run(&["bound", "--config", path_str(&p)]).status.code(), Some(2));

    let mut cfg = exp_exp();
    cfg["model"]["schedule"]["cycle"][0]["claim"] = json!({"type": "pareto", "alpha": 3.0});
    let p = write_config(&dir, "h.json", &cfg);
    let o = run(&["bound", "--config", path_str(&p)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("heavy-tailed"));

    // delta above gamma
    let p = write_config(&dir, "d.json", &exp_exp());
    assert_eq!(
        run(&["bound", "--config", path_str(&p), "--delta", "0.9"]).status.code(),
        Some(2)
    );
}

#[test]
fn bound_then_verify_round_trip() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.json", &two_cycle());
    let cert = dir.path().join("cert.json");
    let o = run(&["bound", "--config", path_str(&cfg), "--out", path_str(&cert)]);
    assert_eq!(o.status.code(), Some(0));
    let c: Value = serde_json::from_str(&std::fs::read_to_string(&cert).unwrap()).unwrap();
    for key in ["c1", "c2", "c7", "c8"] {
        assert!(c["bound"][key].is_number(), "missing {key}");
    }
    for key in ["delta", "c5", "y_hat", "c6", "M", "y_star", "big_delta", "c3", "c4"] {
        assert!(c["bound"]["lemma"][key].is_number(), "missing lemma.{key}");
    }

    let o = run(&["verify", "--config", path_str(&cfg), "--certificate", path_str(&cert)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["passed"], true);
    assert_eq!(v["rows"].as_array().unwrap().len(), 3);
}

#[test]
fn corrupted_certificate_fails_verify() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.json", &two_cycle());
    let cert = dir.path().join("cert.json");
    assert_eq!(
        run(&["bound", "--config", path_str(&cfg), "--out", path_str(&cert)]).status.code(),
        Some(0)
    );
    let mut c: Value = serde_json::from_str(&std::fs::read_to_string(&cert).unwrap()).unwrap();
    let c4 = c["bound"]["lemma"]["c4"].as_f64().unwrap();
    c["bound"]["lemma"]["c4"] = json!(2.0 * c4);
    c["bound"]["c8"] = json!(2.0 * c4);
    let bad = write_config(&dir, "bad.json", &c);
    let o = run(&["verify", "--config", path_str(&cfg), "--certificate", path_str(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    let v = stdout_json(&o);
    assert_eq!(v["certificate_valid"], false);
    assert!(String::from_utf8_lossy(&o.stderr).contains("`c4`"));

    // a certificate for a different model is a usage error
    let other = write_config(&dir, "other.json", &exp_exp());
    let o = run(&["verify", "--config", path_str(&other), "--certificate", path_str(&cert)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_writes_csv() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.json", &exp_exp());
    let out = dir.path().join("est.csv");
    let o = run(&["simulate", "--config", path_str(&cfg), "--out", path_str(&out), "--seed", "9", "--workers", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(ruinbound::sim::CSV_HEADER));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0], "0");
    assert_eq!(rows[0][7], "9");
    assert_eq!(rows[0][8], "2");
    let p0: f64 = rows[0][3].parse().unwrap();
    let p1: f64 = rows[1][3].parse().unwrap();
    assert!(p1 <= p0);

    // same seed through stdout gives the same numbers for any worker count
    let o1 = run(&["simulate", "--config", path_str(&cfg), "--seed", "9", "--workers", "1"]);
    let strip = |s: &str| -> Vec<String> {
        s.lines()
            .skip(1)
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect()
    };
    assert_eq!(strip(&String::from_utf8_lossy(&o1.stdout)), strip(&text));
}

#[test]
fn adjustment_for_exponential_model() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.json", &exp_exp());
    let o = run(&["adjustment", "--config", path_str(&cfg)]);
    assert_eq!(o.status.code(), Some(0));
    let v = stdout_json(&o);
    assert!((v["r"].as_f64().unwrap() - 0.5).abs() < 1e-10);
    assert_eq!(v["t_max"].as_f64(), Some(1.0));

    let cyc = write_config(&dir, "cyc.json", &two_cycle());
    assert_eq!(run(&["adjustment", "--config", path_str(&cyc)]).status.code(), Some(2));
}

#[test]
fn oracle_on_lattice_model() {
    let dir = TempDir::new().unwrap();
    let cfg = json!({
        "model": {
            "premium": 1.0,
            "gamma": 0.1,
            "schedule": {"cycle": [law(
                json!({"type": "discrete_finite", "atoms": [{"value": 0.0, "prob": 0.6}, {"value": 2.0, "prob": 0.4}]}),
                json!({"type": "deterministic", "value": 1.0})
            )]}
        },
        "x_grid": [0.0, 1.0, 2.0],
        "oracle": {"n_max": 2000}
    });
    let p = write_config(&dir, "c.json", &cfg);
    let o = run(&["oracle", "--config", path_str(&p)]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    let probs: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    for (x, p) in probs.iter().enumerate() {
        assert!((p - (2.0_f64 / 3.0).powi(x as i32 + 1)).abs() < 1e-6);
    }

    let cont = write_config(&dir, "cont.json", &exp_exp());
    assert_eq!(run(&["oracle", "--config", path_str(&cont)]).status.code(), Some(2));
}
