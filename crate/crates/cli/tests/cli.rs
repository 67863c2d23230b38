use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn dicke(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dicke"))
        .args(args)
        .env_remove("DICKE_WORKERS")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn run(sub: &str, cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![sub, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    dicke(&args)
}

fn manifest(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const UNIT: &str = r#""params": {"omega": 1.0, "omega0": 1.0, "gamma": 1.0}"#;

#[test]
fn gspt_matches_core_rows() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "gspt.json",
        &format!(r#"{{{UNIT}, "gspt": {{"gamma_ratios": {{"min": 0, "max": 3, "step": 0.05}}}}}}"#),
    );
    let out = tmp.path().join("out");
    let o = run("gspt", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("gspt.csv")).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 62);

    let mp = dicke_core::ModelParams::new(1.0, 1.0, 1.0).unwrap();
    let grid: Vec<f64> = (0..61).map(|i| i as f64 * 0.05).collect();
    let recs = dicke_core::equilibria::gspt_curves(&grid, &mp).unwrap();
    for (row, rec) in rows[1..].iter().zip(&recs) {
        let f: Vec<f64> = row.split(',').take(4).map(|x| x.parse().unwrap()).collect();
        assert!((f[0] - rec.gamma_ratio).abs() < 1e-12);
        assert_eq!((f[1], f[2], f[3]), (rec.e0, rec.n_cl, rec.jz_cl));
    }
}

#[test]
fn manifest_checksums_round_trip() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "sim.json",
        &format!(
            r#"{{{UNIT}, "simulate": {{"initial": [0, -1.0996, 0, 1.0], "t_end": 20, "section": "upward"}}}}"#
        ),
    );
    let out = tmp.path().join("run");
    let o = run("simulate", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = manifest(&out);
    assert_eq!(m["status"], "ok");
    assert_eq!(m["experiment"], "simulate");
    assert!(m["started"].as_str().unwrap() <= m["finished"].as_str().unwrap());
    let arts = m["artifacts"].as_array().unwrap();
    assert_eq!(arts.len(), 2);
    for a in arts {
        let bytes = fs::read(out.join(a["path"].as_str().unwrap())).unwrap();
        assert_eq!(hex::encode(Sha256::digest(&bytes)), a["sha256"].as_str().unwrap());
    }
    assert!(dicke(&["verify", out.to_str().unwrap()]).status.success());

    fs::write(out.join("trajectory.csv"), "tampered\n").unwrap();
    let v = dicke(&["verify", out.to_str().unwrap()]);
    assert_eq!(v.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&v.stdout).contains("trajectory.csv"));
}

#[test]
fn negative_frequency_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "bad.json",
        r#"{"params": {"omega": -1.0, "omega0": 1.0, "gamma": 1.0}, "gspt": {"gamma_ratios": [0.5, 1.0]}}"#,
    );
    let out = tmp.path().join("never");
    let o = run("gspt", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("params.omega"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn config_errors_name_the_field() {
    let tmp = TempDir::new().unwrap();
    let cases = [
        (
            "lyapunov-map",
            format!(r#"{{{UNIT}, "seed": 1, "lyapunov-map": {{"energy": {{"min": -1, "max": 0, "count": 2}}, "gamma_ratio": {{"min": 1, "max": 2, "count": 0}}}}}}"#),
            "lyapunov-map.gamma_ratio",
        ),
        ("esqpt", format!(r#"{{{UNIT}, "esqpt": {{"gamma_ratios": [0.9]}}}}"#), "seed"),
        ("simulate", format!(r#"{{{UNIT}, "simulate": {{"initial": [0, 0, 0, 0], "t_end": 5, "tend": 1}}}}"#), "tend"),
        ("otoc", format!(r#"{{{UNIT}, "seed": 3, "otoc": {{"ensemble": {{"n_traj": 8}}}}}}"#), "center"),
        ("gspt", r#"{"gspt": {"gamma_ratios": [1]}}"#.to_string(), "params"),
    ];
    for (sub, body, field) in cases {
        let cfg = write_config(tmp.path(), "c.json", &body);
        let o = run(sub, &cfg, &tmp.path().join("x"), &[]);
        assert_eq!(o.status.code(), Some(2), "{sub}: {}", stderr(&o));
        assert!(stderr(&o).contains(field), "{sub}: {}", stderr(&o));
    }
    let o = dicke(&["gspt", "--config", tmp.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn map_is_reproducible_and_worker_independent() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "map.json",
        &format!(
            r#"{{{UNIT}, "seed": 42, "qp-map": {{"energy": -1.5, "Q": {{"min": -2, "max": 2, "count": 6}},
                "P": {{"min": -2, "max": 2, "count": 5}}, "n_per_cell": 2,
                "lyapunov": {{"t_total": 40, "transient": 4}}}}}}"#
        ),
    );
    let mut csvs = Vec::new();
    for (i, w) in ["1", "4", "4"].iter().enumerate() {
        let out = tmp.path().join(format!("o{i}"));
        let o = run("qp-map", &cfg, &out, &["--workers", w]);
        assert!(o.status.success(), "{}", stderr(&o));
        csvs.push(fs::read(out.join("map.csv")).unwrap());
        let side: Value = serde_json::from_slice(&fs::read(out.join("map.json")).unwrap()).unwrap();
        assert!(side.to_string().contains("42"));
    }
    assert_eq!(csvs[0], csvs[1]);
    assert_eq!(csvs[1], csvs[2]);
}

#[test]
fn energy_gamma_map_runs_twice_identically() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "lm.json",
        &format!(
            r#"{{{UNIT}, "seed": 42, "lyapunov-map": {{"energy": {{"min": -2.2, "max": -0.5, "count": 3}},
                "gamma_ratio": {{"min": 0.5, "max": 2.0, "count": 2}}, "n_ic": 2,
                "lyapunov": {{"t_total": 30, "transient": 3}}}}}}"#
        ),
    );
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(run("lyapunov-map", &cfg, &a, &[]).status.success());
    assert!(run("lyapunov-map", &cfg, &b, &["--workers", "3"]).status.success());
    let ca = fs::read(a.join("map.csv")).unwrap();
    assert_eq!(ca, fs::read(b.join("map.csv")).unwrap());
    let text = String::from_utf8(ca).unwrap();
    assert!(text.lines().next().unwrap().starts_with(','), "lowest energy row is masked at 2γ_c");
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = TempDir::new().unwrap();
    let body = format!(r#"{{{UNIT}, "seed": 1, "esqpt": {{"gamma_ratios": [1.2], "probe": {{"n_rep": 2, "t_end": 5}}}}}}"#);
    let cfg = write_config(tmp.path(), "e.json", &body);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(run("esqpt", &cfg, &a, &[]).status.success());
    assert!(run("esqpt", &cfg, &b, &["--seed", "2"]).status.success());
    assert_ne!(fs::read(a.join("esqpt.csv")).unwrap(), fs::read(b.join("esqpt.csv")).unwrap());
    assert_eq!(manifest(&b)["seed"], 2);
}

#[test]
fn esqpt_verdicts_and_dumps() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "e.json",
        &format!(
            r#"{{{UNIT}, "seed": 7, "esqpt": {{"gamma_ratios": [0.9, 1.1], "probe": {{"n_rep": 3}}, "dump_trajectories": true}}}}"#
        ),
    );
    let out = tmp.path().join("e");
    let o = run("esqpt", &cfg, &out, &["--workers", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&fs::read(out.join("esqpt.json")).unwrap()).unwrap();
    assert_eq!(v[0]["verdict"], "stationary");
    assert_eq!(v[1]["verdict"], "escaping");
    let r = v[1]["trajectory_ref"].as_str().unwrap();
    assert!(fs::read_to_string(out.join(r)).unwrap().starts_with("t,p,q,P,Q,E\n"));
    assert_eq!(manifest(&out)["artifacts"].as_array().unwrap().len(), 4);
}

#[test]
fn dry_run_plans_without_writing() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "o.json",
        &format!(r#"{{{UNIT}, "seed": 5, "otoc": {{"ensemble": {{"center": [0, -0.5, 0, 0.3], "n_traj": 64}}}}}}"#),
    );
    let out = tmp.path().join("none");
    let o = run("otoc", &cfg, &out, &["--dry-run"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("work items: 64"), "{text}");
    assert!(!out.exists());

    let all = [
        ("simulate", format!(r#"{{{UNIT}, "simulate": {{"initial": [0,0,0,0], "t_end": 1}}}}"#)),
        ("equilibria", format!(r#"{{{UNIT}, "equilibria": {{"gamma_ratios": [0.5, 1, 2]}}}}"#)),
        ("rosenstein", format!(r#"{{{UNIT}, "rosenstein": {{"simulate": {{"initial": [0,-0.13372,0,1.22474]}}}}}}"#)),
    ];
    for (sub, body) in all {
        let cfg = write_config(tmp.path(), "d.json", &body);
        let o = run(sub, &cfg, &out, &["--dry-run"]);
        assert!(o.status.success(), "{sub}: {}", stderr(&o));
    }
    assert!(!out.exists());
}

#[test]
fn otoc_records_center() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "o.json",
        r#"{"params": {"omega": 0.5, "omega0": 0.7, "gamma": 0.66}, "seed": 1,
            "otoc": {"ensemble": {"center": [0, -0.6324555320336759, 0, 0], "n_traj": 16, "width_variance": 0.0002, "t_end": 40},
                     "lyapunov": {"t_total": 200, "transient": 20}}}"#,
    );
    let out = tmp.path().join("o");
    let o = run("otoc", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = manifest(&out);
    assert_eq!(m["summary"]["otoc_center"][1], -0.6324555320336759);
    let report: Value = serde_json::from_slice(&fs::read(out.join("otoc.json")).unwrap()).unwrap();
    assert!(report["Lambda"].as_f64().unwrap() > 0.0);
    assert!(report["lambda_mean"].as_f64().unwrap() > 0.0);
    assert!(fs::read_to_string(out.join("otoc.csv")).unwrap().starts_with("t,mean,variance\n"));
}

#[test]
fn runtime_failure_exits_one_with_manifest() {
    let tmp = TempDir::new().unwrap();
    // The regular shell never grows, so the automatic fit fails.
    let cfg = write_config(
        tmp.path(),
        "o.json",
        &format!(
            r#"{{{UNIT}, "seed": 1, "otoc": {{"ensemble": {{"center": [0, -1.0996, 0, 1.0], "n_traj": 8, "width_variance": 0.0002}}, "lyapunov": null}}}}"#
        ),
    );
    let out = tmp.path().join("f");
    let o = run("otoc", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let m = manifest(&out);
    assert_eq!(m["status"], "error");
    assert!(m["error"]["message"].as_str().unwrap().contains("10x"));
    assert!(m["artifacts"].as_array().unwrap().is_empty());
}

#[test]
fn rosenstein_from_csv_and_simulation() {
    let tmp = TempDir::new().unwrap();
    let sim = write_config(
        tmp.path(),
        "sim.json",
        &format!(r#"{{{UNIT}, "simulate": {{"initial": [0, -1.0996, 0, 1.0], "t_end": 60}}}}"#),
    );
    let traj_dir = tmp.path().join("traj");
    assert!(run("simulate", &sim, &traj_dir, &[]).status.success());

    let from_file = write_config(
        tmp.path(),
        "r.json",
        &format!(
            r#"{{{UNIT}, "rosenstein": {{"input": "traj/trajectory.csv", "columns": ["p", "q", "P", "Q"], "estimator": {{"horizon": 20}}}}}}"#
        ),
    );
    let a = tmp.path().join("ra");
    let o = run("rosenstein", &from_file, &a, &[]);
    assert!(o.status.success(), "{}", stderr(&o));

    let direct = write_config(
        tmp.path(),
        "r2.json",
        &format!(
            r#"{{{UNIT}, "rosenstein": {{"simulate": {{"initial": [0, -1.0996, 0, 1.0], "t_end": 60}}, "estimator": {{"horizon": 20}}}}}}"#
        ),
    );
    let b = tmp.path().join("rb");
    assert!(run("rosenstein", &direct, &b, &[]).status.success());

    let ra: Value = serde_json::from_slice(&fs::read(a.join("rosenstein.json")).unwrap()).unwrap();
    let rb: Value = serde_json::from_slice(&fs::read(b.join("rosenstein.json")).unwrap()).unwrap();
    let (la, lb) = (ra["lambda"].as_f64().unwrap(), rb["lambda"].as_f64().unwrap());
    assert!(la.abs() < 0.004, "{la}");
    assert!((la - lb).abs() < 1e-6, "{la} vs {lb}");
}

#[test]
fn equilibria_report() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "eq.json",
        &format!(r#"{{{UNIT}, "equilibria": {{"gamma_ratios": [0.8, 1.0, 1.2]}}}}"#),
    );
    let out = tmp.path().join("eq");
    assert!(run("equilibria", &cfg, &out, &[]).status.success());
    let csv = fs::read_to_string(out.join("bifurcation.csv")).unwrap();
    let counts: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(counts, ["1", "1", "3"]);
    let j: Value = serde_json::from_slice(&fs::read(out.join("equilibria.json")).unwrap()).unwrap();
    assert_eq!(j[0]["equilibria"][0]["classification"], "center");
    assert_eq!(j[2]["equilibria"][0]["classification"], "saddle");
    assert_eq!(j[2]["equilibria"].as_array().unwrap().len(), 3);
}

#[test]
fn workers_env_is_honoured() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "g.json",
        &format!(r#"{{{UNIT}, "gspt": {{"gamma_ratios": [1.0]}}}}"#),
    );
    let out = tmp.path().join("g");
    let o = Command::new(env!("CARGO_BIN_EXE_dicke"))
        .args(["gspt", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .env("DICKE_WORKERS", "3")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(manifest(&out)["workers"], 3);
    let bad = Command::new(env!("CARGO_BIN_EXE_dicke"))
        .args(["gspt", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .env("DICKE_WORKERS", "zero")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}
