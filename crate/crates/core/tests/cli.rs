use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_interface-gen");
const SCHEMA_LINE: &str = "# schema_version=1.0";

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn csv_lines(p: &Path) -> Vec<String> {
    fs::read_to_string(p).unwrap().lines().map(str::to_owned).collect()
}

const SMALL: &[&str] = &["--set", "grid.Nr=128", "--set", "solver.eps=0.04"];

fn with_small<'a>(head: &[&'a str]) -> Vec<&'a str> {
    let mut v = head.to_vec();
    v.extend_from_slice(SMALL);
    v
}

#[test]
fn ode_table_has_schema_and_initial_condition() {
    let tmp = TempDir::new().unwrap();
    let o = run(&["ode", "--tau", "0,2", "--xi", "0.1,0.5,0.9", "-o", "out"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let lines = csv_lines(&tmp.path().join("out/ode.csv"));
    assert_eq!(lines[0], SCHEMA_LINE);
    assert_eq!(lines[1], "tau,xi,Y,Y_xi,Y_xixi");
    assert_eq!(lines.len(), 2 + 6);
    for row in &lines[2..5] {
        let v: Vec<f64> = row.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(v[0], 0.0);
        assert_eq!(v[2], v[1]);
        assert_eq!(v[3], 1.0);
        assert_eq!(v[4], 0.0);
    }
    for row in &lines[5..] {
        let v: Vec<f64> = row.split(',').map(|c| c.parse().unwrap()).collect();
        assert!(v[3] > 0.0);
        // trajectories move away from a = 0.3 toward the stable zeros
        if v[1] < 0.3 {
            assert!(v[2] < v[1]);
        } else {
            assert!(v[2] > v[1]);
        }
    }
    assert!(tmp.path().join("out/config.txt").exists());
}

#[test]
fn ode_checks_report() {
    let tmp = TempDir::new().unwrap();
    let o = run(&["ode", "--checks", "--samples", "200", "-o", "out"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = read_json(&tmp.path().join("out/ode_checks.json"));
    assert_eq!(v["schema_version"], "1.0");
    assert_eq!(v["status"], "passed");
    let c1 = v["linearization"]["C1"].as_f64().unwrap();
    let c2 = v["linearization"]["C2"].as_f64().unwrap();
    assert!(0.0 < c1 && c1 <= 1.0 && 1.0 <= c2);
    assert!(v["curvature"]["C"].as_f64().unwrap().is_finite());
    assert!(v["after_time"]["C_Y"].as_f64().is_some());
}

#[test]
fn config_errors_exit_two_with_key_path() {
    let tmp = TempDir::new().unwrap();
    for (args, key) in [
        (vec!["verify", "--set", "solver.m=1"], "solver.m"),
        (vec!["verify", "--set", "grid.Nr=lots"], "grid.Nr"),
        (vec!["verify", "--set", "no.such.key=1"], "no.such.key"),
        (vec!["sweep", "--set", "verify.gamma=0.5"], "verify.gamma"),
        (vec!["simulate", "--set", "solver.eps=-1"], "solver.eps"),
    ] {
        let o = run(&args, tmp.path());
        assert_eq!(code(&o), 2, "{args:?}");
        assert!(stderr(&o).contains(key), "{args:?}: {}", stderr(&o));
    }
    fs::write(tmp.path().join("bad.cfg"), "solver.eps = 0.02\nsolver.typo = 3\n").unwrap();
    let o = run(&["verify", "--config", "bad.cfg"], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("solver.typo"));
    let o = run(&["verify", "--config", "missing.cfg"], tmp.path());
    assert_eq!(code(&o), 2);
    // nothing was written for a rejected config
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn verify_writes_documented_outputs() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("run.cfg"), "# small run\ngrid.Nr = 128\n").unwrap();
    let o = run(
        &["verify", "--config", "run.cfg", "--set", "solver.eps=0.04", "-o", "res"],
        tmp.path(),
    );
    assert!(matches!(code(&o), 0 | 1), "{}", stderr(&o));
    let dir = tmp.path().join("res/0.04");
    let rep = read_json(&dir.join("report.json"));
    for key in [
        "eps",
        "Cstar",
        "M0",
        "width_eta",
        "Cthick_fit",
        "t_min",
        "b_fit",
        "sandwich_violations",
        "weak_residuals",
        "orders",
        "schema_version",
        "config",
        "status",
    ] {
        assert!(rep.get(key).is_some(), "missing {key}");
    }
    assert_eq!(rep["schema_version"], "1.0");
    assert_eq!(rep["config"]["grid.Nr"], "128");
    assert!(rep["orders"].is_null());
    assert_eq!(code(&o) == 0, rep["status"] == "passed");
    for phi in ["one", "r2", "r4"] {
        assert!(rep["weak_residuals"][phi].as_f64().is_some(), "{phi}");
    }
    assert!(rep["width_eta"].as_f64().unwrap() >= 0.0);

    // numbers carry 17 significant digits
    let text = fs::read_to_string(dir.join("report.json")).unwrap();
    assert!(text.contains("\"eps\": 4.0000000000000001e-2"), "{text}");

    let lines = csv_lines(&dir.join("snapshots.csv"));
    assert_eq!(lines[0], SCHEMA_LINE);
    assert_eq!(lines[1], "t,r,u");
    let rows = lines.len() - 2;
    assert_eq!(rows % 128, 0);
    let times: std::collections::BTreeSet<String> =
        lines[2..].iter().map(|l| l.split(',').next().unwrap().to_owned()).collect();
    assert_eq!(times.len(), 10);
    assert_eq!(rows, 10 * 128);

    let echo = fs::read_to_string(dir.join("config.txt")).unwrap();
    assert!(echo.starts_with(SCHEMA_LINE));
    assert!(echo.contains("grid.Nr = 128"));
    assert!(tmp.path().join("res/0.04/timing.json").exists());

    let o = run(&["report", "res/0.04"], tmp.path());
    assert_eq!(code(&o) == 0, rep["status"] == "passed");
    assert!(String::from_utf8_lossy(&o.stdout).contains("Cthick_fit"));
}

#[test]
fn output_format_selects_files() {
    let tmp = TempDir::new().unwrap();
    let o = run(&with_small(&["verify", "--set", "output.format=csv", "-o", "c"]), tmp.path());
    assert!(matches!(code(&o), 0 | 1));
    assert!(tmp.path().join("c/0.04/snapshots.csv").exists());
    assert!(!tmp.path().join("c/0.04/report.json").exists());
    let o = run(&with_small(&["verify", "--set", "output.format=json", "-o", "j"]), tmp.path());
    assert!(matches!(code(&o), 0 | 1));
    assert!(!tmp.path().join("j/0.04/snapshots.csv").exists());
    assert!(tmp.path().join("j/0.04/report.json").exists());
}

#[test]
fn simulate_and_envelope_check() {
    let tmp = TempDir::new().unwrap();
    let o = run(&with_small(&["simulate", "-o", "sim"]), tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let stats = read_json(&tmp.path().join("sim/0.04/simulate.json"));
    assert_eq!(stats["snapshot_times"].as_array().unwrap().len(), 10);
    assert!(stats["max_value"].as_f64().unwrap() <= stats["bound"].as_f64().unwrap());
    assert!(stats["min_value"].as_f64().unwrap() >= 0.0);
    assert_eq!(stats["boundary_max"].as_f64().unwrap(), 0.0);
    let t_eps = stats["t_eps"].as_f64().unwrap();
    assert_eq!(stats["t_end"].as_f64().unwrap(), 2.0 * t_eps);

    let o = run(&with_small(&["envelope-check", "-o", "env"]), tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let lines = csv_lines(&tmp.path().join("env/0.04/envelope.csv"));
    assert_eq!(lines[0], SCHEMA_LINE);
    assert_eq!(lines[1], "x,t,w_minus,w_plus,L_minus,L_plus");
    assert_eq!(lines.len() - 2, (48 + 8) * 24);
    let mut with_support = 0;
    for row in &lines[2..] {
        let c: Vec<&str> = row.split(',').collect();
        let wm: f64 = c[2].parse().unwrap();
        let wp: f64 = c[3].parse().unwrap();
        assert!(wm <= wp);
        let lp: f64 = c[5].parse().unwrap();
        assert!(lp >= 0.0);
        if !c[4].is_empty() {
            with_support += 1;
            assert!(c[4].parse::<f64>().unwrap() <= 0.0);
        }
    }
    assert!(with_support > 0);
    let cal = read_json(&tmp.path().join("env/0.04/calibration.json"));
    assert!(cal["Cstar"].as_f64().unwrap() > 0.0);
    assert!(cal["margin_minus"].as_f64().unwrap() >= 0.05);
}

#[test]
fn zero_drift_envelope_breaks_the_sandwich() {
    let tmp = TempDir::new().unwrap();
    let o = run(&with_small(&["verify", "--set", "envelope.cstar=0", "-o", "z"]), tmp.path());
    assert_eq!(code(&o), 1);
    let rep = read_json(&tmp.path().join("z/0.04/report.json"));
    assert!(rep["sandwich_violations"].as_u64().unwrap() > 0);
    assert_eq!(rep["calibration"]["fixed"], true);
}

fn sweep_dir(tmp: &Path, name: &str, list: &str) -> (i32, PathBuf) {
    let o = run(
        &[
            "sweep",
            "--set",
            "grid.Nr=128",
            "--set",
            &format!("sweep.eps_list={list}"),
            "-o",
            name,
        ],
        tmp,
    );
    (code(&o), tmp.join(name))
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(files(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

#[test]
fn sweep_outputs_and_determinism() {
    let tmp = TempDir::new().unwrap();
    let (c, dir) = sweep_dir(tmp.path(), "sw", "[0.04, 0.03]");
    assert!(matches!(c, 0 | 1));
    let first = tmp.path().join("sw_first");
    fs::rename(&dir, &first).unwrap();
    let (c2, dir) = sweep_dir(tmp.path(), "sw", "[0.04, 0.03]");
    assert_eq!(c, c2);

    let a = files(&first);
    let b = files(&dir);
    assert_eq!(a.len(), b.len());
    let mut compared = 0;
    for (pa, pb) in a.iter().zip(&b) {
        assert_eq!(pa.strip_prefix(&first).unwrap(), pb.strip_prefix(&dir).unwrap());
        if pa.file_name().unwrap() == "timing.json" {
            continue;
        }
        assert_eq!(fs::read(pa).unwrap(), fs::read(pb).unwrap(), "{}", pa.display());
        compared += 1;
    }
    assert!(compared >= 8);

    let lines = csv_lines(&dir.join("sweep.csv"));
    assert_eq!(lines[0], SCHEMA_LINE);
    assert_eq!(lines[1], "epsilon,t_gen,width,M0,t_min,b_fit");
    assert_eq!(lines.len(), 4);
    let sweep = read_json(&dir.join("sweep.json"));
    assert_eq!(sweep["entries"].as_array().unwrap().len(), 2);
    assert!(sweep["width_fit"]["r_squared"].as_f64().is_some());
    assert!(sweep["width_fit_notice"].is_null());
    for eps in ["0.04", "0.03"] {
        for f in ["snapshots.csv", "report.json", "config.txt"] {
            assert!(dir.join(eps).join(f).exists(), "{eps}/{f}");
        }
    }
    let o = run(&["report", "sw"], tmp.path());
    assert_eq!(code(&o), c);
    assert!(String::from_utf8_lossy(&o.stdout).contains("width fit"));
}

#[test]
fn singleton_sweep_skips_fit() {
    let tmp = TempDir::new().unwrap();
    let (c, dir) = sweep_dir(tmp.path(), "one", "[0.04]");
    assert!(matches!(c, 0 | 1));
    let sweep = read_json(&dir.join("sweep.json"));
    assert!(sweep["width_fit"].is_null());
    assert!(sweep["width_fit_notice"].as_str().is_some());
    assert_eq!(csv_lines(&dir.join("sweep.csv")).len(), 3);
}

#[test]
fn report_rejects_bad_inputs() {
    let tmp = TempDir::new().unwrap();
    let o = run(&["report", "nowhere"], tmp.path());
    assert_eq!(code(&o), 2);
    fs::write(tmp.path().join("r.json"), r#"{"schema_version": "0.1", "status": "passed"}"#).unwrap();
    let o = run(&["report", "r.json"], tmp.path());
    assert_eq!(code(&o), 2);
    fs::write(tmp.path().join("r.json"), "not json").unwrap();
    let o = run(&["report", "r.json"], tmp.path());
    assert_eq!(code(&o), 2);
}
