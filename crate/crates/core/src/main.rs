use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use interface_gen::config::RunConfig;
use interface_gen::envelope::calibrate_cstar;
use interface_gen::ode::{fit_curvature_bound, fit_linearization, flow, flow_unbounded, AfterTimeSweep};
use interface_gen::reaction::{validate_bistable, BistableReaction};
use interface_gen::runner::{
    self, calibration_json, config_json, envelope_rows, eps_label, num, run_eps, run_sweep, write_config_echo,
    write_envelope_csv, write_eps_outputs, write_json, write_snapshots_csv, write_sweep_outputs, Schedule,
    Setup, SCHEMA_VERSION,
};

const EXIT_PASS: u8 = 0;
const EXIT_CHECKS: u8 = 1;
const EXIT_ERROR: u8 = 2;

#[derive(Parser)]
#[command(name = "interface-gen", version, about = "Interface generation lab for u_t = Δ(u^m) + ε⁻² f(u)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Config file of `key = value` lines.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set solver.eps=0.02`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (same as `output.dir`).
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the ODE flow and run the kernel checks.
    Ode {
        #[command(flatten)]
        common: Common,
        /// Rescaled times τ.
        #[arg(long, value_delimiter = ',', default_values_t = vec![1.0])]
        tau: Vec<f64>,
        /// Initial values ξ.
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.3001])]
        xi: Vec<f64>,
        /// Also run the curvature, after-time and linearization checks.
        #[arg(long)]
        checks: bool,
        /// Base sample count for the checks.
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
    /// Run the solver for `solver.eps` and write the snapshots.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Calibrate C★ and tabulate w± and ℒ[w±] over the calibration sample.
    EnvelopeCheck {
        #[command(flatten)]
        common: Common,
    },
    /// Full verification for `solver.eps`.
    Verify {
        #[command(flatten)]
        common: Common,
    },
    /// Verification over `sweep.eps_list`, with the width fit.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Concurrent ε runs (same as `sweep.jobs`).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Summarize an existing report.json, sweep.json or output directory.
    Report {
        path: PathBuf,
    },
}

fn load(common: &Common) -> anyhow::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    cfg.apply_overrides(&common.overrides)?;
    if let Some(o) = &common.out {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn dispatch(cmd: Command) -> anyhow::Result<u8> {
    match cmd {
        Command::Ode {
            common,
            tau,
            xi,
            checks,
            samples,
        } => cmd_ode(&load(&common)?, &tau, &xi, checks, samples),
        Command::Simulate { common } => cmd_simulate(&load(&common)?),
        Command::EnvelopeCheck { common } => cmd_envelope(&load(&common)?),
        Command::Verify { common } => cmd_verify(&load(&common)?),
        Command::Sweep { common, jobs } => {
            let mut cfg = load(&common)?;
            if let Some(j) = jobs {
                cfg.sweep_jobs = j;
                cfg.validate()?;
            }
            cmd_sweep(&cfg)
        }
        Command::Report { path } => cmd_report(&path),
    }
}

fn cmd_ode(cfg: &RunConfig, taus: &[f64], xis: &[f64], checks: bool, samples: usize) -> anyhow::Result<u8> {
    let setup = Setup::new(cfg)?;
    let r = &setup.reaction;
    let k = &setup.kernel;
    fs::create_dir_all(&cfg.output_dir)?;
    write_config_echo(&cfg.output_dir, cfg)?;
    let mut csv = format!("# schema_version={SCHEMA_VERSION}\ntau,xi,Y,Y_xi,Y_xixi\n");
    for &t in taus {
        for &x in xis {
            let kr = flow_unbounded(r, k, t, x)?;
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                runner::fmt_f(t),
                runner::fmt_f(x),
                runner::fmt_f(kr.y),
                runner::fmt_f(kr.y_xi),
                runner::fmt_f(kr.y_xixi)
            ));
        }
    }
    fs::write(cfg.output_dir.join("ode.csv"), &csv)?;
    print!("{csv}");
    if !checks {
        return Ok(EXIT_PASS);
    }

    let mut failures: Vec<String> = validate_bistable(r).iter().map(|d| d.to_string()).collect();
    let tau_max = 0.005f64.ln().abs() / r.mu();
    let c1 = fit_curvature_bound(r, k, tau_max, samples, cfg.seed)?;
    let c4 = fit_curvature_bound(r, k, tau_max, 4 * samples, cfg.seed.wrapping_add(1))?;
    let curv_rel = (c4.c - c1.c).abs() / c1.c;
    if !(c1.c.is_finite() && curv_rel <= 0.10) {
        failures.push(format!("curvature bound unstable: {} vs {}", c1.c, c4.c));
    }
    let sweep = AfterTimeSweep::new(r, k, cfg.solver_eps, 10 * samples)?;
    let c_y = sweep.find_c_y(cfg.verify_gamma);
    if c_y.is_none() {
        failures.push("after-time: no C_Y makes the band statements hold".into());
    }
    let l1 = fit_linearization(r, k, cfg.verify_eta, samples)?;
    let l2 = fit_linearization(r, k, cfg.verify_eta, 2 * samples)?;
    let stable = |a: f64, b: f64| (a - b).abs() <= 0.05 * a.abs();
    if !(l1.c1 > 0.0 && l1.c1 <= 1.0 && l1.c2 >= 1.0 && l1.c2 / l1.c1 < 10.0) {
        failures.push(format!("linearization constants C1 = {}, C2 = {}", l1.c1, l1.c2));
    }
    if !(stable(l1.c1, l2.c1) && stable(l1.c2, l2.c2)) {
        failures.push("linearization constants unstable under sample doubling".into());
    }
    // spot check of the range-restricted flow at the unstable zero
    let at_a = flow(r, k, 5.0, r.unstable_zero())?;
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "config": config_json(cfg),
        "status": if failures.is_empty() { "passed" } else { "failed" },
        "failures": failures,
        "curvature": {
            "tau_max": num(tau_max),
            "C": num(c1.c),
            "C_quadrupled": num(c4.c),
            "relative_change": num(curv_rel),
            "argmax_tau": num(c1.argmax_tau),
            "argmax_xi": num(c1.argmax_xi),
            "samples": c1.samples,
        },
        "after_time": {
            "eps": num(cfg.solver_eps),
            "gamma": num(cfg.verify_gamma),
            "C_Y": c_y.map_or(Value::Null, num),
            "samples": sweep.samples.len(),
        },
        "linearization": {
            "eta": num(cfg.verify_eta),
            "C1": num(l1.c1),
            "C2": num(l1.c2),
            "C1_doubled": num(l2.c1),
            "C2_doubled": num(l2.c2),
        },
        "Y_xi_at_a_tau5": num(at_a.y_xi),
    });
    write_json(&cfg.output_dir.join("ode_checks.json"), &report)?;
    eprintln!(
        "curvature C = {:.4}, C_Y = {:?}, C1 = {:.4}, C2 = {:.4}",
        c1.c, c_y, l1.c1, l1.c2
    );
    Ok(if failures.is_empty() { EXIT_PASS } else { EXIT_CHECKS })
}

fn cmd_simulate(cfg: &RunConfig) -> anyhow::Result<u8> {
    let setup = Setup::new(cfg)?;
    let schedule = Schedule::new(&setup.clock, cfg);
    let dir = cfg.output_dir.join(eps_label(cfg.solver_eps));
    fs::create_dir_all(&dir)?;
    write_config_echo(&dir, cfg)?;
    let start = Instant::now();
    let out = match setup.simulate(schedule.t_end, schedule.base.clone()) {
        Ok(o) => o,
        Err(interface_gen::Error::BoundViolation { t, cell, value, lower, bound, snapshot }) => {
            write_snapshots_csv(&dir.join("snapshots.csv"), &setup.grid, &[*snapshot])?;
            bail!("bound violated at t = {t:e}, cell {cell}: {value} not in [{lower}, {bound}]");
        }
        Err(e) => return Err(e.into()),
    };
    write_snapshots_csv(&dir.join("snapshots.csv"), &setup.grid, &out.snapshots)?;
    let s = &out.stats;
    write_json(
        &dir.join("simulate.json"),
        &json!({
            "schema_version": SCHEMA_VERSION,
            "config": config_json(cfg),
            "eps": num(cfg.solver_eps),
            "t_eps": num(setup.clock.t_eps),
            "t_end": num(schedule.t_end),
            "snapshot_times": out.snapshots.iter().map(|s| num(s.t)).collect::<Vec<_>>(),
            "steps": s.steps,
            "dt_min": num(s.dt_min),
            "dt_max": num(s.dt_max),
            "lower_bound": num(s.lower_bound),
            "bound": num(s.bound),
            "boundary_max": num(s.boundary_max),
            "min_value": num(s.min_value),
            "max_value": num(s.max_value),
        }),
    )?;
    eprintln!(
        "simulated ε = {} to t = {:e} in {} steps ({:.1} s)",
        cfg.solver_eps,
        schedule.t_end,
        s.steps,
        start.elapsed().as_secs_f64()
    );
    Ok(EXIT_PASS)
}

fn cmd_envelope(cfg: &RunConfig) -> anyhow::Result<u8> {
    let setup = Setup::new(cfg)?;
    let dir = cfg.output_dir.join(eps_label(cfg.solver_eps));
    fs::create_dir_all(&dir)?;
    write_config_echo(&dir, cfg)?;
    let sample = setup.calibration_sample();
    let cal = match cfg.envelope_cstar {
        Some(c) => {
            let env = setup.envelope(c)?;
            let pts = sample.points(&setup.profile, setup.clock.t_eps);
            let s = interface_gen::envelope::sign_sweep(&env, &pts)?;
            interface_gen::envelope::Calibration {
                eps: cfg.solver_eps,
                cstar: c,
                margin_minus: s.margin_minus,
                margin_plus: s.margin_plus,
                samples_minus: s.samples_minus,
                samples_plus: s.samples_plus,
                xi_min: s.xi_min,
                xi_max: s.xi_max,
                xi_in_range: s.xi_min > -setup.kernel.c0 && s.xi_max < setup.kernel.c0,
                rungs_tried: 0,
            }
        }
        None => match calibrate_cstar(&setup.envelope(1.0)?, &sample) {
            Ok(c) => c,
            Err(e @ interface_gen::Error::LadderExhausted { .. }) => {
                eprintln!("{e}");
                return Ok(EXIT_CHECKS);
            }
            Err(e) => return Err(e.into()),
        },
    };
    let env = setup.envelope(cal.cstar)?;
    let pts = sample.points(&setup.profile, setup.clock.t_eps);
    let rows = envelope_rows(&env, &pts)?;
    write_envelope_csv(&dir.join("envelope.csv"), &rows)?;
    write_json(&dir.join("calibration.json"), &calibration_json(&cal, cfg))?;
    eprintln!(
        "ε = {}: C★ = {}, margins {:.4} / {:.4}, ξ in range: {}",
        cal.eps, cal.cstar, cal.margin_minus, cal.margin_plus, cal.xi_in_range
    );
    let ok = cal.margin_minus >= 0.0 && cal.margin_plus >= 0.0;
    Ok(if ok { EXIT_PASS } else { EXIT_CHECKS })
}

fn cmd_verify(cfg: &RunConfig) -> anyhow::Result<u8> {
    let out = run_eps(cfg);
    fs::create_dir_all(&cfg.output_dir)?;
    let dir = write_eps_outputs(&cfg.output_dir, cfg, &out)?;
    runner::write_timing(&dir, std::slice::from_ref(&out), out.seconds)?;
    let rep = &out.report;
    eprintln!("ε = {}: {} ({:.1} s)", rep.eps, rep.status(), out.seconds);
    for f in &rep.failures {
        eprintln!("  failed: {f}");
    }
    if let Some(e) = &rep.error {
        eprintln!("  error: {e}");
        return Ok(EXIT_ERROR);
    }
    Ok(if rep.failures.is_empty() { EXIT_PASS } else { EXIT_CHECKS })
}

fn cmd_sweep(cfg: &RunConfig) -> anyhow::Result<u8> {
    let start = Instant::now();
    let (sweep, outcomes) = run_sweep(cfg)?;
    write_sweep_outputs(cfg, &sweep, &outcomes, start.elapsed().as_secs_f64())?;
    for o in &outcomes {
        eprintln!("ε = {}: {} ({:.1} s)", o.report.eps, o.report.status(), o.seconds);
    }
    if let Some(f) = &sweep.width_fit {
        eprintln!("width ≈ {:.4} ε, R² = {:.4}", f.slope, f.r_squared);
    }
    for f in &sweep.failures {
        eprintln!("  failed: {f}");
    }
    if sweep.has_errors() {
        return Ok(EXIT_ERROR);
    }
    Ok(if sweep.failures.is_empty() { EXIT_PASS } else { EXIT_CHECKS })
}

fn cmd_report(path: &Path) -> anyhow::Result<u8> {
    let file = if path.is_dir() {
        let sweep = path.join("sweep.json");
        if sweep.exists() {
            sweep
        } else {
            path.join("report.json")
        }
    } else {
        path.to_path_buf()
    };
    let text = fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
    let v: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", file.display()))?;
    match v.get("schema_version").and_then(Value::as_str) {
        Some(SCHEMA_VERSION) => {}
        other => bail!("unsupported schema_version {other:?} in {}", file.display()),
    }
    let show = |v: &Value| match v {
        Value::Null => "-".to_string(),
        Value::Number(n) => n.as_f64().map_or(n.to_string(), |x| format!("{x:.6}")),
        other => other.to_string(),
    };
    if let Some(entries) = v.get("entries").and_then(Value::as_array) {
        println!("{:>10} {:>8} {:>12} {:>12} {:>8} {:>12} {:>8}", "eps", "status", "C*", "width", "M0", "t_min", "b");
        for e in entries {
            println!(
                "{:>10} {:>8} {:>12} {:>12} {:>8} {:>12} {:>8}",
                show(&e["eps"]),
                e["status"].as_str().unwrap_or("?"),
                show(&e["Cstar"]),
                show(&e["width"]),
                show(&e["M0"]),
                show(&e["t_min"]),
                show(&e["b_fit"]),
            );
        }
        if let Some(f) = v.get("width_fit").filter(|f| !f.is_null()) {
            println!("width fit: slope {} R² {}", show(&f["slope"]), show(&f["r_squared"]));
        }
    } else {
        for key in ["eps", "t_eps", "Cstar", "sandwich_violations", "M0", "width_eta", "Cthick_fit", "t_min", "b_fit"] {
            println!("{key:>20}: {}", show(&v[key]));
        }
    }
    if let Some(fs) = v.get("failures").and_then(Value::as_array) {
        for f in fs {
            println!("failed: {}", f.as_str().unwrap_or("?"));
        }
    }
    Ok(match v.get("status").and_then(Value::as_str) {
        Some("passed") => EXIT_PASS,
        Some("error") => EXIT_ERROR,
        _ => EXIT_CHECKS,
    })
}
