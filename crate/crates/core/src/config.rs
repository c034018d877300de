//! Flat `key = value` run configuration with defaults, overrides and an echo.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridMode {
    Radial,
    Cartesian2d,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Both,
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub reaction_a: f64,
    pub reaction_delta: f64,

    pub grid_mode: GridMode,
    pub grid_n: usize,
    pub grid_r: f64,
    pub grid_nr: usize,
    pub grid_nx: usize,
    pub grid_ny: usize,

    pub profile_c0: f64,
    pub profile_r0: f64,

    pub solver_m: u32,
    pub solver_eps: f64,
    pub solver_cfl_safety: f64,
    pub solver_t_end_factor: f64,
    pub solver_reaction_substep: f64,

    pub kernel_tol: f64,
    pub kernel_dtau_max: f64,

    /// Fixed `C★`; calibrated when absent.
    pub envelope_cstar: Option<f64>,
    pub envelope_margin: f64,
    pub envelope_inner_radii: usize,
    pub envelope_outer_radii: usize,
    pub envelope_times: usize,
    pub envelope_ladder_rungs: usize,

    pub verify_gamma: f64,
    pub verify_eta: f64,
    pub verify_sandwich_tol: f64,
    pub verify_m0_step: f64,
    pub verify_m0_max: f64,
    pub verify_cthick_step: f64,
    pub verify_cthick_max: f64,
    pub verify_b_cap: f64,
    pub verify_dense_per_decade: usize,
    pub verify_dense_decades: usize,
    pub verify_weak_intervals: usize,
    pub verify_convergence: bool,
    pub verify_convergence_levels: Vec<usize>,
    pub verify_convergence_reference: usize,

    pub sweep_eps_list: Vec<f64>,
    pub sweep_jobs: usize,

    pub output_dir: PathBuf,
    pub output_format: OutputFormat,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            reaction_a: 0.3,
            reaction_delta: 0.0,
            grid_mode: GridMode::Radial,
            grid_n: 2,
            grid_r: 1.0,
            grid_nr: 2048,
            grid_nx: 256,
            grid_ny: 256,
            profile_c0: 0.8,
            profile_r0: 0.5,
            solver_m: 2,
            solver_eps: 0.01,
            solver_cfl_safety: 0.4,
            solver_t_end_factor: 2.0,
            solver_reaction_substep: 0.1,
            kernel_tol: 1e-10,
            kernel_dtau_max: 0.5,
            envelope_cstar: None,
            envelope_margin: 0.05,
            envelope_inner_radii: 48,
            envelope_outer_radii: 8,
            envelope_times: 24,
            envelope_ladder_rungs: 16,
            verify_gamma: 0.1,
            verify_eta: 0.1,
            verify_sandwich_tol: 5e-3,
            verify_m0_step: 0.05,
            verify_m0_max: 100.0,
            verify_cthick_step: 0.05,
            verify_cthick_max: 100.0,
            verify_b_cap: 9.0,
            verify_dense_per_decade: 20,
            verify_dense_decades: 2,
            verify_weak_intervals: 32,
            verify_convergence: false,
            verify_convergence_levels: vec![512, 1024, 2048],
            verify_convergence_reference: 4096,
            sweep_eps_list: vec![0.02, 0.01, 0.005],
            sweep_jobs: 1,
            output_dir: PathBuf::from("out"),
            output_format: OutputFormat::Both,
            seed: 0,
        }
    }
}

fn cfg_err(key: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn unquote(v: &str) -> &str {
    let v = v.trim();
    v.strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .unwrap_or(v)
}

fn scalar<T: FromStr>(key: &str, v: &str) -> Result<T> {
    unquote(v).parse().map_err(|_| {
        cfg_err(
            key,
            format!("cannot parse `{v}` as {}", std::any::type_name::<T>()),
        )
    })
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    let inner = v.trim();
    let inner = inner
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .unwrap_or(inner);
    inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| scalar(key, s))
        .collect()
}

fn boolean(key: &str, v: &str) -> Result<bool> {
    match unquote(v) {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(cfg_err(key, format!("expected true/false, got `{other}`"))),
    }
}

fn fmt_list<T: ToString>(v: &[T]) -> String {
    format!(
        "[{}]",
        v.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
    )
}

pub const KEYS: &[&str] = &[
    "reaction.kind",
    "reaction.a",
    "reaction.delta",
    "grid.mode",
    "grid.N",
    "grid.R",
    "grid.Nr",
    "grid.Nx",
    "grid.Ny",
    "profile.c0",
    "profile.R0",
    "solver.m",
    "solver.eps",
    "solver.cfl_safety",
    "solver.t_end_factor",
    "solver.reaction_substep",
    "kernel.tol",
    "kernel.dtau_max",
    "envelope.cstar",
    "envelope.margin",
    "envelope.inner_radii",
    "envelope.outer_radii",
    "envelope.times",
    "envelope.ladder_rungs",
    "verify.gamma",
    "verify.eta",
    "verify.sandwich_tol",
    "verify.m0_step",
    "verify.m0_max",
    "verify.cthick_step",
    "verify.cthick_max",
    "verify.b_cap",
    "verify.dense_per_decade",
    "verify.dense_decades",
    "verify.weak_intervals",
    "verify.convergence",
    "verify.convergence_levels",
    "verify.convergence_reference",
    "sweep.eps_list",
    "sweep.jobs",
    "output.dir",
    "output.format",
    "seed",
];

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let k = key;
        match key {
            "reaction.kind" => {
                if unquote(value) != "cubic" {
                    return Err(cfg_err(k, "only `cubic` is available"));
                }
            }
            "reaction.a" => self.reaction_a = scalar(k, value)?,
            "reaction.delta" => self.reaction_delta = scalar(k, value)?,
            "grid.mode" => {
                self.grid_mode = match unquote(value) {
                    "radial" => GridMode::Radial,
                    "cartesian2d" => GridMode::Cartesian2d,
                    other => return Err(cfg_err(k, format!("unknown mode `{other}`"))),
                }
            }
            "grid.N" => self.grid_n = scalar(k, value)?,
            "grid.R" => self.grid_r = scalar(k, value)?,
            "grid.Nr" => self.grid_nr = scalar(k, value)?,
            "grid.Nx" => self.grid_nx = scalar(k, value)?,
            "grid.Ny" => self.grid_ny = scalar(k, value)?,
            "profile.c0" => self.profile_c0 = scalar(k, value)?,
            "profile.R0" => self.profile_r0 = scalar(k, value)?,
            "solver.m" => self.solver_m = scalar(k, value)?,
            "solver.eps" => self.solver_eps = scalar(k, value)?,
            "solver.cfl_safety" => self.solver_cfl_safety = scalar(k, value)?,
            "solver.t_end_factor" => self.solver_t_end_factor = scalar(k, value)?,
            "solver.reaction_substep" => self.solver_reaction_substep = scalar(k, value)?,
            "kernel.tol" => self.kernel_tol = scalar(k, value)?,
            "kernel.dtau_max" => self.kernel_dtau_max = scalar(k, value)?,
            "envelope.cstar" => {
                self.envelope_cstar = match unquote(value) {
                    "auto" => None,
                    v => Some(scalar(k, v)?),
                }
            }
            "envelope.margin" => self.envelope_margin = scalar(k, value)?,
            "envelope.inner_radii" => self.envelope_inner_radii = scalar(k, value)?,
            "envelope.outer_radii" => self.envelope_outer_radii = scalar(k, value)?,
            "envelope.times" => self.envelope_times = scalar(k, value)?,
            "envelope.ladder_rungs" => self.envelope_ladder_rungs = scalar(k, value)?,
            "verify.gamma" => self.verify_gamma = scalar(k, value)?,
            "verify.eta" => self.verify_eta = scalar(k, value)?,
            "verify.sandwich_tol" => self.verify_sandwich_tol = scalar(k, value)?,
            "verify.m0_step" => self.verify_m0_step = scalar(k, value)?,
            "verify.m0_max" => self.verify_m0_max = scalar(k, value)?,
            "verify.cthick_step" => self.verify_cthick_step = scalar(k, value)?,
            "verify.cthick_max" => self.verify_cthick_max = scalar(k, value)?,
            "verify.b_cap" => self.verify_b_cap = scalar(k, value)?,
            "verify.dense_per_decade" => self.verify_dense_per_decade = scalar(k, value)?,
            "verify.dense_decades" => self.verify_dense_decades = scalar(k, value)?,
            "verify.weak_intervals" => self.verify_weak_intervals = scalar(k, value)?,
            "verify.convergence" => self.verify_convergence = boolean(k, value)?,
            "verify.convergence_levels" => self.verify_convergence_levels = list(k, value)?,
            "verify.convergence_reference" => self.verify_convergence_reference = scalar(k, value)?,
            "sweep.eps_list" => self.sweep_eps_list = list(k, value)?,
            "sweep.jobs" => self.sweep_jobs = scalar(k, value)?,
            "output.dir" => self.output_dir = PathBuf::from(unquote(value)),
            "output.format" => {
                self.output_format = match unquote(value) {
                    "both" => OutputFormat::Both,
                    "csv" => OutputFormat::Csv,
                    "json" => OutputFormat::Json,
                    other => return Err(cfg_err(k, format!("unknown format `{other}`"))),
                }
            }
            "seed" => self.seed = scalar(k, value)?,
            _ => return Err(cfg_err(k, "unknown key")),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                cfg_err(&format!("line {}", n + 1), "expected `key = value`")
            })?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| cfg_err(o, "override must look like key=value"))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let chk = |ok: bool, key: &str, reason: &str| {
            if ok {
                Ok(())
            } else {
                Err(cfg_err(key, reason))
            }
        };
        chk(self.reaction_a > 0.0 && self.reaction_a < 1.0, "reaction.a", "must lie in (0, 1)")?;
        chk(self.reaction_delta.is_finite(), "reaction.delta", "must be finite")?;
        chk(self.grid_n >= 2, "grid.N", "spatial dimension must be >= 2")?;
        chk(
            self.grid_mode == GridMode::Radial || self.grid_n == 2,
            "grid.N",
            "the box mode is two-dimensional",
        )?;
        chk(self.grid_r > 0.0, "grid.R", "must be positive")?;
        chk(self.grid_nr >= 16, "grid.Nr", "need at least 16 cells")?;
        chk(self.grid_nx >= 16 && self.grid_ny >= 16, "grid.Nx", "need at least 16 cells per axis")?;
        chk(self.profile_c0 > self.reaction_a, "profile.c0", "peak must exceed reaction.a")?;
        chk(
            self.profile_r0 > 0.0 && self.profile_r0 < self.grid_r,
            "profile.R0",
            "support radius must lie in (0, grid.R)",
        )?;
        chk(self.solver_m >= 2, "solver.m", "diffusion exponent must be >= 2")?;
        chk(self.solver_eps > 0.0 && self.solver_eps < 1.0, "solver.eps", "must lie in (0, 1)")?;
        chk(
            self.solver_cfl_safety > 0.0 && self.solver_cfl_safety <= 1.0,
            "solver.cfl_safety",
            "must lie in (0, 1]",
        )?;
        chk(self.solver_t_end_factor >= 1.0, "solver.t_end_factor", "must be >= 1 (units of the generation time)")?;
        chk(self.solver_reaction_substep > 0.0, "solver.reaction_substep", "must be positive")?;
        chk(self.kernel_tol > 0.0, "kernel.tol", "must be positive")?;
        chk(self.kernel_dtau_max > 0.0, "kernel.dtau_max", "must be positive")?;
        chk(
            self.envelope_cstar.map_or(true, |c| c >= 0.0 && c.is_finite()),
            "envelope.cstar",
            "must be nonnegative or `auto`",
        )?;
        chk(self.envelope_margin >= 0.0, "envelope.margin", "must be nonnegative")?;
        chk(self.envelope_inner_radii > 0, "envelope.inner_radii", "must be positive")?;
        chk(self.envelope_times > 0, "envelope.times", "must be positive")?;
        chk(self.envelope_ladder_rungs > 0, "envelope.ladder_rungs", "must be positive")?;
        let lim = self.reaction_a.min(1.0 - self.reaction_a);
        chk(self.verify_gamma > 0.0 && self.verify_gamma < lim, "verify.gamma", "must lie in (0, min(a, 1-a))")?;
        chk(self.verify_eta > 0.0 && self.verify_eta < lim, "verify.eta", "must lie in (0, min(a, 1-a))")?;
        chk(self.verify_sandwich_tol >= 0.0, "verify.sandwich_tol", "must be nonnegative")?;
        chk(
            self.verify_m0_step > 0.0 && self.verify_m0_max >= self.verify_m0_step,
            "verify.m0_step",
            "ladder step must be positive and below verify.m0_max",
        )?;
        chk(
            self.verify_cthick_step > 0.0 && self.verify_cthick_max >= self.verify_cthick_step,
            "verify.cthick_step",
            "ladder step must be positive and below verify.cthick_max",
        )?;
        chk(self.verify_b_cap > 0.0, "verify.b_cap", "must be positive")?;
        chk(self.verify_weak_intervals >= 1, "verify.weak_intervals", "must be >= 1")?;
        if self.verify_convergence {
            let lv = &self.verify_convergence_levels;
            chk(lv.len() >= 2, "verify.convergence_levels", "need at least two levels")?;
            chk(
                lv.windows(2).all(|w| w[0] < w[1]) && lv.iter().all(|&n| n >= 16),
                "verify.convergence_levels",
                "levels must increase and be >= 16",
            )?;
            let r = self.verify_convergence_reference;
            chk(
                lv.iter().all(|&n| r > n && r % n == 0),
                "verify.convergence_reference",
                "reference must be a multiple of every level",
            )?;
        }
        chk(!self.sweep_eps_list.is_empty(), "sweep.eps_list", "must not be empty")?;
        chk(
            self.sweep_eps_list.iter().all(|&e| e > 0.0 && e < 1.0),
            "sweep.eps_list",
            "every ε must lie in (0, 1)",
        )?;
        chk(self.sweep_jobs >= 1, "sweep.jobs", "must be >= 1")?;
        Ok(())
    }

    /// One config per ε in `sweep.eps_list`.
    pub fn children(&self) -> Vec<RunConfig> {
        self.sweep_eps_list
            .iter()
            .map(|&eps| RunConfig {
                solver_eps: eps,
                ..self.clone()
            })
            .collect()
    }

    /// Effective configuration as sorted `(key, value)` pairs.
    pub fn echo(&self) -> BTreeMap<&'static str, String> {
        let mode = match self.grid_mode {
            GridMode::Radial => "radial",
            GridMode::Cartesian2d => "cartesian2d",
        };
        let format = match self.output_format {
            OutputFormat::Both => "both",
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        };
        let f = |x: f64| format!("{x:?}");
        let pairs: Vec<(&'static str, String)> = vec![
            ("reaction.kind", "cubic".into()),
            ("reaction.a", f(self.reaction_a)),
            ("reaction.delta", f(self.reaction_delta)),
            ("grid.mode", mode.into()),
            ("grid.N", self.grid_n.to_string()),
            ("grid.R", f(self.grid_r)),
            ("grid.Nr", self.grid_nr.to_string()),
            ("grid.Nx", self.grid_nx.to_string()),
            ("grid.Ny", self.grid_ny.to_string()),
            ("profile.c0", f(self.profile_c0)),
            ("profile.R0", f(self.profile_r0)),
            ("solver.m", self.solver_m.to_string()),
            ("solver.eps", f(self.solver_eps)),
            ("solver.cfl_safety", f(self.solver_cfl_safety)),
            ("solver.t_end_factor", f(self.solver_t_end_factor)),
            ("solver.reaction_substep", f(self.solver_reaction_substep)),
            ("kernel.tol", f(self.kernel_tol)),
            ("kernel.dtau_max", f(self.kernel_dtau_max)),
            ("envelope.cstar", self.envelope_cstar.map_or("auto".into(), f)),
            ("envelope.margin", f(self.envelope_margin)),
            ("envelope.inner_radii", self.envelope_inner_radii.to_string()),
            ("envelope.outer_radii", self.envelope_outer_radii.to_string()),
            ("envelope.times", self.envelope_times.to_string()),
            ("envelope.ladder_rungs", self.envelope_ladder_rungs.to_string()),
            ("verify.gamma", f(self.verify_gamma)),
            ("verify.eta", f(self.verify_eta)),
            ("verify.sandwich_tol", f(self.verify_sandwich_tol)),
            ("verify.m0_step", f(self.verify_m0_step)),
            ("verify.m0_max", f(self.verify_m0_max)),
            ("verify.cthick_step", f(self.verify_cthick_step)),
            ("verify.cthick_max", f(self.verify_cthick_max)),
            ("verify.b_cap", f(self.verify_b_cap)),
            ("verify.dense_per_decade", self.verify_dense_per_decade.to_string()),
            ("verify.dense_decades", self.verify_dense_decades.to_string()),
            ("verify.weak_intervals", self.verify_weak_intervals.to_string()),
            ("verify.convergence", self.verify_convergence.to_string()),
            ("verify.convergence_levels", fmt_list(&self.verify_convergence_levels)),
            ("verify.convergence_reference", self.verify_convergence_reference.to_string()),
            (
                "sweep.eps_list",
                fmt_list(&self.sweep_eps_list.iter().map(|&e| f(e)).collect::<Vec<_>>()),
            ),
            ("sweep.jobs", self.sweep_jobs.to_string()),
            ("output.dir", self.output_dir.display().to_string()),
            ("output.format", format.into()),
            ("seed", self.seed.to_string()),
        ];
        pairs.into_iter().collect()
    }

    /// The echo as config-file text; parsing it gives back `self`.
    pub fn echo_text(&self) -> String {
        self.echo()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!((c.reaction_a, c.solver_m, c.grid_n, c.solver_eps, c.grid_nr), (0.3, 2, 2, 0.01, 2048));
        c.validate().unwrap();
    }

    #[test]
    fn echo_round_trips_and_covers_every_key() {
        let mut c = RunConfig::default();
        c.apply_overrides(&["sweep.eps_list=[0.04, 0.02]", "envelope.cstar=512", "grid.mode=cartesian2d"])
            .unwrap();
        let back = RunConfig::parse(&c.echo_text()).unwrap();
        assert_eq!(back, c);
        let keys: Vec<&str> = c.echo().keys().copied().collect();
        let mut expected = KEYS.to_vec();
        expected.sort_unstable();
        assert_eq!(keys, expected);
    }

    #[test]
    fn errors_name_the_key() {
        let e = RunConfig::parse("solver.bogus = 1").unwrap_err();
        assert!(matches!(e, Error::Config { ref key, .. } if key == "solver.bogus"));
        let e = RunConfig::parse("solver.m = two").unwrap_err();
        assert!(matches!(e, Error::Config { ref key, .. } if key == "solver.m"));
        let c = RunConfig::parse("solver.m = 1").unwrap();
        let e = c.validate().unwrap_err();
        assert!(matches!(e, Error::Config { ref key, .. } if key == "solver.m"));
        assert!(RunConfig::parse("just words").is_err());
    }

    #[test]
    fn sweep_children() {
        let c = RunConfig::parse("sweep.eps_list = [0.02, 0.01, 0.005]  # three\n").unwrap();
        let kids = c.children();
        assert_eq!(kids.len(), 3);
        assert_eq!(kids[2].solver_eps, 0.005);
    }
}
