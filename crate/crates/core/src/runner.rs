//! Experiment pipeline behind the command line: per-ε verification runs,
//! sweeps, and their CSV/JSON outputs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde_json::{json, Map, Number, Value};

use crate::config::{GridMode, OutputFormat, RunConfig};
use crate::envelope::{calibrate_cstar, Calibration, CalibrationSample, Envelope, GenerationClock, Side};
use crate::error::{Error, Result};
use crate::geometry::{
    build_u0, cell_distances, gamma0_locate, CartesianGrid2D, Field, Grid, InitialProfile, RadialGrid,
};
use crate::ode::KernelConfig;
use crate::reaction::{perturb, BistableReaction, Cubic, PerturbedReaction, Reaction};
use crate::solver::{run, RunOutput, RunStats, Snapshot, SolverConfig};
use crate::verify::{
    classify_bands, convergence_orders, default_test_functions, fit_three_band, fit_width, l1_against_fine,
    measure_width, optimality_scan, sandwich_check, weak_residual, BandReport, ConvergenceReport,
    OptimalityInputs, OptimalityReport, SandwichReport, ThreeBandFit, VerifyParams, WidthFit,
};

pub const SCHEMA_VERSION: &str = "1.0";

/// Cells adjacent to ∂Ω must stay below this for the boundary to count as inactive.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// The reaction selected by the config: the cubic, or the cubic plus a constant δ.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelReaction {
    Cubic(Cubic),
    Perturbed(PerturbedReaction<Cubic>),
}

impl Reaction for ModelReaction {
    fn f(&self, u: f64) -> f64 {
        match self {
            ModelReaction::Cubic(r) => r.f(u),
            ModelReaction::Perturbed(r) => r.f(u),
        }
    }
    fn df(&self, u: f64) -> f64 {
        match self {
            ModelReaction::Cubic(r) => r.df(u),
            ModelReaction::Perturbed(r) => r.df(u),
        }
    }
    fn d2f(&self, u: f64) -> f64 {
        match self {
            ModelReaction::Cubic(r) => r.d2f(u),
            ModelReaction::Perturbed(r) => r.d2f(u),
        }
    }
    fn outer_zeros(&self) -> (f64, f64) {
        match self {
            ModelReaction::Cubic(r) => r.outer_zeros(),
            ModelReaction::Perturbed(r) => r.outer_zeros(),
        }
    }
}

impl BistableReaction for ModelReaction {
    fn unstable_zero(&self) -> f64 {
        match self {
            ModelReaction::Cubic(r) => r.unstable_zero(),
            ModelReaction::Perturbed(r) => r.unstable_zero(),
        }
    }
    fn mu(&self) -> f64 {
        match self {
            ModelReaction::Cubic(r) => r.mu(),
            ModelReaction::Perturbed(r) => r.mu(),
        }
    }
}

pub fn build_reaction(cfg: &RunConfig) -> Result<ModelReaction> {
    let cubic = Cubic::validated(cfg.reaction_a)?;
    if cfg.reaction_delta == 0.0 {
        Ok(ModelReaction::Cubic(cubic))
    } else {
        Ok(ModelReaction::Perturbed(perturb(&cubic, cfg.reaction_delta)?))
    }
}

pub fn build_grid(cfg: &RunConfig) -> Result<(Grid, InitialProfile)> {
    match cfg.grid_mode {
        GridMode::Radial => Ok((
            Grid::Radial(RadialGrid::new(cfg.grid_n, cfg.grid_r, cfg.grid_nr)?),
            InitialProfile::radial(cfg.profile_c0, cfg.profile_r0),
        )),
        GridMode::Cartesian2d => {
            let side = 2.0 * cfg.grid_r;
            let ly = side * cfg.grid_ny as f64 / cfg.grid_nx as f64;
            Ok((
                Grid::Cartesian(CartesianGrid2D::new(side, ly, cfg.grid_nx, cfg.grid_ny)?),
                InitialProfile::centered(cfg.profile_c0, cfg.profile_r0, [0.5 * side, 0.5 * ly]),
            ))
        }
    }
}

/// Geometry, data and clock of a single-ε run.
#[derive(Debug, Clone)]
pub struct Setup {
    pub cfg: RunConfig,
    pub reaction: ModelReaction,
    pub grid: Grid,
    pub profile: InitialProfile,
    pub u0: Field,
    pub radii: Vec<f64>,
    pub dist: Vec<f64>,
    /// Unstable zero of the (possibly perturbed) reaction.
    pub a: f64,
    /// Radius of Γ₀.
    pub r0: f64,
    pub clock: GenerationClock,
    pub kernel: KernelConfig,
}

impl Setup {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let reaction = build_reaction(cfg)?;
        let (grid, profile) = build_grid(cfg)?;
        let a = reaction.unstable_zero();
        let u0 = build_u0(&grid, &profile, a)?;
        let gamma0 = gamma0_locate(&grid, &profile, a)?;
        let dist = cell_distances(&grid, &gamma0, &profile, a);
        let mut kernel = KernelConfig::for_sup_norm(u0.sup_norm().max(profile.c0))?;
        kernel.tol = cfg.kernel_tol;
        kernel.dtau_max = cfg.kernel_dtau_max;
        kernel.validate()?;
        Ok(Setup {
            radii: grid.radii(&profile),
            r0: profile.level_radius(a)?,
            clock: GenerationClock::new(reaction.mu(), cfg.solver_eps)?,
            cfg: cfg.clone(),
            reaction,
            grid,
            profile,
            u0,
            dist,
            a,
            kernel,
        })
    }

    pub fn envelope(&self, cstar: f64) -> Result<Envelope<ModelReaction>> {
        Envelope::new(
            self.reaction.clone(),
            self.profile,
            self.grid.dim(),
            self.cfg.solver_eps,
            cstar,
            self.cfg.solver_m,
            self.kernel,
        )
    }

    pub fn calibration_sample(&self) -> CalibrationSample {
        CalibrationSample {
            inner_radii: self.cfg.envelope_inner_radii,
            outer_radii: self.cfg.envelope_outer_radii,
            outer_limit: self.grid.inner_radius(&self.profile),
            times: self.cfg.envelope_times,
            margin: self.cfg.envelope_margin,
            ladder_first: 0.5,
            ladder_rungs: self.cfg.envelope_ladder_rungs,
        }
    }

    pub fn verify_params(&self) -> VerifyParams {
        let c = &self.cfg;
        VerifyParams {
            gamma: c.verify_gamma,
            eta: c.verify_eta,
            sandwich_tol: c.verify_sandwich_tol,
            m0_step: c.verify_m0_step,
            m0_max: c.verify_m0_max,
            cthick_step: c.verify_cthick_step,
            cthick_max: c.verify_cthick_max,
            b_cap: c.verify_b_cap,
        }
    }

    pub fn t_end(&self) -> f64 {
        self.cfg.solver_t_end_factor * self.clock.t_eps
    }

    pub fn solver_config(&self, t_end: f64, times: Vec<f64>) -> SolverConfig {
        SolverConfig {
            m: self.cfg.solver_m,
            eps: self.cfg.solver_eps,
            cfl_safety: self.cfg.solver_cfl_safety,
            t_end,
            snapshot_times: times,
            reaction_substep_factor: self.cfg.solver_reaction_substep,
            max_steps: SolverConfig::new(2, 0.1, 1.0).max_steps,
        }
    }

    pub fn simulate(&self, t_end: f64, times: Vec<f64>) -> Result<RunOutput> {
        run(&self.solver_config(t_end, times), &self.reaction, &self.grid, &self.u0)
    }
}

/// Snapshot times of a verification run.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    /// `{0, ¼, ½, ¾} tᵉ`, `tᵉ(b)` for `b = 1, 2, 3`, `tᵉ`, `1.5 tᵉ`, `2 tᵉ`, clipped to the horizon.
    pub base: Vec<f64>,
    /// `tᵉ - tᵉ 10^{-j/n}` for `n` points per decade.
    pub dense: Vec<f64>,
    /// `tᵉ k / K`, `k = 0..=K`, for the weak residual.
    pub uniform: Vec<f64>,
    pub t_end: f64,
}

impl Schedule {
    pub fn new(clock: &GenerationClock, cfg: &RunConfig) -> Self {
        let te = clock.t_eps;
        let t_end = cfg.solver_t_end_factor * te;
        let mut base = vec![0.0, 0.25 * te, 0.5 * te, 0.75 * te];
        base.extend([3.0, 2.0, 1.0].iter().map(|&b| clock.t_eps_b(b)).filter(|&t| t > 0.0));
        base.extend([te, 1.5 * te, 2.0 * te]);
        base.retain(|&t| t <= t_end);
        sort_dedup(&mut base);
        let per = cfg.verify_dense_per_decade;
        let dense = (1..=per * cfg.verify_dense_decades)
            .map(|j| te - te * 10f64.powf(-(j as f64) / per as f64))
            .collect();
        let k = cfg.verify_weak_intervals;
        let uniform = (0..=k).map(|i| te * i as f64 / k as f64).collect();
        Schedule {
            base,
            dense,
            uniform,
            t_end,
        }
    }

    pub fn all(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .base
            .iter()
            .chain(&self.dense)
            .chain(&self.uniform)
            .copied()
            .collect();
        sort_dedup(&mut v);
        v
    }
}

fn sort_dedup(v: &mut Vec<f64>) {
    v.sort_by(f64::total_cmp);
    v.dedup();
}

fn pick<'a>(snaps: &'a [Snapshot], times: &[f64]) -> Vec<&'a Snapshot> {
    times
        .iter()
        .filter_map(|&t| snaps.iter().find(|s| s.t == t))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRecord {
    pub cstar: f64,
    /// True when `C★` came from the config rather than the ladder.
    pub fixed: bool,
    pub calibration: Option<Calibration>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRecord {
    pub report: ConvergenceReport,
    /// L∞ distance of each level to the averaged reference.
    pub linf: Vec<f64>,
    /// `3 ×` the L∞ error at the run resolution, when it is one of the levels.
    pub sandwich_budget: Option<f64>,
}

/// Everything a single-ε verification run produces.
#[derive(Debug, Clone)]
pub struct EpsReport {
    pub eps: f64,
    pub t_eps: f64,
    pub t_end: f64,
    pub r0: f64,
    pub calibration: Option<CalibrationRecord>,
    pub calibration_error: Option<String>,
    pub sandwich: Option<SandwichReport>,
    pub bands: Option<BandReport>,
    pub width: Option<f64>,
    pub width_error: Option<String>,
    pub thickness: Option<ThreeBandFit>,
    pub optimality: Option<OptimalityReport>,
    pub weak_residuals: Vec<(String, f64)>,
    pub convergence: Option<ConvergenceRecord>,
    pub stats: Option<RunStats>,
    /// Runtime error that stopped the pipeline.
    pub error: Option<String>,
    pub failures: Vec<String>,
}

impl EpsReport {
    fn empty(eps: f64) -> Self {
        EpsReport {
            eps,
            t_eps: f64::NAN,
            t_end: f64::NAN,
            r0: f64::NAN,
            calibration: None,
            calibration_error: None,
            sandwich: None,
            bands: None,
            width: None,
            width_error: None,
            thickness: None,
            optimality: None,
            weak_residuals: Vec::new(),
            convergence: None,
            stats: None,
            error: None,
            failures: Vec::new(),
        }
    }

    pub fn status(&self) -> &'static str {
        if self.error.is_some() {
            "error"
        } else if self.failures.is_empty() {
            "passed"
        } else {
            "failed"
        }
    }

    pub fn m0(&self) -> Option<f64> {
        self.bands.as_ref().and_then(|b| b.m0)
    }

    pub fn cthick(&self) -> Option<f64> {
        self.thickness.as_ref().and_then(|t| t.c)
    }

    pub fn t_min(&self) -> Option<f64> {
        self.optimality.as_ref().and_then(|o| o.t_min)
    }

    pub fn b_fit(&self) -> Option<f64> {
        self.optimality.as_ref().and_then(|o| o.b_fit)
    }
}

#[derive(Debug, Clone)]
pub struct EpsOutcome {
    pub report: EpsReport,
    /// Snapshots on the base schedule, for the CSV.
    pub snapshots: Vec<Snapshot>,
    pub grid: Option<Grid>,
    pub profile: Option<InitialProfile>,
    pub seconds: f64,
}

/// Calibrates `C★` (or takes the configured value), simulates to the
/// horizon and runs every check. Runtime errors end up in `report.error`.
pub fn run_eps(cfg: &RunConfig) -> EpsOutcome {
    let start = Instant::now();
    let mut report = EpsReport::empty(cfg.solver_eps);
    let mut snapshots = Vec::new();
    let mut geometry = None;
    if let Err(e) = run_eps_inner(cfg, &mut report, &mut snapshots, &mut geometry) {
        report.error = Some(e.to_string());
        if let Error::BoundViolation { snapshot, .. } = e {
            snapshots.push(*snapshot);
        }
    }
    let (grid, profile) = geometry.unzip();
    EpsOutcome {
        report,
        snapshots,
        grid,
        profile,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn run_eps_inner(
    cfg: &RunConfig,
    rep: &mut EpsReport,
    out_snaps: &mut Vec<Snapshot>,
    geometry: &mut Option<(Grid, InitialProfile)>,
) -> Result<()> {
    let setup = Setup::new(cfg)?;
    *geometry = Some((setup.grid.clone(), setup.profile));
    let vp = setup.verify_params();
    let eps = cfg.solver_eps;
    let te = setup.clock.t_eps;
    rep.t_eps = te;
    rep.t_end = setup.t_end();
    rep.r0 = setup.r0;

    let envelope = match cfg.envelope_cstar {
        Some(c) => {
            rep.calibration = Some(CalibrationRecord {
                cstar: c,
                fixed: true,
                calibration: None,
            });
            Some(setup.envelope(c)?)
        }
        None => match calibrate_cstar(&setup.envelope(1.0)?, &setup.calibration_sample()) {
            Ok(cal) => {
                let env = setup.envelope(cal.cstar)?;
                rep.calibration = Some(CalibrationRecord {
                    cstar: cal.cstar,
                    fixed: false,
                    calibration: Some(cal),
                });
                Some(env)
            }
            Err(e @ Error::LadderExhausted { .. }) => {
                rep.failures.push(format!("calibration: {e}"));
                rep.calibration_error = Some(e.to_string());
                None
            }
            Err(e) => return Err(e),
        },
    };

    let schedule = Schedule::new(&setup.clock, cfg);
    let output = setup.simulate(schedule.t_end, schedule.all())?;
    let snaps = &output.snapshots;
    if output.stats.boundary_max > BOUNDARY_TOL {
        rep.failures.push(format!(
            "boundary: solution reached the cells next to the boundary (max {:e})",
            output.stats.boundary_max
        ));
    }
    rep.stats = Some(output.stats.clone());

    if let Some(env) = &envelope {
        let s = sandwich_check(snaps, &setup.radii, env, vp.sandwich_tol)?;
        if s.violations > 0 {
            rep.failures.push(format!(
                "sandwich: {} violations, worst margin {:e}",
                s.violations, s.worst_margin
            ));
        }
        rep.sandwich = Some(s);
    }

    let at_te = snaps
        .iter()
        .find(|s| s.t == te)
        .ok_or_else(|| Error::LayerNotFound("no snapshot at the generation time".into()))?;
    let bands = classify_bands(&at_te.field, &setup.u0, setup.a, eps, &vp);
    if bands.range_violations > 0 {
        rep.failures
            .push(format!("bands: {} cells outside [0, 1 + γ]", bands.range_violations));
    }
    if bands.m0.is_none() {
        rep.failures.push(format!(
            "bands: M0 ladder exhausted (required {})",
            bands.m0_required
        ));
    }
    match measure_width(&setup.grid, &at_te.field, &setup.profile, vp.eta) {
        Ok(w) => rep.width = Some(w),
        Err(e) => {
            rep.failures.push(format!("width: {e}"));
            rep.width_error = Some(e.to_string());
        }
    }
    let thick = fit_three_band(&at_te.field, &setup.dist, eps, &vp);
    if thick.c.is_none() || thick.range_violations > 0 {
        rep.failures.push(format!(
            "thickness: three-band statement fails (required 𝓒 = {}, {} range violations)",
            thick.c_required, thick.range_violations
        ));
    }
    if let (Some(m0), Some(c)) = (bands.m0, thick.c) {
        let inp = OptimalityInputs {
            grid: &setup.grid,
            profile: &setup.profile,
            u0: &setup.u0,
            dist: &setup.dist,
            a: setup.a,
            r0: setup.r0,
            clock: setup.clock,
            m0,
            cthick: c,
        };
        let opt = optimality_scan(snaps, &inp, &vp);
        if !opt.b_within_cap {
            rep.failures.push(format!(
                "optimality: b = {:?} outside [0, {}]",
                opt.b_fit, opt.b_cap
            ));
        }
        if opt.probe_below != Some(true) {
            rep.failures.push(format!(
                "optimality: probe at -𝓒ε reads {:?} at tᵉ({})",
                opt.probe_value, opt.probe_b
            ));
        }
        rep.optimality = Some(opt);
    }
    rep.bands = Some(bands);
    rep.thickness = Some(thick);

    let uniform: Vec<Snapshot> = pick(snaps, &schedule.uniform).into_iter().cloned().collect();
    for phi in default_test_functions(&setup.grid) {
        let r = weak_residual(&uniform, &setup.grid, &setup.reaction, eps, cfg.solver_m, &phi)?;
        rep.weak_residuals.push((phi.name(), r));
    }

    if cfg.verify_convergence {
        rep.convergence = Some(convergence_record(cfg)?);
    }

    *out_snaps = pick(snaps, &schedule.base).into_iter().cloned().collect();
    Ok(())
}

fn with_resolution(cfg: &RunConfig, n: usize) -> RunConfig {
    let mut c = cfg.clone();
    match c.grid_mode {
        GridMode::Radial => c.grid_nr = n,
        GridMode::Cartesian2d => {
            c.grid_ny = c.grid_ny * n / c.grid_nx;
            c.grid_nx = n;
        }
    }
    c
}

/// Solution at `tᵉ` on one resolution.
pub fn solution_at_generation_time(cfg: &RunConfig) -> Result<(Grid, Field)> {
    let setup = Setup::new(cfg)?;
    let te = setup.clock.t_eps;
    let out = setup.simulate(te, vec![te])?;
    let field = out
        .snapshots
        .into_iter()
        .next()
        .map(|s| s.field)
        .ok_or_else(|| Error::LayerNotFound("missing snapshot at tᵉ".into()))?;
    Ok((setup.grid, field))
}

/// L¹ self-convergence at `tᵉ` over `verify.convergence_levels` against
/// `verify.convergence_reference`.
pub fn convergence_record(cfg: &RunConfig) -> Result<ConvergenceRecord> {
    let reference = cfg.verify_convergence_reference;
    let (gf, uf) = solution_at_generation_time(&with_resolution(cfg, reference))?;
    let levels = &cfg.verify_convergence_levels;
    let runs = levels
        .iter()
        .map(|&n| solution_at_generation_time(&with_resolution(cfg, n)))
        .collect::<Result<Vec<_>>>()?;
    let mut errors = Vec::new();
    let mut linf = Vec::new();
    for (gc, uc) in &runs {
        errors.push(l1_against_fine(gc, &uc.0, &gf, &uf.0)?);
        linf.push(linf_against_fine(gc, &uc.0, &gf, &uf.0)?);
    }
    let run_n = match cfg.grid_mode {
        GridMode::Radial => cfg.grid_nr,
        GridMode::Cartesian2d => cfg.grid_nx,
    };
    let sandwich_budget = levels.iter().position(|&n| n == run_n).map(|i| 3.0 * linf[i]);
    Ok(ConvergenceRecord {
        report: convergence_orders(levels, reference, &errors),
        linf,
        sandwich_budget,
    })
}

/// L∞ distance between a coarse solution and the fine one averaged onto it.
pub fn linf_against_fine(coarse: &Grid, uc: &[f64], fine: &Grid, uf: &[f64]) -> Result<f64> {
    let avg = average_onto(coarse, fine, uf)?;
    Ok(uc.iter().zip(&avg).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

/// Volume average of a fine field onto a coarse grid it refines.
pub fn average_onto(coarse: &Grid, fine: &Grid, uf: &[f64]) -> Result<Vec<f64>> {
    let (nc, nf) = (coarse.len(), fine.len());
    if nf % nc != 0 {
        return Err(Error::param("convergence", "fine grid must refine the coarse grid"));
    }
    match (coarse, fine) {
        (Grid::Radial(_), Grid::Radial(_)) => {
            let k = nf / nc;
            Ok((0..nc)
                .map(|i| {
                    let (mut m, mut v) = (0.0, 0.0);
                    for j in i * k..(i + 1) * k {
                        m += fine.volume(j) * uf[j];
                        v += fine.volume(j);
                    }
                    m / v
                })
                .collect())
        }
        (Grid::Cartesian(gc), Grid::Cartesian(gf)) => {
            let s = gf.nx / gc.nx;
            Ok((0..nc)
                .map(|c| {
                    let (ic, jc) = (c % gc.nx, c / gc.nx);
                    let mut sum = 0.0;
                    for dj in 0..s {
                        for di in 0..s {
                            sum += uf[gf.index(ic * s + di, jc * s + dj)];
                        }
                    }
                    sum / (s * s) as f64
                })
                .collect())
        }
        _ => Err(Error::param("convergence", "grids must have the same kind")),
    }
}

// ---------------------------------------------------------------- sweep

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub entries: Vec<EpsReport>,
    pub width_fit: Option<WidthFit>,
    pub width_fit_notice: Option<String>,
    pub m0_ratio: Option<f64>,
    pub b_min: Option<f64>,
    pub b_max: Option<f64>,
    pub b_cap: f64,
    pub failures: Vec<String>,
}

pub const M0_RATIO_MAX: f64 = 2.0;
pub const WIDTH_R2_MIN: f64 = 0.98;

impl SweepReport {
    pub fn from_entries(entries: Vec<EpsReport>, b_cap: f64) -> Self {
        let mut failures = Vec::new();
        let with_width: Vec<&EpsReport> = entries.iter().filter(|e| e.width.is_some()).collect();
        let (width_fit, width_fit_notice) = if entries.len() < 2 {
            (None, Some("fit skipped: a single ε gives no slope information".to_string()))
        } else if with_width.len() < 2 {
            (None, Some("fit skipped: fewer than two widths were measured".to_string()))
        } else {
            let eps: Vec<f64> = with_width.iter().map(|e| e.eps).collect();
            let w: Vec<f64> = with_width.iter().map(|e| e.width.unwrap()).collect();
            (fit_width(&eps, &w), None)
        };
        if let Some(f) = &width_fit {
            if !(f.r_squared >= WIDTH_R2_MIN) {
                failures.push(format!("width fit: R² = {} below {}", f.r_squared, WIDTH_R2_MIN));
            }
        }
        let m0s: Vec<f64> = entries.iter().filter_map(EpsReport::m0).collect();
        let m0_ratio = (!m0s.is_empty()).then(|| {
            let hi = m0s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = m0s.iter().copied().fold(f64::INFINITY, f64::min);
            hi / lo
        });
        if let Some(r) = m0_ratio {
            if r > M0_RATIO_MAX {
                failures.push(format!("M0 spread: max/min = {r} above {M0_RATIO_MAX}"));
            }
        }
        let bs: Vec<f64> = entries.iter().filter_map(EpsReport::b_fit).collect();
        let b_min = bs.iter().copied().reduce(f64::min);
        let b_max = bs.iter().copied().reduce(f64::max);
        for e in &entries {
            match e.status() {
                "error" => failures.push(format!("ε = {}: runtime error", e.eps)),
                "failed" => failures.push(format!("ε = {}: {} check(s) failed", e.eps, e.failures.len())),
                _ => {}
            }
        }
        SweepReport {
            entries,
            width_fit,
            width_fit_notice,
            m0_ratio,
            b_min,
            b_max,
            b_cap,
            failures,
        }
    }

    pub fn has_errors(&self) -> bool {
        self.entries.iter().any(|e| e.error.is_some())
    }
}

/// Runs every ε of the sweep on at most `jobs` threads and writes all outputs.
pub fn run_sweep(cfg: &RunConfig) -> Result<(SweepReport, Vec<EpsOutcome>)> {
    cfg.validate()?;
    let children = cfg.children();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.sweep_jobs)
        .build()
        .map_err(|e| Error::Config {
            key: "sweep.jobs".into(),
            reason: e.to_string(),
        })?;
    let outcomes: Vec<EpsOutcome> = pool.install(|| children.par_iter().map(run_eps).collect());
    let sweep = SweepReport::from_entries(
        outcomes.iter().map(|o| o.report.clone()).collect(),
        cfg.verify_b_cap,
    );
    Ok((sweep, outcomes))
}

// ---------------------------------------------------------------- output

/// A JSON number with 17 significant digits; non-finite values become null.
pub fn num(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    let s = format!("{x:.16e}");
    Value::Number(s.parse::<Number>().expect("formatted float is valid JSON"))
}

fn opt_num(x: Option<f64>) -> Value {
    x.map_or(Value::Null, num)
}

/// Float formatting for CSV cells.
pub fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or(String::new(), fmt_f)
}

pub fn config_json(cfg: &RunConfig) -> Value {
    Value::Object(
        cfg.echo()
            .into_iter()
            .map(|(k, v)| (k.to_string(), Value::String(v)))
            .collect(),
    )
}

/// Directory name for one ε: the shortest decimal that round-trips.
pub fn eps_label(eps: f64) -> String {
    format!("{eps}")
}

pub fn eps_report_json(rep: &EpsReport, cfg: &RunConfig) -> Value {
    let cal = rep.calibration.as_ref().map(|c| {
        let detail = c.calibration.as_ref().map(|k| {
            json!({
                "margin_minus": num(k.margin_minus),
                "margin_plus": num(k.margin_plus),
                "samples_minus": k.samples_minus,
                "samples_plus": k.samples_plus,
                "xi_min": num(k.xi_min),
                "xi_max": num(k.xi_max),
                "xi_in_range": k.xi_in_range,
                "rungs_tried": k.rungs_tried,
            })
        });
        json!({
            "Cstar": num(c.cstar),
            "fixed": c.fixed,
            "detail": detail,
        })
    });
    let sandwich = rep.sandwich.as_ref().map(|s| {
        json!({
            "tol": num(s.tol),
            "violations": s.violations,
            "worst_margin": num(s.worst_margin),
            "worst_t": num(s.worst_t),
            "worst_cell": s.worst_cell,
            "snapshots_checked": s.snapshots_checked,
            "cells_checked": s.cells_checked,
        })
    });
    let bands = rep.bands.as_ref().map(|b| {
        json!({
            "gamma": num(b.gamma),
            "range_violations": b.range_violations,
            "u_min": num(b.u_min),
            "u_max": num(b.u_max),
            "M0_required": num(b.m0_required),
            "M0": opt_num(b.m0),
        })
    });
    let thickness = rep.thickness.as_ref().map(|t| {
        json!({
            "eta": num(t.eta),
            "range_violations": t.range_violations,
            "Cthick_required": num(t.c_required),
            "Cthick": opt_num(t.c),
        })
    });
    let optimality = rep.optimality.as_ref().map(|o| {
        json!({
            "t_min": opt_num(o.t_min),
            "b_fit": opt_num(o.b_fit),
            "b_cap": num(o.b_cap),
            "b_within_cap": o.b_within_cap,
            "probe_b": num(o.probe_b),
            "probe_t": opt_num(o.probe_t),
            "probe_value": opt_num(o.probe_value),
            "probe_below": o.probe_below,
        })
    });
    let weak: Map<String, Value> = rep
        .weak_residuals
        .iter()
        .map(|(k, v)| (k.clone(), num(*v)))
        .collect();
    let convergence = rep.convergence.as_ref().map(|c| {
        json!({
            "resolutions": c.report.resolutions,
            "reference": c.report.reference,
            "errors": c.report.errors.iter().map(|&e| num(e)).collect::<Vec<_>>(),
            "orders": c.report.orders.iter().map(|&e| num(e)).collect::<Vec<_>>(),
            "monotone": c.report.monotone,
            "linf": c.linf.iter().map(|&e| num(e)).collect::<Vec<_>>(),
            "sandwich_budget": opt_num(c.sandwich_budget),
        })
    });
    let orders = rep
        .convergence
        .as_ref()
        .map(|c| Value::from(c.report.orders.iter().map(|&e| num(e)).collect::<Vec<_>>()));
    let solver = rep.stats.as_ref().map(|s| {
        json!({
            "steps": s.steps,
            "dt_min": num(s.dt_min),
            "dt_max": num(s.dt_max),
            "lower_bound": num(s.lower_bound),
            "bound": num(s.bound),
            "boundary_max": num(s.boundary_max),
            "min_value": num(s.min_value),
            "max_value": num(s.max_value),
        })
    });
    json!({
        "schema_version": SCHEMA_VERSION,
        "config": config_json(cfg),
        "eps": num(rep.eps),
        "t_eps": num(rep.t_eps),
        "t_end": num(rep.t_end),
        "r0": num(rep.r0),
        "status": rep.status(),
        "failures": rep.failures,
        "error": rep.error,
        "Cstar": opt_num(rep.calibration.as_ref().map(|c| c.cstar)),
        "calibration": cal,
        "calibration_error": rep.calibration_error,
        "sandwich_violations": rep.sandwich.as_ref().map(|s| s.violations),
        "sandwich": sandwich,
        "M0": opt_num(rep.m0()),
        "bands": bands,
        "width_eta": opt_num(rep.width),
        "width_error": rep.width_error,
        "Cthick_fit": opt_num(rep.cthick()),
        "thickness": thickness,
        "t_min": opt_num(rep.t_min()),
        "b_fit": opt_num(rep.b_fit()),
        "optimality": optimality,
        "weak_residuals": Value::Object(weak),
        "orders": orders,
        "convergence": convergence,
        "solver": solver,
    })
}

pub fn sweep_json(sweep: &SweepReport, cfg: &RunConfig) -> Value {
    let entries: Vec<Value> = sweep
        .entries
        .iter()
        .map(|e| {
            json!({
                "eps": num(e.eps),
                "status": e.status(),
                "t_gen": num(e.t_eps),
                "Cstar": opt_num(e.calibration.as_ref().map(|c| c.cstar)),
                "width": opt_num(e.width),
                "M0": opt_num(e.m0()),
                "Cthick_fit": opt_num(e.cthick()),
                "t_min": opt_num(e.t_min()),
                "b_fit": opt_num(e.b_fit()),
                "sandwich_violations": e.sandwich.as_ref().map(|s| s.violations),
                "report": format!("{}/report.json", eps_label(e.eps)),
            })
        })
        .collect();
    json!({
        "schema_version": SCHEMA_VERSION,
        "config": config_json(cfg),
        "status": if sweep.failures.is_empty() { "passed" } else { "failed" },
        "failures": sweep.failures,
        "entries": entries,
        "width_fit": sweep.width_fit.as_ref().map(|f| json!({
            "slope": num(f.slope),
            "r_squared": num(f.r_squared),
            "r_squared_min": num(WIDTH_R2_MIN),
        })),
        "width_fit_notice": sweep.width_fit_notice,
        "M0_ratio": opt_num(sweep.m0_ratio),
        "M0_ratio_max": num(M0_RATIO_MAX),
        "b_min": opt_num(sweep.b_min),
        "b_max": opt_num(sweep.b_max),
        "b_cap": num(sweep.b_cap),
    })
}

pub fn write_json(path: &Path, v: &Value) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

pub const SNAPSHOT_HEADER_RADIAL: &str = "t,r,u";
pub const SNAPSHOT_HEADER_BOX: &str = "t,x,y,u";

pub fn write_snapshots_csv(path: &Path, grid: &Grid, snapshots: &[Snapshot]) -> Result<()> {
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(w, "# schema_version={SCHEMA_VERSION}")?;
    match grid {
        Grid::Radial(g) => {
            writeln!(w, "{SNAPSHOT_HEADER_RADIAL}")?;
            for s in snapshots {
                for (r, u) in g.centers.iter().zip(&s.field.0) {
                    writeln!(w, "{},{},{}", fmt_f(s.t), fmt_f(*r), fmt_f(*u))?;
                }
            }
        }
        Grid::Cartesian(g) => {
            writeln!(w, "{SNAPSHOT_HEADER_BOX}")?;
            for s in snapshots {
                for (k, u) in s.field.0.iter().enumerate() {
                    let [x, y] = g.center(k);
                    writeln!(w, "{},{},{},{}", fmt_f(s.t), fmt_f(x), fmt_f(y), fmt_f(*u))?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub const SWEEP_HEADER: &str = "epsilon,t_gen,width,M0,t_min,b_fit";

pub fn write_sweep_csv(path: &Path, sweep: &SweepReport) -> Result<()> {
    let mut s = format!("# schema_version={SCHEMA_VERSION}\n{SWEEP_HEADER}\n");
    for e in &sweep.entries {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt_f(e.eps),
            fmt_f(e.t_eps),
            fmt_opt(e.width),
            fmt_opt(e.m0()),
            fmt_opt(e.t_min()),
            fmt_opt(e.b_fit()),
        ));
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn write_config_echo(dir: &Path, cfg: &RunConfig) -> Result<()> {
    let text = format!("# schema_version={SCHEMA_VERSION}\n{}", cfg.echo_text());
    fs::write(dir.join("config.txt"), text)?;
    Ok(())
}

fn wants_csv(cfg: &RunConfig) -> bool {
    cfg.output_format != OutputFormat::Json
}

fn wants_json(cfg: &RunConfig) -> bool {
    cfg.output_format != OutputFormat::Csv
}

/// Writes `<dir>/<eps>/{snapshots.csv, report.json, config.txt}`.
pub fn write_eps_outputs(dir: &Path, cfg: &RunConfig, out: &EpsOutcome) -> Result<PathBuf> {
    let sub = dir.join(eps_label(out.report.eps));
    fs::create_dir_all(&sub)?;
    write_config_echo(&sub, cfg)?;
    if wants_csv(cfg) {
        if let Some(grid) = &out.grid {
            write_snapshots_csv(&sub.join("snapshots.csv"), grid, &out.snapshots)?;
        }
    }
    if wants_json(cfg) {
        write_json(&sub.join("report.json"), &eps_report_json(&out.report, cfg))?;
    }
    Ok(sub)
}

/// Wall-clock times, kept apart from the reports so those stay byte-stable.
pub fn write_timing(dir: &Path, outcomes: &[EpsOutcome], total: f64) -> Result<()> {
    let per: Map<String, Value> = outcomes
        .iter()
        .map(|o| (eps_label(o.report.eps), json!(o.seconds)))
        .collect();
    write_json(
        &dir.join("timing.json"),
        &json!({ "schema_version": SCHEMA_VERSION, "seconds": per, "total_seconds": total }),
    )
}

pub fn write_sweep_outputs(cfg: &RunConfig, sweep: &SweepReport, outcomes: &[EpsOutcome], total: f64) -> Result<()> {
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir)?;
    write_config_echo(dir, cfg)?;
    for (child, out) in cfg.children().iter().zip(outcomes) {
        write_eps_outputs(dir, child, out)?;
    }
    if wants_csv(cfg) {
        write_sweep_csv(&dir.join("sweep.csv"), sweep)?;
    }
    if wants_json(cfg) {
        write_json(&dir.join("sweep.json"), &sweep_json(sweep, cfg))?;
    }
    write_timing(dir, outcomes, total)
}

// ---------------------------------------------------------------- envelope-check

pub const ENVELOPE_HEADER: &str = "x,t,w_minus,w_plus,L_minus,L_plus";

/// Rows of the envelope table over the calibration sample; `L_minus` is
/// empty outside the support of `w⁻`.
pub fn envelope_rows(env: &Envelope<ModelReaction>, pts: &[(f64, f64)]) -> Result<Vec<[Option<f64>; 6]>> {
    pts.par_iter()
        .map(|&(r, t)| {
            let lm = match env.residual_l(r, t, Side::Minus) {
                Ok(v) => Some(v),
                Err(Error::OutsideSupport { .. }) => None,
                Err(e) => return Err(e),
            };
            Ok([
                Some(r),
                Some(t),
                Some(env.eval_w(r, t, Side::Minus)?),
                Some(env.eval_w(r, t, Side::Plus)?),
                lm,
                Some(env.residual_l(r, t, Side::Plus)?),
            ])
        })
        .collect()
}

pub fn write_envelope_csv(path: &Path, rows: &[[Option<f64>; 6]]) -> Result<()> {
    let mut s = format!("# schema_version={SCHEMA_VERSION}\n{ENVELOPE_HEADER}\n");
    for row in rows {
        let cells: Vec<String> = row.iter().map(|c| fmt_opt(*c)).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn calibration_json(cal: &Calibration, cfg: &RunConfig) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "config": config_json(cfg),
        "eps": num(cal.eps),
        "Cstar": num(cal.cstar),
        "margin_minus": num(cal.margin_minus),
        "margin_plus": num(cal.margin_plus),
        "samples_minus": cal.samples_minus,
        "samples_plus": cal.samples_plus,
        "xi_min": num(cal.xi_min),
        "xi_max": num(cal.xi_max),
        "xi_in_range": cal.xi_in_range,
        "rungs_tried": cal.rungs_tried,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_keep_seventeen_digits() {
        let v = num(0.1);
        assert_eq!(v.to_string(), "1.0000000000000001e-1");
        assert_eq!(num(f64::NAN), Value::Null);
        let back: f64 = v.to_string().parse().unwrap();
        assert_eq!(back, 0.1);
    }

    #[test]
    fn schedule_contents() {
        let cfg = RunConfig::default();
        let clock = GenerationClock::new(0.21, 0.01).unwrap();
        let s = Schedule::new(&clock, &cfg);
        assert_eq!(s.base.len(), 10);
        assert_eq!(s.base[0], 0.0);
        assert!(s.base.contains(&clock.t_eps) && s.base.contains(&clock.t_eps_b(3.0)));
        assert_eq!(s.dense.len(), 40);
        assert_eq!(s.uniform.len(), 33);
        let all = s.all();
        assert!(all.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(*all.last().unwrap(), 2.0 * clock.t_eps);
    }

    #[test]
    fn single_entry_sweep_skips_fit() {
        let mut e = EpsReport::empty(0.01);
        e.width = Some(0.03);
        let s = SweepReport::from_entries(vec![e], 9.0);
        assert!(s.width_fit.is_none() && s.width_fit_notice.is_some());
    }

    #[test]
    fn perturbed_model_uses_shifted_zero() {
        let cfg = RunConfig::parse("reaction.delta = 0.01").unwrap();
        let r = build_reaction(&cfg).unwrap();
        assert!((r.unstable_zero() - 0.2461).abs() < 1e-3);
        assert!(r.mu() > 0.0);
    }
}
