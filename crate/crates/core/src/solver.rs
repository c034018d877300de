//! Explicit finite-volume solver for `u_t = Δ(u^m) + ε⁻² f(u)` with
//! zero-flux boundaries, advanced by Strang splitting.

use crate::error::{Error, Result};
use crate::geometry::{Face, Field, Grid};
use crate::reaction::{max_abs_slope, Reaction};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub m: u32,
    pub eps: f64,
    pub cfl_safety: f64,
    pub t_end: f64,
    /// Times at which snapshots are emitted; sorted and clipped to `[0, t_end]` by `run`.
    pub snapshot_times: Vec<f64>,
    /// Reaction RK4 substep is at most `factor · ε² / max|f'|`.
    pub reaction_substep_factor: f64,
    pub max_steps: usize,
}

impl SolverConfig {
    pub fn new(m: u32, eps: f64, t_end: f64) -> Self {
        SolverConfig {
            m,
            eps,
            cfl_safety: 0.4,
            t_end,
            snapshot_times: vec![0.0, t_end],
            reaction_substep_factor: 0.1,
            max_steps: 50_000_000,
        }
    }

    pub fn with_snapshots(mut self, times: Vec<f64>) -> Self {
        self.snapshot_times = times;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::param("solver.m", "diffusion exponent must be >= 2"));
        }
        if !(self.eps > 0.0) || !self.eps.is_finite() {
            return Err(Error::param("solver.eps", "must be positive"));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::param("solver.cfl_safety", "must lie in (0, 1]"));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Error::param("solver.t_end", "must be nonnegative"));
        }
        if !(self.reaction_substep_factor > 0.0) {
            return Err(Error::param("solver.reaction_substep", "must be positive"));
        }
        if self.snapshot_times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::param("solver.snapshots", "times must be finite and nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub field: Field,
}

/// Precomputed face list and inverse volumes for repeated diffusion steps.
#[derive(Debug, Clone)]
pub struct DiffusionOperator {
    faces: Vec<Face>,
    inv_vol: Vec<f64>,
    h: f64,
    d_eff: f64,
    boundary: Vec<usize>,
}

impl DiffusionOperator {
    pub fn new(grid: &Grid) -> Self {
        let boundary = match grid {
            Grid::Radial(g) => vec![g.centers.len() - 1],
            Grid::Cartesian(g) => (0..g.nx * g.ny)
                .filter(|&k| {
                    let (i, j) = (k % g.nx, k / g.nx);
                    i == 0 || j == 0 || i + 1 == g.nx || j + 1 == g.ny
                })
                .collect(),
        };
        DiffusionOperator {
            faces: grid.faces(),
            inv_vol: grid.volumes().iter().map(|v| 1.0 / v).collect(),
            h: grid.spacing(),
            d_eff: grid.effective_dim(),
            boundary,
        }
    }

    pub fn cfl_dt(&self, m: u32, safety: f64, umax: f64) -> f64 {
        let umax = umax.max(0.0);
        safety * self.h * self.h / (2.0 * self.d_eff * m as f64 * umax.powi(m as i32 - 1) + 1e-30)
    }

    /// `u += dt · div(∇ u^m)`, using `scratch` for `u^m` and the flux balance.
    pub fn apply(&self, u: &mut [f64], m: u32, dt: f64, scratch: &mut Vec<f64>) {
        let n = u.len();
        scratch.clear();
        scratch.resize(2 * n, 0.0);
        let (w, acc) = scratch.split_at_mut(n);
        for (wi, &ui) in w.iter_mut().zip(u.iter()) {
            *wi = ui.powi(m as i32);
        }
        for f in &self.faces {
            let flux = f.coeff * (w[f.hi] - w[f.lo]);
            acc[f.lo] += flux;
            acc[f.hi] -= flux;
        }
        for i in 0..n {
            u[i] += dt * acc[i] * self.inv_vol[i];
        }
    }

    pub fn boundary_max(&self, u: &[f64]) -> f64 {
        self.boundary.iter().map(|&k| u[k]).fold(0.0, f64::max)
    }

    /// `max |u - v|` over the boundary cells, `v` listed in boundary order.
    pub fn boundary_departure(&self, u: &[f64], v: &[f64]) -> f64 {
        self.boundary.iter().zip(v).map(|(&k, &v)| (u[k] - v).abs()).fold(0.0, f64::max)
    }
}

/// Per-cell RK4 integrator for `u' = ε⁻² f(u)`.
#[derive(Debug, Clone, Copy)]
pub struct ReactionStepper<R> {
    pub reaction: R,
    pub inv_eps2: f64,
    pub max_substep: f64,
    f_zero_at_zero: bool,
}

impl<R: Reaction> ReactionStepper<R> {
    /// `u_bound` is the range `[0, u_bound]` over which `max|f'|` is taken.
    pub fn new(reaction: R, eps: f64, factor: f64, u_bound: f64) -> Self {
        let slope = max_abs_slope(&reaction, 0.0, u_bound.max(1.0)).max(1e-300);
        let f_zero_at_zero = reaction.f(0.0) == 0.0;
        ReactionStepper {
            reaction,
            inv_eps2: 1.0 / (eps * eps),
            max_substep: factor * eps * eps / slope,
            f_zero_at_zero,
        }
    }

    pub fn advance_value(&self, mut u: f64, dt: f64) -> f64 {
        if dt <= 0.0 || (u == 0.0 && self.f_zero_at_zero) {
            return u;
        }
        let n = (dt / self.max_substep).ceil().max(1.0) as usize;
        let h = dt / n as f64;
        let g = |v: f64| self.inv_eps2 * self.reaction.f(v);
        for _ in 0..n {
            let k1 = g(u);
            let k2 = g(u + 0.5 * h * k1);
            let k3 = g(u + 0.5 * h * k2);
            let k4 = g(u + h * k3);
            u += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        u
    }

    pub fn apply(&self, u: &mut [f64], dt: f64) {
        for v in u.iter_mut() {
            *v = self.advance_value(*v, dt);
        }
    }
}

pub fn cfl_dt(cfg: &SolverConfig, grid: &Grid, field: &Field) -> f64 {
    DiffusionOperator::new(grid).cfl_dt(cfg.m, cfg.cfl_safety, field.max())
}

pub fn step_diffusion(cfg: &SolverConfig, grid: &Grid, field: &Field, dt: f64) -> Result<Field> {
    let op = DiffusionOperator::new(grid);
    let limit = op.cfl_dt(cfg.m, cfg.cfl_safety, field.max());
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::CflViolation { dt, limit });
    }
    let mut u = field.0.clone();
    op.apply(&mut u, cfg.m, dt, &mut Vec::new());
    Ok(Field(u))
}

pub fn step_reaction<R: Reaction>(cfg: &SolverConfig, r: R, field: &Field, dt: f64) -> Field {
    let stepper = ReactionStepper::new(r, cfg.eps, cfg.reaction_substep_factor, field.sup_norm());
    let mut u = field.0.clone();
    stepper.apply(&mut u, dt);
    Field(u)
}

pub fn strang_step<R: Reaction>(
    cfg: &SolverConfig,
    r: R,
    grid: &Grid,
    field: &Field,
    dt: f64,
) -> Result<Field> {
    let op = DiffusionOperator::new(grid);
    let limit = op.cfl_dt(cfg.m, cfg.cfl_safety, field.max());
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::CflViolation { dt, limit });
    }
    let stepper = ReactionStepper::new(r, cfg.eps, cfg.reaction_substep_factor, field.sup_norm());
    let mut u = field.0.clone();
    stepper.apply(&mut u, 0.5 * dt);
    op.apply(&mut u, cfg.m, dt, &mut Vec::new());
    stepper.apply(&mut u, 0.5 * dt);
    Ok(Field(u))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunStats {
    pub steps: usize,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Invariant interval `[min(z₋, min u₀), max(z₊, max u₀)]` enforced every
    /// step, with `z₋ ≤ z₊` the outer zeros of the reaction.
    pub lower_bound: f64,
    pub bound: f64,
    /// Largest departure, in a cell adjacent to ∂Ω, from the reaction-only
    /// evolution of that cell. Zero as long as diffusion has not reached ∂Ω.
    pub boundary_max: f64,
    pub min_value: f64,
    pub max_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub snapshots: Vec<Snapshot>,
    pub stats: RunStats,
}

pub const BOUND_SLACK: f64 = 1e-12;

pub fn run<R: Reaction>(cfg: &SolverConfig, r: R, grid: &Grid, u0: &Field) -> Result<RunOutput> {
    cfg.validate()?;
    if u0.len() != grid.len() {
        return Err(Error::param("u0", "field size does not match the grid"));
    }
    if !u0.is_finite() || u0.min() < 0.0 {
        return Err(Error::param("u0", "initial field must be finite and nonnegative"));
    }
    let mut times: Vec<f64> = cfg
        .snapshot_times
        .iter()
        .copied()
        .filter(|&t| t <= cfg.t_end)
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();

    let (z_lo, z_hi) = r.outer_zeros();
    let lower = z_lo.min(u0.min());
    let bound = z_hi.max(u0.max());
    if lower < 0.0 {
        return Err(Error::param(
            "reaction",
            "lower stable zero is negative; the degenerate diffusion needs u >= 0",
        ));
    }
    let op = DiffusionOperator::new(grid);
    let stepper = ReactionStepper::new(r, cfg.eps, cfg.reaction_substep_factor, bound);
    let mut edge: Vec<f64> = op.boundary.iter().map(|&k| u0.0[k]).collect();
    let mut u = u0.0.clone();
    let mut scratch = Vec::new();
    let mut t = 0.0;
    let mut stats = RunStats {
        steps: 0,
        dt_min: f64::INFINITY,
        dt_max: 0.0,
        lower_bound: lower,
        bound,
        boundary_max: 0.0,
        min_value: u0.min(),
        max_value: u0.max(),
    };
    let mut snapshots = Vec::with_capacity(times.len());
    let mut next = 0;
    while next < times.len() && times[next] <= 0.0 {
        snapshots.push(Snapshot { t: 0.0, field: u0.clone() });
        next += 1;
    }
    let mut umax = u0.max();
    while t < cfg.t_end {
        if stats.steps >= cfg.max_steps {
            return Err(Error::StepOverflow {
                max_steps: cfg.max_steps,
                tau: t,
            });
        }
        let target = if next < times.len() { times[next] } else { cfg.t_end };
        let mut dt = op.cfl_dt(cfg.m, cfg.cfl_safety, umax);
        let hits = t + dt >= target;
        if hits {
            dt = target - t;
        }
        stepper.apply(&mut u, 0.5 * dt);
        op.apply(&mut u, cfg.m, dt, &mut scratch);
        stepper.apply(&mut u, 0.5 * dt);
        stepper.apply(&mut edge, 0.5 * dt);
        stepper.apply(&mut edge, 0.5 * dt);
        t = if hits { target } else { t + dt };
        stats.steps += 1;
        if dt > 0.0 {
            stats.dt_min = stats.dt_min.min(dt);
        }
        stats.dt_max = stats.dt_max.max(dt);

        let (mut lo, mut hi, mut at) = (f64::INFINITY, f64::NEG_INFINITY, (0, 0));
        for (i, &v) in u.iter().enumerate() {
            if v < lo {
                lo = v;
                at.0 = i;
            }
            if v > hi || v.is_nan() {
                hi = v;
                at.1 = i;
            }
        }
        stats.min_value = stats.min_value.min(lo);
        stats.max_value = stats.max_value.max(hi);
        stats.boundary_max = stats.boundary_max.max(op.boundary_departure(&u, &edge));
        if lo < lower - BOUND_SLACK || !(hi <= bound + BOUND_SLACK) {
            let (cell, value) = if lo < lower - BOUND_SLACK { (at.0, lo) } else { (at.1, hi) };
            return Err(Error::BoundViolation {
                t,
                cell,
                value,
                lower,
                bound,
                snapshot: Box::new(Snapshot { t, field: Field(u) }),
            });
        }
        umax = hi;
        while hits && next < times.len() && times[next] <= t {
            snapshots.push(Snapshot { t, field: Field(u.clone()) });
            next += 1;
        }
    }
    if stats.dt_min == f64::INFINITY {
        stats.dt_min = 0.0;
    }
    Ok(RunOutput { snapshots, stats })
}
