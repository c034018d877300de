//! Post-processing of snapshots: sandwich, bands, layer width, three-band
//! thickness, optimality of the generation time, weak residual and
//! self-convergence.

use rayon::prelude::*;

use crate::envelope::{Envelope, GenerationClock, Side};
use crate::error::{Error, Result};
use crate::geometry::{Field, Grid, InitialProfile};
use crate::reaction::{BistableReaction, Reaction};
use crate::solver::Snapshot;

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyParams {
    pub gamma: f64,
    pub eta: f64,
    pub sandwich_tol: f64,
    /// Candidate ladders `k · step`, `k ≥ 1`, up to `max`.
    pub m0_step: f64,
    pub m0_max: f64,
    pub cthick_step: f64,
    pub cthick_max: f64,
    pub b_cap: f64,
}

impl Default for VerifyParams {
    fn default() -> Self {
        VerifyParams {
            gamma: 0.1,
            eta: 0.1,
            sandwich_tol: 5e-3,
            m0_step: 0.05,
            m0_max: 100.0,
            cthick_step: 0.05,
            cthick_max: 100.0,
            b_cap: 9.0,
        }
    }
}

impl VerifyParams {
    pub fn validate(&self, a: f64) -> Result<()> {
        let lim = a.min(1.0 - a);
        if !(self.gamma > 0.0 && self.gamma < lim) {
            return Err(Error::param("verify.gamma", format!("must lie in (0, {lim})")));
        }
        if !(self.eta > 0.0 && self.eta < lim) {
            return Err(Error::param("verify.eta", format!("must lie in (0, {lim})")));
        }
        if !(self.sandwich_tol >= 0.0) {
            return Err(Error::param("verify.sandwich_tol", "must be nonnegative"));
        }
        for (name, step, max) in [
            ("verify.m0_step", self.m0_step, self.m0_max),
            ("verify.cthick_step", self.cthick_step, self.cthick_max),
        ] {
            if !(step > 0.0 && max >= step) {
                return Err(Error::param(name, "ladder step must be positive and below the maximum"));
            }
        }
        if !(self.b_cap > 0.0) {
            return Err(Error::param("verify.b_cap", "must be positive"));
        }
        Ok(())
    }
}

/// Smallest `k · step` (k ≥ 1) strictly above `required`, if it is at most `max`.
pub fn ladder_round(required: f64, step: f64, max: f64) -> Option<f64> {
    let k = ((required / step).floor() + 1.0).max(1.0);
    let v = k * step;
    // a rung equal to `required` up to rounding does not count as above it
    let v = if v <= required + 1e-9 * step { v + step } else { v };
    (v <= max * (1.0 + 1e-12)).then_some(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichReport {
    pub snapshots_checked: usize,
    pub cells_checked: usize,
    pub violations: usize,
    /// `min(u - w⁻, w⁺ - u)` over all checked cells; negative means crossed.
    pub worst_margin: f64,
    pub worst_t: f64,
    pub worst_cell: usize,
    pub tol: f64,
}

/// Checks `w⁻ - tol ≤ u ≤ w⁺ + tol` at every cell of every snapshot with `t ≤ tᵉ`.
pub fn sandwich_check<R: BistableReaction + Clone>(
    snapshots: &[Snapshot],
    radii: &[f64],
    env: &Envelope<R>,
    tol: f64,
) -> Result<SandwichReport> {
    let t_eps = env.clock.t_eps;
    let mut rep = SandwichReport {
        snapshots_checked: 0,
        cells_checked: 0,
        violations: 0,
        worst_margin: f64::INFINITY,
        worst_t: 0.0,
        worst_cell: 0,
        tol,
    };
    for s in snapshots.iter().filter(|s| s.t <= t_eps * (1.0 + 1e-12)) {
        let t = s.t.min(t_eps);
        let margins: Vec<f64> = radii
            .par_iter()
            .zip(s.field.0.par_iter())
            .map(|(&r, &u)| {
                let lo = env.eval_w(r, t, Side::Minus)?;
                let hi = env.eval_w(r, t, Side::Plus)?;
                Ok((u - lo).min(hi - u))
            })
            .collect::<Result<_>>()?;
        rep.snapshots_checked += 1;
        for (i, &m) in margins.iter().enumerate() {
            rep.cells_checked += 1;
            if m < -tol {
                rep.violations += 1;
            }
            if m < rep.worst_margin {
                rep.worst_margin = m;
                rep.worst_t = s.t;
                rep.worst_cell = i;
            }
        }
    }
    if rep.worst_margin == f64::INFINITY {
        rep.worst_margin = 0.0;
    }
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandReport {
    pub gamma: f64,
    /// Cells outside `[0, 1 + γ]`.
    pub range_violations: usize,
    pub u_min: f64,
    pub u_max: f64,
    /// Infimum of admissible `M0`; zero when every cell already obeys the bands.
    pub m0_required: f64,
    /// Ladder value above `m0_required`, `None` when the ladder is exhausted.
    pub m0: Option<f64>,
}

impl BandReport {
    pub fn passed(&self) -> bool {
        self.range_violations == 0 && self.m0.is_some()
    }
}

fn m0_required(u: &[f64], u0: &[f64], a: f64, eps: f64, gamma: f64) -> f64 {
    u.iter()
        .zip(u0)
        .filter_map(|(&v, &v0)| {
            if v0 > a && v < 1.0 - gamma {
                Some((v0 - a) / eps)
            } else if v0 < a && v > gamma {
                Some((a - v0) / eps)
            } else if v0 == a && (v < 1.0 - gamma || v > gamma) {
                Some(0.0)
            } else {
                None
            }
        })
        .fold(0.0, f64::max)
}

/// The generation bands at a single time: `0 ≤ u ≤ 1 + γ`, and
/// `u ≥ 1 - γ` where `u₀ ≥ a + M0 ε`, `u ≤ γ` where `u₀ ≤ a - M0 ε`.
pub fn classify_bands(u: &Field, u0: &Field, a: f64, eps: f64, vp: &VerifyParams) -> BandReport {
    let gamma = vp.gamma;
    let range_violations = u
        .0
        .iter()
        .filter(|&&v| !(v >= 0.0 && v <= 1.0 + gamma))
        .count();
    let req = m0_required(&u.0, &u0.0, a, eps, gamma);
    BandReport {
        gamma,
        range_violations,
        u_min: u.min(),
        u_max: u.max(),
        m0_required: req,
        m0: ladder_round(req, vp.m0_step, vp.m0_max),
    }
}

pub fn bands_hold(u: &Field, u0: &Field, a: f64, eps: f64, gamma: f64, m0: f64) -> bool {
    u.0.iter().all(|&v| v >= 0.0 && v <= 1.0 + gamma) && m0_required(&u.0, &u0.0, a, eps, gamma) < m0
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThreeBandFit {
    pub eta: f64,
    /// Cells outside `[0, 1 + η]`.
    pub range_violations: usize,
    pub c_required: f64,
    pub c: Option<f64>,
}

fn cthick_required(u: &[f64], dist: &[f64], eps: f64, eta: f64) -> f64 {
    u.iter()
        .zip(dist)
        .filter_map(|(&v, &d)| {
            let bad = if d < 0.0 { v < 1.0 - eta } else { v > eta };
            bad.then_some(d.abs() / eps)
        })
        .fold(0.0, f64::max)
}

/// Fits the thickness constant `𝓒`: outside the `𝓒ε`-neighbourhood of Γ₀
/// the solution is within `η` of 1 (inside) or 0 (outside). `dist` is the
/// signed distance of each cell to Γ₀, positive outside.
pub fn fit_three_band(u: &Field, dist: &[f64], eps: f64, vp: &VerifyParams) -> ThreeBandFit {
    let eta = vp.eta;
    let range_violations = u.0.iter().filter(|&&v| !(v >= 0.0 && v <= 1.0 + eta)).count();
    let req = cthick_required(&u.0, dist, eps, eta);
    ThreeBandFit {
        eta,
        range_violations,
        c_required: req,
        c: ladder_round(req, vp.cthick_step, vp.cthick_max),
    }
}

pub fn three_band_hold(u: &Field, dist: &[f64], eps: f64, eta: f64, c: f64) -> bool {
    u.0.iter().all(|&v| v >= 0.0 && v <= 1.0 + eta) && cthick_required(&u.0, dist, eps, eta) < c
}

/// Outer minus inner crossing radius of the levels `η` and `1 - η` along a
/// sampled profile that falls from near 1 to near 0. Zero when no sample
/// lies strictly between the two levels.
pub fn measure_width_profile(r: &[f64], u: &[f64], eta: f64) -> Result<f64> {
    let (hi, lo) = (1.0 - eta, eta);
    let start = u
        .iter()
        .position(|&v| v >= hi)
        .ok_or_else(|| Error::LayerNotFound(format!("profile never reaches 1 - η = {hi}")))?;
    let down = |from: usize, level: f64| -> Option<(usize, f64)> {
        (from..u.len() - 1).find(|&i| u[i] >= level && u[i + 1] < level).map(|i| {
            let s = (u[i] - level) / (u[i] - u[i + 1]);
            (i, r[i] + s * (r[i + 1] - r[i]))
        })
    };
    let (i_hi, r_hi) = down(start, hi)
        .ok_or_else(|| Error::LayerNotFound(format!("profile never falls below 1 - η = {hi}")))?;
    let (i_lo, r_lo) = down(i_hi, lo)
        .ok_or_else(|| Error::LayerNotFound(format!("profile never falls below η = {lo}")))?;
    if !u[i_hi + 1..=i_lo].iter().any(|&v| v > lo && v < hi) {
        return Ok(0.0);
    }
    Ok(r_lo - r_hi)
}

/// Cell-centred field value at a radius from the profile centre. Radial
/// grids interpolate linearly; the box interpolates bilinearly along the
/// ray at angle `theta`.
pub fn sample_at(grid: &Grid, u: &[f64], profile: &InitialProfile, radius: f64, theta: f64) -> f64 {
    match grid {
        Grid::Radial(g) => {
            let c = &g.centers;
            if radius <= c[0] {
                return u[0];
            }
            if radius >= c[c.len() - 1] {
                return u[c.len() - 1];
            }
            let h = g.spacing();
            let i = (((radius - c[0]) / h).floor() as usize).min(c.len() - 2);
            let s = (radius - c[i]) / h;
            u[i] + s * (u[i + 1] - u[i])
        }
        Grid::Cartesian(g) => {
            let x = profile.center[0] + radius * theta.cos();
            let y = profile.center[1] + radius * theta.sin();
            let fx = (x / g.h - 0.5).clamp(0.0, (g.nx - 1) as f64);
            let fy = (y / g.h - 0.5).clamp(0.0, (g.ny - 1) as f64);
            let i = (fx.floor() as usize).min(g.nx - 2);
            let j = (fy.floor() as usize).min(g.ny - 2);
            let (sx, sy) = (fx - i as f64, fy - j as f64);
            let v = |i: usize, j: usize| u[g.index(i, j)];
            (1.0 - sx) * (1.0 - sy) * v(i, j)
                + sx * (1.0 - sy) * v(i + 1, j)
                + (1.0 - sx) * sy * v(i, j + 1)
                + sx * sy * v(i + 1, j + 1)
        }
    }
}

pub const WIDTH_RAYS: usize = 64;

/// Layer width at one snapshot. Radial grids use the cell profile; the box
/// averages the width over `WIDTH_RAYS` rays from the profile centre.
pub fn measure_width(grid: &Grid, u: &Field, profile: &InitialProfile, eta: f64) -> Result<f64> {
    match grid {
        Grid::Radial(g) => measure_width_profile(&g.centers, &u.0, eta),
        Grid::Cartesian(g) => {
            let reach = grid.inner_radius(profile);
            let n = (2.0 * reach / g.h).floor() as usize;
            let r: Vec<f64> = (0..=n).map(|k| k as f64 * reach / n as f64).collect();
            let mut total = 0.0;
            for k in 0..WIDTH_RAYS {
                let theta = 2.0 * std::f64::consts::PI * k as f64 / WIDTH_RAYS as f64;
                let prof: Vec<f64> = r.iter().map(|&x| sample_at(grid, &u.0, profile, x, theta)).collect();
                total += measure_width_profile(&r, &prof, eta)?;
            }
            Ok(total / WIDTH_RAYS as f64)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalityReport {
    /// Earliest snapshot time from which the bands (with `M0`) and the
    /// three-band statement (with `𝓒`) hold at every snapshot up to `tᵉ`.
    pub t_min: Option<f64>,
    pub b_fit: Option<f64>,
    pub b_cap: f64,
    pub b_within_cap: bool,
    /// Probe at signed distance `-𝓒ε` from Γ₀ at `tᵉ(probe_b)`.
    pub probe_b: f64,
    pub probe_t: Option<f64>,
    pub probe_value: Option<f64>,
    pub probe_below: Option<bool>,
}

pub struct OptimalityInputs<'a> {
    pub grid: &'a Grid,
    pub profile: &'a InitialProfile,
    pub u0: &'a Field,
    pub dist: &'a [f64],
    pub a: f64,
    pub r0: f64,
    pub clock: GenerationClock,
    pub m0: f64,
    pub cthick: f64,
}

pub const PROBE_B: f64 = 3.0;

pub fn optimality_scan(snapshots: &[Snapshot], inp: &OptimalityInputs, vp: &VerifyParams) -> OptimalityReport {
    let eps = inp.clock.eps;
    let t_eps = inp.clock.t_eps;
    let holds = |s: &Snapshot| {
        bands_hold(&s.field, inp.u0, inp.a, eps, vp.gamma, inp.m0)
            && three_band_hold(&s.field, inp.dist, eps, vp.eta, inp.cthick)
    };
    let before: Vec<&Snapshot> = snapshots.iter().filter(|s| s.t <= t_eps * (1.0 + 1e-12)).collect();
    let mut t_min = None;
    for s in before.iter().rev() {
        if holds(s) {
            t_min = Some(s.t);
        } else {
            break;
        }
    }
    let b_fit = t_min.map(|t| inp.clock.b_of(t));
    let t_probe = inp.clock.t_eps_b(PROBE_B);
    let probe = snapshots
        .iter()
        .find(|s| (s.t - t_probe).abs() <= 1e-12 * t_eps.max(1e-300))
        .map(|s| sample_at(inp.grid, &s.field.0, inp.profile, inp.r0 - inp.cthick * eps, 0.0));
    OptimalityReport {
        t_min,
        b_fit,
        b_cap: vp.b_cap,
        b_within_cap: b_fit.is_some_and(|b| (0.0..=vp.b_cap).contains(&b)),
        probe_b: PROBE_B,
        probe_t: probe.map(|_| t_probe),
        probe_value: probe,
        probe_below: probe.map(|v| v < 1.0 - vp.eta),
    }
}

/// Smooth test functions with zero normal derivative on ∂Ω.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestFunction {
    One,
    /// `r² - r⁴/(2R²)`.
    RadialQuadratic { radius: f64, dim: usize },
    /// `r⁴ - 2r⁶/(3R²)`.
    RadialQuartic { radius: f64, dim: usize },
    /// `cos(kx π x/Lx) cos(ky π y/Ly)`.
    CosProduct { kx: u32, ky: u32, lx: f64, ly: f64 },
}

impl TestFunction {
    pub fn name(&self) -> String {
        match self {
            TestFunction::One => "one".into(),
            TestFunction::RadialQuadratic { .. } => "r2".into(),
            TestFunction::RadialQuartic { .. } => "r4".into(),
            TestFunction::CosProduct { kx, ky, .. } => format!("cos{kx}{ky}"),
        }
    }

    /// `(φ, Δφ)` at a cell centre: radius for radial grids, `(x, y)` for the box.
    pub fn eval(&self, p: [f64; 2]) -> (f64, f64) {
        use std::f64::consts::PI;
        match *self {
            TestFunction::One => (1.0, 0.0),
            TestFunction::RadialQuadratic { radius, dim } => {
                let (r2, big) = (p[0] * p[0], radius * radius);
                let n = dim as f64;
                (r2 - r2 * r2 / (2.0 * big), 2.0 * n - (2.0 * n + 4.0) * r2 / big)
            }
            TestFunction::RadialQuartic { radius, dim } => {
                let (r2, big) = (p[0] * p[0], radius * radius);
                let n = dim as f64;
                (
                    r2 * r2 - 2.0 * r2 * r2 * r2 / (3.0 * big),
                    (4.0 * n + 8.0) * r2 - (4.0 * n + 16.0) * r2 * r2 / big,
                )
            }
            TestFunction::CosProduct { kx, ky, lx, ly } => {
                let (ax, ay) = (kx as f64 * PI / lx, ky as f64 * PI / ly);
                let v = (ax * p[0]).cos() * (ay * p[1]).cos();
                (v, -(ax * ax + ay * ay) * v)
            }
        }
    }
}

pub fn default_test_functions(grid: &Grid) -> Vec<TestFunction> {
    match grid {
        Grid::Radial(g) => vec![
            TestFunction::One,
            TestFunction::RadialQuadratic { radius: g.radius, dim: g.dim },
            TestFunction::RadialQuartic { radius: g.radius, dim: g.dim },
        ],
        Grid::Cartesian(g) => vec![
            TestFunction::One,
            TestFunction::CosProduct { kx: 1, ky: 0, lx: g.lx, ly: g.ly },
            TestFunction::CosProduct { kx: 1, ky: 1, lx: g.lx, ly: g.ly },
        ],
    }
}

fn cell_points(grid: &Grid) -> Vec<[f64; 2]> {
    match grid {
        Grid::Radial(g) => g.centers.iter().map(|&r| [r, 0.0]).collect(),
        Grid::Cartesian(g) => (0..g.nx * g.ny).map(|k| g.center(k)).collect(),
    }
}

/// Absolute residual of the weak identity
/// `∫u(T)φ - ∫u₀φ = ∫₀ᵀ∫ (u^m Δφ + ε⁻² f(u) φ)`
/// with midpoint quadrature in space and the trapezoid rule over the snapshots.
pub fn weak_residual<R: Reaction>(
    snapshots: &[Snapshot],
    grid: &Grid,
    reaction: &R,
    eps: f64,
    m: u32,
    phi: &TestFunction,
) -> Result<f64> {
    if snapshots.len() < 2 {
        return Err(Error::EmptySample("weak residual needs at least two snapshots".into()));
    }
    let pts = cell_points(grid);
    let vol = grid.volumes();
    let weights: Vec<(f64, f64)> = pts.iter().map(|&p| phi.eval(p)).collect();
    let inv_eps2 = 1.0 / (eps * eps);
    let pair = |s: &Snapshot| {
        let mut mass = 0.0;
        let mut rhs = 0.0;
        for (i, &u) in s.field.0.iter().enumerate() {
            let (f, lap) = weights[i];
            mass += vol[i] * f * u;
            rhs += vol[i] * (u.powi(m as i32) * lap + inv_eps2 * reaction.f(u) * f);
        }
        (mass, rhs)
    };
    let vals: Vec<(f64, f64)> = snapshots.iter().map(pair).collect();
    let mut integral = 0.0;
    for k in 1..snapshots.len() {
        integral += 0.5 * (snapshots[k].t - snapshots[k - 1].t) * (vals[k].1 + vals[k - 1].1);
    }
    Ok((vals[vals.len() - 1].0 - vals[0].0 - integral).abs())
}

/// L¹ distance between a coarse radial solution and a finer one averaged
/// onto the coarse cells. The fine cell count must be a multiple of the coarse one.
pub fn l1_against_fine(coarse: &Grid, uc: &[f64], fine: &Grid, uf: &[f64]) -> Result<f64> {
    let (nc, nf) = (coarse.len(), fine.len());
    if nf % nc != 0 || coarse.dim() != fine.dim() {
        return Err(Error::param("convergence", "fine grid must refine the coarse grid"));
    }
    let k = nf / nc;
    match (coarse, fine) {
        (Grid::Radial(_), Grid::Radial(_)) => Ok((0..nc)
            .map(|i| {
                let (mut mass, mut vol) = (0.0, 0.0);
                for j in i * k..(i + 1) * k {
                    mass += fine.volume(j) * uf[j];
                    vol += fine.volume(j);
                }
                coarse.volume(i) * (uc[i] - mass / vol).abs()
            })
            .sum()),
        (Grid::Cartesian(gc), Grid::Cartesian(gf)) => {
            let s = gf.nx / gc.nx;
            if s * s != k || gf.ny / gc.ny != s {
                return Err(Error::param("convergence", "box refinement must be uniform"));
            }
            Ok((0..nc)
                .map(|c| {
                    let (ic, jc) = (c % gc.nx, c / gc.nx);
                    let mut sum = 0.0;
                    for dj in 0..s {
                        for di in 0..s {
                            sum += uf[gf.index(ic * s + di, jc * s + dj)];
                        }
                    }
                    coarse.volume(c) * (uc[c] - sum / (s * s) as f64).abs()
                })
                .sum())
        }
        _ => Err(Error::param("convergence", "grids must have the same kind")),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub resolutions: Vec<usize>,
    pub reference: usize,
    pub errors: Vec<f64>,
    /// `log2(e_k / e_{k+1})` for successive resolutions that double.
    pub orders: Vec<f64>,
    /// False when some error fails to decrease under refinement.
    pub monotone: bool,
}

pub fn convergence_orders(resolutions: &[usize], reference: usize, errors: &[f64]) -> ConvergenceReport {
    let orders = errors
        .windows(2)
        .zip(resolutions.windows(2))
        .map(|(e, n)| (e[0] / e[1]).ln() / (n[1] as f64 / n[0] as f64).ln())
        .collect();
    ConvergenceReport {
        resolutions: resolutions.to_vec(),
        reference,
        errors: errors.to_vec(),
        orders,
        monotone: errors.windows(2).all(|e| e[1] < e[0]),
    }
}

/// Least-squares fit `w = 𝓒 ε` through the origin with the centred R².
#[derive(Debug, Clone, PartialEq)]
pub struct WidthFit {
    pub slope: f64,
    pub r_squared: f64,
}

pub fn fit_width(eps: &[f64], width: &[f64]) -> Option<WidthFit> {
    if eps.len() < 2 || eps.len() != width.len() {
        return None;
    }
    let sxx: f64 = eps.iter().map(|e| e * e).sum();
    let sxy: f64 = eps.iter().zip(width).map(|(e, w)| e * w).sum();
    let slope = sxy / sxx;
    let mean = width.iter().sum::<f64>() / width.len() as f64;
    let ss_res: f64 = eps.iter().zip(width).map(|(e, w)| (w - slope * e).powi(2)).sum();
    let ss_tot: f64 = width.iter().map(|w| (w - mean).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        f64::NEG_INFINITY
    };
    Some(WidthFit { slope, r_squared })
}
