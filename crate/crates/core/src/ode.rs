//! Flow of the bistable ODE `Y_τ = f(Y)`, `Y(0) = ξ`, with its first and
//! second sensitivities in `ξ`.
//!
//! The sensitivities solve the variational equations
//!
//! ```text
//! (Y_ξ)'  = f'(Y) Y_ξ                      Y_ξ(0)  = 1
//! (Y_ξξ)' = f''(Y) Y_ξ² + f'(Y) Y_ξξ       Y_ξξ(0) = 0
//! ```
//!
//! and are integrated jointly with `Y` by an embedded Dormand–Prince 5(4)
//! pair. Everything downstream (envelopes, solver checks) uses this kernel as
//! its reference, so its tolerance is kept well below every other error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::reaction::{BistableReaction, Reaction};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    /// Largest accepted step in τ.
    pub dtau_max: f64,
    /// Local error tolerance, used both as absolute and relative tolerance.
    pub tol: f64,
    /// Half-width of the admissible ξ-range, `‖u₀‖∞ + 1`.
    pub c0: f64,
    pub max_steps: usize,
}

impl KernelConfig {
    pub fn new(c0: f64) -> Result<Self> {
        let cfg = KernelConfig {
            c0,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Kernel range for an initial datum with the given sup norm.
    pub fn for_sup_norm(u0_sup: f64) -> Result<Self> {
        Self::new(u0_sup + 1.0)
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dtau_max > 0.0) {
            return Err(Error::param("dtau_max", "must be positive"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::param("tol", "must be positive"));
        }
        if !(self.c0 > 1.0) {
            return Err(Error::param("c0", "must exceed 1"));
        }
        Ok(())
    }
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            dtau_max: 0.5,
            tol: 1e-10,
            c0: 1.8,
            max_steps: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelResult {
    pub y: f64,
    pub y_xi: f64,
    pub y_xixi: f64,
    pub tau: f64,
    pub xi: f64,
}

impl KernelResult {
    /// `|Y_ξξ / Y_ξ|`.
    pub fn curvature_ratio(&self) -> f64 {
        (self.y_xixi / self.y_xi).abs()
    }
}

// Dormand–Prince 5(4) tableau; the nodes are unused since the RHS is autonomous.
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [
    19372.0 / 6561.0,
    -25360.0 / 2187.0,
    64448.0 / 6561.0,
    -212.0 / 729.0,
];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const B: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
// B - B*, the embedded error weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn axpy<const D: usize>(y: &[f64; D], h: f64, coeffs: &[f64], ks: &[[f64; D]]) -> [f64; D] {
    let mut out = *y;
    for (c, k) in coeffs.iter().zip(ks) {
        if *c != 0.0 {
            for i in 0..D {
                out[i] += h * c * k[i];
            }
        }
    }
    out
}

/// Adaptive integration of an autonomous system through an ascending list of
/// output times. Calls `emit(k, state)` when `targets[k]` is reached exactly.
fn integrate<const D: usize>(
    rhs: impl Fn(&[f64; D]) -> [f64; D],
    y0: [f64; D],
    targets: &[f64],
    cfg: &KernelConfig,
    mut emit: impl FnMut(usize, &[f64; D]),
) -> Result<()> {
    let mut y = y0;
    let mut t = 0.0;
    let mut h = cfg.dtau_max.min(0.05);
    let mut k1 = rhs(&y);
    let mut steps = 0usize;

    for (idx, &target) in targets.iter().enumerate() {
        if !(target >= t) {
            return Err(Error::param("tau", "output times must be ascending and >= 0"));
        }
        while t < target {
            steps += 1;
            if steps > cfg.max_steps {
                return Err(Error::StepOverflow {
                    max_steps: cfg.max_steps,
                    tau: t,
                });
            }
            let remaining = target - t;
            let last = h >= remaining;
            let hs = if last { remaining } else { h };

            let k2 = rhs(&axpy(&y, hs, &A2, &[k1]));
            let k3 = rhs(&axpy(&y, hs, &A3, &[k1, k2]));
            let k4 = rhs(&axpy(&y, hs, &A4, &[k1, k2, k3]));
            let k5 = rhs(&axpy(&y, hs, &A5, &[k1, k2, k3, k4]));
            let k6 = rhs(&axpy(&y, hs, &A6, &[k1, k2, k3, k4, k5]));
            let y_new = axpy(&y, hs, &B[..6], &[k1, k2, k3, k4, k5, k6]);
            let k7 = rhs(&y_new);

            let ks = [k1, k2, k3, k4, k5, k6, k7];
            let mut err = 0.0f64;
            for i in 0..D {
                let mut e = 0.0;
                for (w, k) in E.iter().zip(&ks) {
                    e += w * k[i];
                }
                let scale = cfg.tol * (1.0 + y[i].abs().max(y_new[i].abs()));
                err = err.max((hs * e).abs() / scale);
            }
            if !err.is_finite() {
                h *= 0.25;
                continue;
            }

            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            if err <= 1.0 {
                t = if last { target } else { t + hs };
                y = y_new;
                k1 = k7;
                // a clipped final step says nothing about the natural step size
                if !last || factor < 1.0 {
                    h = (hs * factor).min(cfg.dtau_max);
                }
            } else {
                h = hs * factor.min(1.0);
            }
        }
        emit(idx, &y);
    }
    Ok(())
}

fn check_inputs(cfg: &KernelConfig, tau: f64, xi: f64, checked: bool) -> Result<()> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::param("tau", format!("must be finite and >= 0, got {tau}")));
    }
    if !xi.is_finite() {
        return Err(Error::param("xi", "must be finite"));
    }
    if checked && !(xi.abs() < cfg.c0) {
        return Err(Error::XiOutOfRange { xi, c0: cfg.c0 });
    }
    Ok(())
}

fn joint_rhs<R: Reaction + ?Sized>(r: &R) -> impl Fn(&[f64; 3]) -> [f64; 3] + '_ {
    move |s: &[f64; 3]| {
        let (y, yx, yxx) = (s[0], s[1], s[2]);
        let d1 = r.df(y);
        [r.f(y), d1 * yx, r.d2f(y) * yx * yx + d1 * yxx]
    }
}

/// `Y(τ, ξ)` with `Y_ξ` and `Y_ξξ`. Requires `ξ ∈ (-C0, C0)`.
pub fn flow<R: Reaction + ?Sized>(
    r: &R,
    cfg: &KernelConfig,
    tau: f64,
    xi: f64,
) -> Result<KernelResult> {
    check_inputs(cfg, tau, xi, true)?;
    flow_joint(r, cfg, tau, xi)
}

/// Same as [`flow`] without the ξ-range restriction. The forward flow of a
/// bistable cubic is global for every finite ξ; the range only matters for
/// the quantitative lemmas.
pub fn flow_unbounded<R: Reaction + ?Sized>(
    r: &R,
    cfg: &KernelConfig,
    tau: f64,
    xi: f64,
) -> Result<KernelResult> {
    check_inputs(cfg, tau, xi, false)?;
    flow_joint(r, cfg, tau, xi)
}

fn flow_joint<R: Reaction + ?Sized>(
    r: &R,
    cfg: &KernelConfig,
    tau: f64,
    xi: f64,
) -> Result<KernelResult> {
    let mut out = [xi, 1.0, 0.0];
    integrate(joint_rhs(r), [xi, 1.0, 0.0], &[tau], cfg, |_, s| out = *s)?;
    Ok(KernelResult {
        y: out[0],
        y_xi: out[1],
        y_xixi: out[2],
        tau,
        xi,
    })
}

/// `Y(τ, ξ)` alone, without sensitivities and without the ξ-range check.
pub fn flow_value<R: Reaction + ?Sized>(
    r: &R,
    cfg: &KernelConfig,
    tau: f64,
    xi: f64,
) -> Result<f64> {
    check_inputs(cfg, tau, xi, false)?;
    let mut out = xi;
    integrate(|s: &[f64; 1]| [r.f(s[0])], [xi], &[tau], cfg, |_, s| {
        out = s[0]
    })?;
    Ok(out)
}

/// One trajectory sampled at ascending times.
pub fn flow_trajectory<R: Reaction + ?Sized>(
    r: &R,
    cfg: &KernelConfig,
    xi: f64,
    taus: &[f64],
) -> Result<Vec<KernelResult>> {
    check_inputs(cfg, taus.last().copied().unwrap_or(0.0), xi, true)?;
    let mut out = Vec::with_capacity(taus.len());
    integrate(joint_rhs(r), [xi, 1.0, 0.0], taus, cfg, |k, s| {
        out.push(KernelResult {
            y: s[0],
            y_xi: s[1],
            y_xixi: s[2],
            tau: taus[k],
            xi,
        })
    })?;
    Ok(out)
}

/// `|Y_ξξ / Y_ξ|` at `(τ, ξ)`.
pub fn curvature_ratio<R: Reaction + ?Sized>(
    r: &R,
    cfg: &KernelConfig,
    tau: f64,
    xi: f64,
) -> Result<f64> {
    Ok(flow(r, cfg, tau, xi)?.curvature_ratio())
}

/// Sampled constant of the bound `|Y_ξξ / Y_ξ| ≤ C (e^{μτ} - 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelBoundFit {
    pub c: f64,
    /// Where the maximum was attained.
    pub argmax_tau: f64,
    pub argmax_xi: f64,
    pub samples: usize,
}

/// Maximum of `|Y_ξξ/Y_ξ| / (e^{μτ} - 1)` over random `(τ, ξ)` with
/// `ξ ∈ (-C0, C0)` uniform and `τ ∈ [τ_max·1e-6, τ_max]` log-uniform.
///
/// The supremum sits at `τ → 0`, where the quotient tends to `|f''(ξ)|/μ`;
/// log-uniform τ puts enough samples there for the maximum to settle.
pub fn fit_curvature_bound<R: BistableReaction + ?Sized>(
    r: &R,
    cfg: &KernelConfig,
    tau_max: f64,
    samples: usize,
    seed: u64,
) -> Result<KernelBoundFit> {
    if samples == 0 {
        return Err(Error::EmptySample("curvature bound needs samples".into()));
    }
    if !(tau_max > 0.0) {
        return Err(Error::param("tau_max", "must be positive"));
    }
    let mu = r.mu();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lo = (tau_max * 1e-6).ln();
    let hi = tau_max.ln();
    let points: Vec<(f64, f64)> = (0..samples)
        .map(|_| {
            let tau = rng.gen_range(lo..hi).exp();
            let xi = rng.gen_range(-cfg.c0..cfg.c0);
            (tau, xi)
        })
        .collect();
    let values = points
        .par_iter()
        .map(|&(tau, xi)| {
            let k = flow(r, cfg, tau, xi)?;
            Ok((k.curvature_ratio() / (mu * tau).exp_m1(), tau, xi))
        })
        .collect::<Result<Vec<_>>>()?;
    let (c, argmax_tau, argmax_xi) = values
        .into_iter()
        .fold((0.0, 0.0, 0.0), |acc, v| if v.0 > acc.0 { v } else { acc });
    Ok(KernelBoundFit {
        c,
        argmax_tau,
        argmax_xi,
        samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AfterTimeViolation {
    /// `Y` left `[-γ, 1 + γ]`.
    Range { xi: f64, y: f64 },
    /// `ξ ≥ a + C_Y ε` but `Y < 1 - γ`.
    Upper { xi: f64, y: f64 },
    /// `ξ ≤ a - C_Y ε` but `Y > γ`.
    Lower { xi: f64, y: f64 },
}

/// `Y(μ⁻¹|ln ε|, ξ)` on a uniform ξ-sample of `(-C0, C0)`.
#[derive(Debug, Clone)]
pub struct AfterTimeSweep {
    pub eps: f64,
    pub a: f64,
    pub tau: f64,
    /// `(ξ, Y)` pairs in ascending ξ.
    pub samples: Vec<(f64, f64)>,
}

impl AfterTimeSweep {
    pub fn new<R: BistableReaction + ?Sized>(
        r: &R,
        cfg: &KernelConfig,
        eps: f64,
        n: usize,
    ) -> Result<Self> {
        if !(eps > 0.0 && eps < 0.5) {
            return Err(Error::param("eps", "must lie in (0, 0.5)"));
        }
        if n == 0 {
            return Err(Error::EmptySample("after-time sweep needs samples".into()));
        }
        let tau = eps.ln().abs() / r.mu();
        let a = r.unstable_zero();
        let mut xis: Vec<f64> = (0..n)
            .map(|k| -cfg.c0 + 2.0 * cfg.c0 * (k as f64 + 0.5) / n as f64)
            .collect();
        xis.push(a);
        xis.sort_by(f64::total_cmp);
        let samples = xis
            .par_iter()
            .map(|&xi| Ok((xi, flow(r, cfg, tau, xi)?.y)))
            .collect::<Result<Vec<_>>>()?;
        Ok(AfterTimeSweep {
            eps,
            a,
            tau,
            samples,
        })
    }

    pub fn violations(&self, gamma: f64, c_y: f64) -> Vec<AfterTimeViolation> {
        let mut out = Vec::new();
        let band = c_y * self.eps;
        for &(xi, y) in &self.samples {
            if !(y >= -gamma && y <= 1.0 + gamma) {
                out.push(AfterTimeViolation::Range { xi, y });
            }
            if xi >= self.a + band && y < 1.0 - gamma {
                out.push(AfterTimeViolation::Upper { xi, y });
            }
            if xi <= self.a - band && y > gamma {
                out.push(AfterTimeViolation::Lower { xi, y });
            }
        }
        out
    }

    /// Smallest `C_Y` (to relative precision `1e-4`) for which the band
    /// statements hold, by bisection. `None` when the range statement fails
    /// or no `C_Y` below `C0/ε` works.
    pub fn find_c_y(&self, gamma: f64) -> Option<f64> {
        let ok = |c: f64| self.violations(gamma, c).is_empty();
        let mut hi = 1.0;
        while !ok(hi) {
            hi *= 2.0;
            if hi * self.eps > 4.0 {
                return None;
            }
        }
        let mut lo = 0.0;
        while hi - lo > 1e-4 * hi {
            let mid = 0.5 * (lo + hi);
            if ok(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(hi)
    }
}

/// Checks the three after-time statements at `τ = μ⁻¹|ln ε|` on `n` samples.
pub fn after_time_check<R: BistableReaction + ?Sized>(
    r: &R,
    cfg: &KernelConfig,
    eps: f64,
    gamma: f64,
    c_y: f64,
    n: usize,
) -> Result<Vec<AfterTimeViolation>> {
    let a = r.unstable_zero();
    if !(gamma > 0.0 && gamma < a.min(1.0 - a)) {
        return Err(Error::param("gamma", "must lie in (0, min(a, 1-a))"));
    }
    if !(c_y > 0.0) {
        return Err(Error::param("c_y", "must be positive"));
    }
    Ok(AfterTimeSweep::new(r, cfg, eps, n)?.violations(gamma, c_y))
}

/// Envelope constants of `C1 e^{μτ}(ξ-a) ≤ Y(τ,ξ) - a ≤ C2 e^{μτ}(ξ-a)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearizationFit {
    pub c1: f64,
    pub c2: f64,
    pub eta: f64,
    pub samples: usize,
}

/// Extremes of `(Y - a) / (e^{μτ}(ξ - a))` over `n` values of ξ in `(a, 1-η)`
/// and τ on a grid of spacing `20/n` (clipped to `[0.001, 0.05]`), for as
/// long as `Y` stays in `(a, 1-η)`.
pub fn fit_linearization<R: BistableReaction + ?Sized>(
    r: &R,
    cfg: &KernelConfig,
    eta: f64,
    n: usize,
) -> Result<LinearizationFit> {
    let a = r.unstable_zero();
    let mu = r.mu();
    if !(eta > 0.0 && eta < a.min(1.0 - a)) {
        return Err(Error::param("eta", "must lie in (0, min(a, 1-a))"));
    }
    let top = 1.0 - eta;
    if n == 0 || !(top > a) {
        return Err(Error::EmptySample(format!(
            "no admissible ξ in ({a}, {top}) with {n} samples"
        )));
    }
    let dtau = (20.0 / n as f64).clamp(1e-3, 0.05);
    let xis: Vec<f64> = (0..n)
        .map(|k| a + (top - a) * (k as f64 + 0.5) / n as f64)
        .collect();

    let extremes = xis
        .par_iter()
        .map(|&xi| -> Result<(f64, f64, usize)> {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            let mut count = 0;
            let mut y = xi;
            let mut tau = 0.0;
            // walk the trajectory in chunks of output times until it exits
            'outer: loop {
                let taus: Vec<f64> = (1..=256).map(|j| tau + dtau * j as f64).collect();
                let traj = flow_value_trajectory(r, cfg, y, &taus, tau)?;
                for (t, yt) in traj {
                    if !(yt > a && yt < top) {
                        break 'outer;
                    }
                    let ratio = (yt - a) / ((mu * t).exp() * (xi - a));
                    lo = lo.min(ratio);
                    hi = hi.max(ratio);
                    count += 1;
                    tau = t;
                    y = yt;
                }
            }
            // τ = 0 always contributes ratio 1
            Ok((lo.min(1.0), hi.max(1.0), count + 1))
        })
        .collect::<Result<Vec<_>>>()?;

    let c1 = extremes.iter().map(|e| e.0).fold(f64::INFINITY, f64::min);
    let c2 = extremes.iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max);
    let samples = extremes.iter().map(|e| e.2).sum();
    Ok(LinearizationFit {
        c1,
        c2,
        eta,
        samples,
    })
}

/// Y-only trajectory restarted from `(t0, y0)`, returned as `(τ, Y)` pairs.
fn flow_value_trajectory<R: Reaction + ?Sized>(
    r: &R,
    cfg: &KernelConfig,
    y0: f64,
    taus: &[f64],
    t0: f64,
) -> Result<Vec<(f64, f64)>> {
    let shifted: Vec<f64> = taus.iter().map(|t| t - t0).collect();
    let mut out = Vec::with_capacity(taus.len());
    integrate(|s: &[f64; 1]| [r.f(s[0])], [y0], &shifted, cfg, |k, s| {
        out.push((taus[k], s[0]))
    })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reaction::{perturb, Cubic};

    fn cubic() -> Cubic {
        Cubic::new(0.3)
    }

    #[test]
    fn equilibrium_sensitivity_is_exponential() {
        let k = flow(&cubic(), &KernelConfig::default(), 5.0, 0.3).unwrap();
        assert_eq!(k.y, 0.3);
        let want = (0.21f64 * 5.0).exp();
        assert!((k.y_xi - want).abs() < 1e-9 * want, "{} vs {want}", k.y_xi);
        assert!((want - 2.857_651).abs() < 1e-5);
    }

    #[test]
    fn stable_equilibria_are_fixed() {
        let cfg = KernelConfig::default();
        for tau in [0.0, 1.0, 37.0, 1000.0] {
            assert_eq!(flow(&cubic(), &cfg, tau, 0.0).unwrap().y, 0.0);
            assert_eq!(flow(&cubic(), &cfg, tau, 1.0).unwrap().y, 1.0);
        }
    }

    #[test]
    fn near_equilibrium_follows_linearization() {
        let k = flow(&cubic(), &KernelConfig::default(), 1.0, 0.3001).unwrap();
        let lin = 1e-4 * 0.21f64.exp();
        assert!(((k.y - 0.3) - lin).abs() < 0.01 * lin);
    }

    #[test]
    fn curvature_ratio_at_zero_time_and_equilibrium() {
        let cfg = KernelConfig::default();
        assert_eq!(curvature_ratio(&cubic(), &cfg, 0.0, 0.7).unwrap(), 0.0);
        // with Y ≡ a: Y_ξ = e^{μτ}, Y_ξξ' = f''(a) e^{2μτ} + μ Y_ξξ, so
        // Y_ξξ = f''(a)(e^{2μτ} - e^{μτ})/μ and the ratio is f''(a)(e^{μτ}-1)/μ
        let tau = 2.0;
        let mu = 0.21f64;
        let closed = 0.8 * (mu * tau).exp_m1() / mu;
        let got = curvature_ratio(&cubic(), &cfg, tau, 0.3).unwrap();
        assert!((got - closed).abs() < 1e-8 * closed, "{got} vs {closed}");
    }

    #[test]
    fn range_is_enforced() {
        let cfg = KernelConfig::default();
        assert!(matches!(
            flow(&cubic(), &cfg, 1.0, 1.9),
            Err(Error::XiOutOfRange { .. })
        ));
        assert!(flow_unbounded(&cubic(), &cfg, 1.0, 3.0).unwrap().y < 3.0);
        assert!(flow(&cubic(), &cfg, -1.0, 0.5).is_err());
    }

    #[test]
    fn step_overflow_is_reported() {
        let cfg = KernelConfig {
            max_steps: 3,
            ..KernelConfig::default()
        };
        assert!(matches!(
            flow(&cubic(), &cfg, 50.0, 0.5),
            Err(Error::StepOverflow { .. })
        ));
    }

    #[test]
    fn value_only_flow_agrees_with_joint_flow() {
        let cfg = KernelConfig::default();
        for xi in [-1.2, 0.05, 0.31, 0.6, 1.4] {
            let joint = flow(&cubic(), &cfg, 12.0, xi).unwrap().y;
            let single = flow_value(&cubic(), &cfg, 12.0, xi).unwrap();
            assert!((joint - single).abs() < 1e-8);
        }
    }

    #[test]
    fn trajectory_matches_pointwise_flow() {
        let cfg = KernelConfig::default();
        let taus = [0.0, 0.5, 3.0, 10.0];
        let traj = flow_trajectory(&cubic(), &cfg, 0.35, &taus).unwrap();
        assert_eq!(traj[0].y, 0.35);
        for k in &traj {
            let p = flow(&cubic(), &cfg, k.tau, 0.35).unwrap();
            assert!((p.y - k.y).abs() < 1e-9);
        }
    }

    #[test]
    fn perturbed_kernel_keeps_shifted_equilibrium() {
        let p = perturb(&cubic(), 0.01).unwrap();
        let k = flow(&p, &KernelConfig::default(), 10.0, p.a_delta).unwrap();
        assert!((k.y - p.a_delta).abs() < 1e-9);
        let want = (p.mu_delta * 10.0).exp();
        assert!((k.y_xi - want).abs() < 1e-6 * want);
    }

    #[test]
    fn after_time_with_small_band_fails() {
        let cfg = KernelConfig::default();
        let v = after_time_check(&cubic(), &cfg, 0.01, 0.1, 0.01, 2000).unwrap();
        assert!(!v.is_empty());
        assert!(v
            .iter()
            .all(|x| !matches!(x, AfterTimeViolation::Range { .. })));
    }

    #[test]
    fn after_time_equilibrium_sample_is_unclassified() {
        let cfg = KernelConfig::default();
        let sweep = AfterTimeSweep::new(&cubic(), &cfg, 0.01, 200).unwrap();
        let &(xi, y) = sweep.samples.iter().find(|s| s.0 == 0.3).unwrap();
        assert_eq!(y, xi);
        let c_y = sweep.find_c_y(0.1).unwrap();
        assert!(sweep.violations(0.1, c_y).is_empty());
        assert!(!sweep.violations(0.1, 0.9 * c_y).is_empty());
    }

    #[test]
    fn linearization_brackets_one() {
        let fit = fit_linearization(&cubic(), &KernelConfig::default(), 0.1, 200).unwrap();
        assert!(fit.c1 > 0.0 && fit.c1 <= 1.0 && fit.c2 >= 1.0);
        assert!(matches!(
            fit_linearization(&cubic(), &KernelConfig::default(), 0.5, 10),
            Err(Error::InvalidParameter { .. })
        ));
    }

    #[test]
    fn near_linear_ratio() {
        let k = flow(&cubic(), &KernelConfig::default(), 1.0, 0.3001).unwrap();
        let ratio = (k.y - 0.3) / (0.21f64.exp() * 1e-4);
        assert!((0.9..=1.1).contains(&ratio));
    }
}
