//! Sub- and super-solutions `w±`, the generation clock and the calibration
//! of the drift constant `C★`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::InitialProfile;
use crate::ode::{flow_unbounded, flow_value, KernelConfig, KernelResult};
use crate::reaction::BistableReaction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Minus,
    Plus,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Minus => -1.0,
            Side::Plus => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::Minus => "minus",
            Side::Plus => "plus",
        }
    }
}

/// `μ⁻¹ ε² |ln ε|`.
pub fn generation_time(mu: f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::param("eps", "generation time needs ε in (0, 1)"));
    }
    if !(mu > 0.0) {
        return Err(Error::param("mu", "must be positive"));
    }
    Ok(eps * eps * eps.ln().abs() / mu)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationClock {
    pub mu: f64,
    pub eps: f64,
    pub t_eps: f64,
}

impl GenerationClock {
    pub fn new(mu: f64, eps: f64) -> Result<Self> {
        Ok(GenerationClock {
            mu,
            eps,
            t_eps: generation_time(mu, eps)?,
        })
    }

    /// `μ⁻¹ ε² (|ln ε| - b)`, which may be negative for `b > |ln ε|`.
    pub fn t_eps_b(&self, b: f64) -> f64 {
        self.eps * self.eps * (self.eps.ln().abs() - b) / self.mu
    }

    /// Inverse of [`Self::t_eps_b`]: `|ln ε| - μ t / ε²`.
    pub fn b_of(&self, t: f64) -> f64 {
        self.mu * (self.t_eps - t) / (self.eps * self.eps)
    }

    /// Rescaled time `t / ε²`.
    pub fn tau(&self, t: f64) -> f64 {
        t / (self.eps * self.eps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeParams {
    pub eps: f64,
    pub cstar: f64,
    pub mu: f64,
    pub m: u32,
}

impl EnvelopeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::param("eps", "must lie in (0, 1)"));
        }
        if !(self.cstar > 0.0) || !self.cstar.is_finite() {
            return Err(Error::param("Cstar", "must be positive"));
        }
        if self.m < 2 {
            return Err(Error::param("m", "must be >= 2"));
        }
        if !(self.mu > 0.0) {
            return Err(Error::param("mu", "must be positive"));
        }
        Ok(())
    }
}

/// Everything needed to evaluate `w±` and `ℒ[w±]` at a radius and time.
#[derive(Debug, Clone)]
pub struct Envelope<R> {
    pub params: EnvelopeParams,
    pub reaction: R,
    pub kernel: KernelConfig,
    pub profile: InitialProfile,
    pub dim: usize,
    pub clock: GenerationClock,
}

impl<R: BistableReaction + Clone> Envelope<R> {
    /// `cstar` may be zero here so that the drift-free envelope can be probed;
    /// calibrated envelopes always carry `C★ > 0`.
    pub fn new(
        reaction: R,
        profile: InitialProfile,
        dim: usize,
        eps: f64,
        cstar: f64,
        m: u32,
        kernel: KernelConfig,
    ) -> Result<Self> {
        let mu = reaction.mu();
        let params = EnvelopeParams { eps, cstar, mu, m };
        if cstar != 0.0 {
            params.validate()?;
        } else {
            EnvelopeParams { cstar: 1.0, ..params }.validate()?;
        }
        kernel.validate()?;
        Ok(Envelope {
            params,
            reaction,
            kernel,
            profile,
            dim,
            clock: GenerationClock::new(mu, eps)?,
        })
    }

    pub fn with_cstar(&self, cstar: f64) -> Self {
        let mut e = self.clone();
        e.params.cstar = cstar;
        e
    }

    /// `ε² C★ (e^{μt/ε²} - 1)`.
    pub fn drift(&self, t: f64) -> f64 {
        let p = &self.params;
        p.eps * p.eps * p.cstar * (p.mu * self.clock.tau(t)).exp_m1()
    }

    pub fn xi(&self, r: f64, t: f64, side: Side) -> f64 {
        self.profile.value(r) + side.sign() * self.drift(t)
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t >= 0.0) || t > self.clock.t_eps * (1.0 + 1e-12) {
            return Err(Error::param("t", format!("envelopes are defined on [0, {}]", self.clock.t_eps)));
        }
        Ok(())
    }

    /// `w±(r, t) = [Y(t/ε², u₀(r) ± drift)]⁺`.
    pub fn eval_w(&self, r: f64, t: f64, side: Side) -> Result<f64> {
        self.check_time(t)?;
        let y = flow_value(&self.reaction, &self.kernel, self.clock.tau(t), self.xi(r, t, side))?;
        Ok(y.max(0.0))
    }

    /// Radius of `Supp w⁻(·, t)`, i.e. where `u₀ = drift(t)`.
    pub fn support_radius_wminus(&self, t: f64) -> Result<SupportRadius> {
        self.check_time(t)?;
        let thr = self.drift(t);
        if thr <= 0.0 {
            return Ok(SupportRadius {
                radius: self.profile.r_support,
                empty: false,
            });
        }
        if thr >= self.profile.c0 {
            return Ok(SupportRadius {
                radius: 0.0,
                empty: true,
            });
        }
        Ok(SupportRadius {
            radius: self.profile.level_radius(thr)?,
            empty: false,
        })
    }

    fn kernel_at(&self, r: f64, t: f64, side: Side) -> Result<KernelResult> {
        flow_unbounded(&self.reaction, &self.kernel, self.clock.tau(t), self.xi(r, t, side))
    }

    /// Expanded residual `ℒ[w] = w_t - Δ(w^m) - ε⁻² f(w)` at `(r, t)`.
    ///
    /// `ℒ[w∓] = ∓ Y_ξ [C★ μ e^{μt/ε²} ± m(m-1) Y^{m-2} Y_ξ |∇u₀|²
    ///          ± m Y^{m-1} (Y_ξξ/Y_ξ) |∇u₀|² ± m Y^{m-1} Δu₀]`
    pub fn residual_l(&self, r: f64, t: f64, side: Side) -> Result<f64> {
        Ok(self.residual_parts(r, t, side)?.value())
    }

    pub fn residual_parts(&self, r: f64, t: f64, side: Side) -> Result<ResidualParts> {
        self.check_time(t)?;
        let k = self.kernel_at(r, t, side)?;
        if side == Side::Minus && !(k.y > 0.0) {
            return Err(Error::OutsideSupport { r, t });
        }
        let p = &self.params;
        let m = p.m as f64;
        let g2 = self.profile.grad_norm(r).powi(2);
        let lap = self.profile.laplacian(r, self.dim);
        let ym1 = k.y.powi(p.m as i32 - 1);
        let ym2 = k.y.powi(p.m as i32 - 2);
        let diffusion = m * (m - 1.0) * ym2 * k.y_xi * g2
            + m * ym1 * (k.y_xixi / k.y_xi) * g2
            + m * ym1 * lap;
        Ok(ResidualParts {
            side,
            y: k.y,
            y_xi: k.y_xi,
            xi: k.xi,
            drift_rate: p.cstar * p.mu * (p.mu * self.clock.tau(t)).exp(),
            diffusion,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportRadius {
    pub radius: f64,
    pub empty: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualParts {
    pub side: Side,
    pub y: f64,
    pub y_xi: f64,
    pub xi: f64,
    /// `C★ μ e^{μt/ε²}`.
    pub drift_rate: f64,
    /// The three diffusion terms inside the bracket.
    pub diffusion: f64,
}

impl ResidualParts {
    pub fn value(&self) -> f64 {
        match self.side {
            Side::Minus => -self.y_xi * (self.drift_rate + self.diffusion),
            Side::Plus => self.y_xi * (self.drift_rate - self.diffusion),
        }
    }

    /// `side · ℒ / (Y_ξ C★ μ e)`: one for pure drift, positive iff the sign is right.
    pub fn normalized_margin(&self) -> f64 {
        match self.side {
            Side::Minus => 1.0 + self.diffusion / self.drift_rate,
            Side::Plus => 1.0 - self.diffusion / self.drift_rate,
        }
    }
}

/// Space-time sample for the calibration sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSample {
    /// Radii inside the support of u₀.
    pub inner_radii: usize,
    /// Radii in `[R0, R)` where u₀ vanishes.
    pub outer_radii: usize,
    pub outer_limit: f64,
    pub times: usize,
    /// Required normalized margin on both sides.
    pub margin: f64,
    /// Ladder `first · 2^k` for `k < rungs`.
    pub ladder_first: f64,
    pub ladder_rungs: usize,
}

impl Default for CalibrationSample {
    fn default() -> Self {
        CalibrationSample {
            inner_radii: 48,
            outer_radii: 8,
            outer_limit: 1.0,
            times: 24,
            margin: 0.05,
            ladder_first: 0.5,
            ladder_rungs: 16,
        }
    }
}

impl CalibrationSample {
    pub fn densified(&self, factor: usize) -> Self {
        CalibrationSample {
            inner_radii: self.inner_radii * factor,
            outer_radii: self.outer_radii * factor,
            times: self.times * factor,
            ..self.clone()
        }
    }

    pub fn ladder(&self) -> Vec<f64> {
        (0..self.ladder_rungs)
            .map(|k| self.ladder_first * 2f64.powi(k as i32))
            .collect()
    }

    /// `(r, t)` pairs; times `t_eps · j / n` for `j = 1..=n`.
    pub fn points(&self, profile: &InitialProfile, t_eps: f64) -> Vec<(f64, f64)> {
        let r0 = profile.r_support;
        let mut radii: Vec<f64> = (0..self.inner_radii)
            .map(|i| r0 * (i as f64 + 0.5) / self.inner_radii as f64)
            .collect();
        let span = self.outer_limit - r0;
        radii.extend((0..self.outer_radii).map(|i| r0 + span * i as f64 / self.outer_radii as f64));
        let mut pts = Vec::with_capacity(radii.len() * self.times);
        for j in 1..=self.times {
            let t = t_eps * j as f64 / self.times as f64;
            pts.extend(radii.iter().map(|&r| (r, t)));
        }
        pts
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub eps: f64,
    pub cstar: f64,
    pub margin_minus: f64,
    pub margin_plus: f64,
    pub samples_minus: usize,
    pub samples_plus: usize,
    /// Extremes of the ξ-argument over the sample with the chosen C★.
    pub xi_min: f64,
    pub xi_max: f64,
    /// Whether ξ stayed in `(-C0, C0)`.
    pub xi_in_range: bool,
    pub rungs_tried: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignSweep {
    pub margin_minus: f64,
    pub margin_plus: f64,
    pub max_l_minus: f64,
    pub min_l_plus: f64,
    pub samples_minus: usize,
    pub samples_plus: usize,
    pub xi_min: f64,
    pub xi_max: f64,
}

/// Evaluates both residual signs over the sample points. Minus-side points
/// outside `Supp w⁻` are skipped.
pub fn sign_sweep<R: BistableReaction + Clone>(env: &Envelope<R>, pts: &[(f64, f64)]) -> Result<SignSweep> {
    let rows: Vec<Result<(Option<ResidualParts>, ResidualParts)>> = pts
        .par_iter()
        .map(|&(r, t)| {
            let minus = match env.residual_parts(r, t, Side::Minus) {
                Ok(p) => Some(p),
                Err(Error::OutsideSupport { .. }) => None,
                Err(e) => return Err(e),
            };
            Ok((minus, env.residual_parts(r, t, Side::Plus)?))
        })
        .collect();
    let mut s = SignSweep {
        margin_minus: f64::INFINITY,
        margin_plus: f64::INFINITY,
        max_l_minus: f64::NEG_INFINITY,
        min_l_plus: f64::INFINITY,
        samples_minus: 0,
        samples_plus: 0,
        xi_min: f64::INFINITY,
        xi_max: f64::NEG_INFINITY,
    };
    for row in rows {
        let (minus, plus) = row?;
        if let Some(mp) = minus {
            s.margin_minus = s.margin_minus.min(mp.normalized_margin());
            s.max_l_minus = s.max_l_minus.max(mp.value());
            s.samples_minus += 1;
            s.xi_min = s.xi_min.min(mp.xi);
        }
        s.margin_plus = s.margin_plus.min(plus.normalized_margin());
        s.min_l_plus = s.min_l_plus.min(plus.value());
        s.samples_plus += 1;
        s.xi_max = s.xi_max.max(plus.xi);
    }
    Ok(s)
}

/// Smallest ladder value of `C★` for which both residual signs hold with
/// the declared normalized margin at every sample point.
pub fn calibrate_cstar<R: BistableReaction + Clone>(
    template: &Envelope<R>,
    sample: &CalibrationSample,
) -> Result<Calibration> {
    let pts = sample.points(&template.profile, template.clock.t_eps);
    let ladder = sample.ladder();
    for (k, &c) in ladder.iter().enumerate() {
        let env = template.with_cstar(c);
        let s = sign_sweep(&env, &pts)?;
        if s.samples_minus > 0 && s.margin_minus >= sample.margin && s.margin_plus >= sample.margin {
            let c0 = template.kernel.c0;
            return Ok(Calibration {
                eps: template.params.eps,
                cstar: c,
                margin_minus: s.margin_minus,
                margin_plus: s.margin_plus,
                samples_minus: s.samples_minus,
                samples_plus: s.samples_plus,
                xi_min: s.xi_min,
                xi_max: s.xi_max,
                xi_in_range: s.xi_min > -c0 && s.xi_max < c0,
                rungs_tried: k + 1,
            });
        }
    }
    Err(Error::LadderExhausted {
        eps: template.params.eps,
        largest: ladder.last().copied().unwrap_or(0.0),
    })
}

/// `w±` at the given radii and time.
pub fn envelope_values<R: BistableReaction + Clone>(
    env: &Envelope<R>,
    radii: &[f64],
    t: f64,
    side: Side,
) -> Result<Vec<f64>> {
    radii.par_iter().map(|&r| env.eval_w(r, t, side)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reaction::Cubic;

    fn env(eps: f64, cstar: f64) -> Envelope<Cubic> {
        Envelope::new(
            Cubic::default(),
            InitialProfile::radial(0.8, 0.5),
            2,
            eps,
            cstar,
            2,
            KernelConfig::for_sup_norm(0.8).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn generation_time_values() {
        assert!((generation_time(0.21, 0.01).unwrap() - 2.1929e-3).abs() < 1e-7);
        assert!((generation_time(0.21, 0.02).unwrap() - 7.4514e-3).abs() < 1e-7);
        assert!(generation_time(0.21, 1.0 - 1e-9).unwrap() < 1e-8);
        assert!(generation_time(0.21, 1.0).is_err());
        let c = GenerationClock::new(0.21, 0.01).unwrap();
        assert!(c.t_eps_b(1.0) < c.t_eps);
        assert!((c.b_of(c.t_eps_b(2.5)) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn envelopes_start_at_u0() {
        let e = env(0.01, 2.0);
        for k in 0..20 {
            let r = 0.6 * k as f64 / 20.0;
            let u0 = e.profile.value(r);
            assert_eq!(e.eval_w(r, 0.0, Side::Minus).unwrap(), u0);
            assert_eq!(e.eval_w(r, 0.0, Side::Plus).unwrap(), u0);
        }
    }

    #[test]
    fn minus_side_vanishes_off_support() {
        let e = env(0.01, 2.0);
        assert_eq!(e.eval_w(0.7, 1e-3, Side::Minus).unwrap(), 0.0);
        assert!(matches!(
            e.residual_l(0.7, 1e-3, Side::Minus),
            Err(Error::OutsideSupport { .. })
        ));
    }

    #[test]
    fn plus_side_outside_support_decays() {
        let e = env(0.01, 2.0);
        let t = e.clock.t_eps;
        assert!((e.xi(0.7, t, Side::Plus) - 0.0198).abs() < 1e-12);
        let w = e.eval_w(0.7, t, Side::Plus).unwrap();
        assert!(w > 0.0 && w <= 0.1 && w < 0.0198);
    }

    #[test]
    fn flat_region_residual_is_pure_drift() {
        // u₀ = 0 beyond R0, so only the drift term survives on the plus side
        let e = env(0.01, 2.0);
        let t = 0.5 * e.clock.t_eps;
        let p = e.residual_parts(0.7, t, Side::Plus).unwrap();
        assert_eq!(p.diffusion, 0.0);
        assert_eq!(p.normalized_margin(), 1.0);
        assert!(p.value() > 0.0);
    }

    #[test]
    fn support_radius_behaviour() {
        let e = env(0.01, 2.0);
        assert_eq!(e.support_radius_wminus(0.0).unwrap().radius, 0.5);
        let s = e.support_radius_wminus(e.clock.t_eps).unwrap();
        assert!((e.profile.value(s.radius) - 0.0198).abs() < 1e-12);
        let mut prev = f64::INFINITY;
        for k in 0..=10 {
            let r = e.support_radius_wminus(e.clock.t_eps * k as f64 / 10.0).unwrap().radius;
            assert!(r <= prev);
            prev = r;
        }
        let big = env(0.01, 1e4);
        assert!(big.support_radius_wminus(big.clock.t_eps).unwrap().empty);
    }

    #[test]
    fn envelopes_are_ordered() {
        let e = env(0.02, 300.0);
        for j in 0..=6 {
            let t = e.clock.t_eps * j as f64 / 6.0;
            for k in 0..30 {
                let r = 0.6 * k as f64 / 30.0;
                let lo = e.eval_w(r, t, Side::Minus).unwrap();
                let hi = e.eval_w(r, t, Side::Plus).unwrap();
                assert!(lo <= hi);
            }
        }
    }

    #[test]
    fn calibration_is_stable_under_densification() {
        let e = env(0.02, 1.0);
        let base = CalibrationSample::default();
        let c1 = calibrate_cstar(&e, &base).unwrap();
        let c2 = calibrate_cstar(&e, &base.densified(2)).unwrap();
        assert!(c1.margin_minus >= base.margin && c1.margin_plus >= base.margin);
        assert!(c2.cstar / c1.cstar <= 2.0 && c1.cstar / c2.cstar <= 2.0);
        assert!(c1.samples_minus + c1.samples_plus >= 1000);
    }
}
