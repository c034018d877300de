//! Bistable reaction terms.
//!
//! A bistable nonlinearity has exactly three zeros `0 < a < 1` with
//! `f'(0) < 0`, `f'(a) > 0` and `f'(1) < 0`. The default is the cubic
//! `f(u) = u(1 - u)(u - a)`. A constant shift `f + δ` keeps the bistable
//! structure for small `|δ|` and moves the unstable zero to `a(δ)`.

use std::fmt;

use crate::error::{Error, Result};

/// Tolerance on `f` at its zeros.
pub const ZERO_TOL: f64 = 1e-14;
/// Points sampled on `[-2, 2]` when checking the sign pattern.
pub const SIGN_SAMPLES: usize = 10_000;
/// Absolute tolerance of the unstable-zero root finder.
pub const ROOT_TOL: f64 = 1e-12;

/// A scalar reaction term together with its first two derivatives.
pub trait Reaction: Send + Sync {
    fn f(&self, u: f64) -> f64;
    fn df(&self, u: f64) -> f64;
    fn d2f(&self, u: f64) -> f64;

    /// Outer zeros bounding the invariant interval of `u' = f(u)`.
    fn outer_zeros(&self) -> (f64, f64) {
        (0.0, 1.0)
    }
}

/// A reaction with a distinguished unstable zero `a`.
pub trait BistableReaction: Reaction {
    fn unstable_zero(&self) -> f64;

    /// Slope at the unstable zero, `μ = f'(a)`.
    fn mu(&self) -> f64 {
        self.df(self.unstable_zero())
    }
}

impl<T: Reaction + ?Sized> Reaction for &T {
    fn f(&self, u: f64) -> f64 {
        (**self).f(u)
    }
    fn df(&self, u: f64) -> f64 {
        (**self).df(u)
    }
    fn d2f(&self, u: f64) -> f64 {
        (**self).d2f(u)
    }
    fn outer_zeros(&self) -> (f64, f64) {
        (**self).outer_zeros()
    }
}

impl<T: BistableReaction + ?Sized> BistableReaction for &T {
    fn unstable_zero(&self) -> f64 {
        (**self).unstable_zero()
    }
}

/// `f(u) = u (1 - u) (u - a)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cubic {
    pub a: f64,
}

impl Cubic {
    /// Unchecked constructor; see [`Cubic::validated`].
    pub const fn new(a: f64) -> Self {
        Cubic { a }
    }

    pub fn validated(a: f64) -> Result<Self> {
        let c = Cubic { a };
        let diags = validate_bistable(&c);
        if diags.is_empty() {
            Ok(c)
        } else {
            let msg = diags
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join("; ");
            Err(Error::param("reaction.a", msg))
        }
    }
}

impl Default for Cubic {
    fn default() -> Self {
        Cubic { a: 0.3 }
    }
}

impl Reaction for Cubic {
    #[inline]
    fn f(&self, u: f64) -> f64 {
        u * (1.0 - u) * (u - self.a)
    }

    #[inline]
    fn df(&self, u: f64) -> f64 {
        -3.0 * u * u + 2.0 * (1.0 + self.a) * u - self.a
    }

    #[inline]
    fn d2f(&self, u: f64) -> f64 {
        -6.0 * u + 2.0 * (1.0 + self.a)
    }
}

impl BistableReaction for Cubic {
    fn unstable_zero(&self) -> f64 {
        self.a
    }
}

/// `f ≡ 0`, used for pure porous-medium runs.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoReaction;

impl Reaction for NoReaction {
    fn f(&self, _u: f64) -> f64 {
        0.0
    }
    fn df(&self, _u: f64) -> f64 {
        0.0
    }
    fn d2f(&self, _u: f64) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostic {
    UnstableZeroOutOfRange { a: f64 },
    ZeroMismatch { at: f64, value: f64 },
    SlopeSign { at: f64, slope: f64, expected_positive: bool },
    SignPattern { count: usize, first_at: f64 },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::UnstableZeroOutOfRange { a } => {
                write!(f, "unstable zero a = {a} not in (0, 1)")
            }
            Diagnostic::ZeroMismatch { at, value } => {
                write!(f, "f({at}) = {value:e}, expected 0")
            }
            Diagnostic::SlopeSign {
                at,
                slope,
                expected_positive,
            } => {
                let want = if *expected_positive { "> 0" } else { "< 0" };
                write!(f, "f'({at}) = {slope}, expected {want}")
            }
            Diagnostic::SignPattern { count, first_at } => write!(
                f,
                "sign pattern violated at {count} sample points (first at u = {first_at})"
            ),
        }
    }
}

/// Checks the bistable hypotheses. Never fails; returns every violation found.
pub fn validate_bistable<R: BistableReaction + ?Sized>(r: &R) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let a = r.unstable_zero();
    if !(a > 0.0 && a < 1.0) {
        out.push(Diagnostic::UnstableZeroOutOfRange { a });
    }
    for z in [0.0, a, 1.0] {
        let v = r.f(z);
        if !(v.abs() <= ZERO_TOL) {
            out.push(Diagnostic::ZeroMismatch { at: z, value: v });
        }
    }
    for (z, positive) in [(0.0, false), (a, true), (1.0, false)] {
        let s = r.df(z);
        let ok = if positive { s > 0.0 } else { s < 0.0 };
        if !ok {
            out.push(Diagnostic::SlopeSign {
                at: z,
                slope: s,
                expected_positive: positive,
            });
        }
    }

    // f > 0 on (-inf, 0) u (a, 1), f < 0 on (0, a) u (1, inf)
    let guard = 1e-9;
    let mut count = 0usize;
    let mut first_at = f64::NAN;
    for k in 0..SIGN_SAMPLES {
        let u = -2.0 + 4.0 * k as f64 / (SIGN_SAMPLES - 1) as f64;
        if [0.0, a, 1.0].iter().any(|z| (u - z).abs() < guard) {
            continue;
        }
        let expected_positive = u < 0.0 || (u > a && u < 1.0);
        let v = r.f(u);
        let ok = if expected_positive { v > 0.0 } else { v < 0.0 };
        if !ok {
            if count == 0 {
                first_at = u;
            }
            count += 1;
        }
    }
    if count > 0 {
        out.push(Diagnostic::SignPattern { count, first_at });
    }
    out
}

/// The shifted reaction `f_δ = f + δ` with its own unstable zero and slope.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedReaction<R> {
    pub base: R,
    pub delta: f64,
    pub a_delta: f64,
    pub mu_delta: f64,
    pub zeros: (f64, f64),
}

impl<R: Reaction> Reaction for PerturbedReaction<R> {
    #[inline]
    fn f(&self, u: f64) -> f64 {
        self.base.f(u) + self.delta
    }
    #[inline]
    fn df(&self, u: f64) -> f64 {
        self.base.df(u)
    }
    #[inline]
    fn d2f(&self, u: f64) -> f64 {
        self.base.d2f(u)
    }
    fn outer_zeros(&self) -> (f64, f64) {
        self.zeros
    }
}

impl<R: Reaction> BistableReaction for PerturbedReaction<R> {
    fn unstable_zero(&self) -> f64 {
        self.a_delta
    }

    fn mu(&self) -> f64 {
        self.mu_delta
    }
}

/// Sign changes of `g` on a uniform grid of `[lo, hi]`, as bracketing intervals.
fn sign_changes(g: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut x0 = lo;
    let mut g0 = g(x0);
    for k in 1..=n {
        let x1 = lo + (hi - lo) * k as f64 / n as f64;
        let g1 = g(x1);
        if g0 == 0.0 {
            out.push((x0, x0));
        } else if g0 * g1 < 0.0 {
            out.push((x0, x1));
        }
        x0 = x1;
        g0 = g1;
    }
    if g0 == 0.0 {
        out.push((x0, x0));
    }
    out
}

/// Builds `f + δ`.
///
/// The three-zero structure is checked by counting sign changes on `[-1, 2]`;
/// the unstable zero is the middle one, refined by Newton from `a` with a
/// bisection fallback inside its bracket.
pub fn perturb<R: BistableReaction + Clone>(r: &R, delta: f64) -> Result<PerturbedReaction<R>> {
    if !delta.is_finite() {
        return Err(Error::param("reaction.delta", "must be finite"));
    }
    let g = |u: f64| r.f(u) + delta;
    let brackets = sign_changes(g, -1.0, 2.0, 30_000);
    if brackets.len() != 3 {
        return Err(Error::NoBracket(format!(
            "f + δ with δ = {delta} has {} sign changes on [-1, 2], expected 3",
            brackets.len()
        )));
    }
    let zeros = (bisect(g, brackets[0]), bisect(g, brackets[2]));
    let (mut lo, mut hi) = brackets[1];
    if g(lo) > 0.0 {
        // the middle zero of a bistable f is an up-crossing
        return Err(Error::NoBracket(format!(
            "middle zero of f + δ with δ = {delta} is not an up-crossing"
        )));
    }

    let mut x = r.unstable_zero().clamp(lo, hi);
    for _ in 0..200 {
        let gx = g(x);
        if gx == 0.0 {
            break;
        }
        if gx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = r.df(x);
        let newton = x - gx / d;
        let next = if d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let done = (next - x).abs() <= ROOT_TOL || hi - lo <= ROOT_TOL;
        x = next;
        if done {
            break;
        }
    }
    let mu_delta = r.df(x);
    if !(mu_delta > 0.0) {
        return Err(Error::NoBracket(format!(
            "slope at the unstable zero of f + δ is {mu_delta}, not positive"
        )));
    }
    Ok(PerturbedReaction {
        base: r.clone(),
        delta,
        a_delta: x,
        mu_delta,
        zeros,
    })
}

fn bisect(g: impl Fn(f64) -> f64, (mut lo, mut hi): (f64, f64)) -> f64 {
    let up = g(hi) > g(lo);
    while hi - lo > ROOT_TOL {
        let mid = 0.5 * (lo + hi);
        if (g(mid) < 0.0) == up {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Largest `|f'|` over a closed interval, by dense sampling.
pub fn max_abs_slope<R: Reaction + ?Sized>(r: &R, lo: f64, hi: f64) -> f64 {
    let n = 4096;
    (0..=n)
        .map(|k| r.df(lo + (hi - lo) * k as f64 / n as f64).abs())
        .fold(0.0, f64::max)
}
