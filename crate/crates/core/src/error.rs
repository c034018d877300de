use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("perturbed reaction lost its bistable structure: {0}")]
    NoBracket(String),

    #[error("initial datum ξ = {xi} outside the kernel range (-{c0}, {c0})")]
    XiOutOfRange { xi: f64, c0: f64 },

    #[error("ODE integrator exceeded {max_steps} steps at τ = {tau}")]
    StepOverflow { max_steps: usize, tau: f64 },

    #[error("{0}")]
    EmptySample(String),

    #[error("initial profile inconsistent: {0}")]
    Profile(String),

    #[error("initial datum never reaches the level {level}")]
    NoCrossing { level: f64 },

    #[error("point r = {r} at t = {t} lies outside the support of the sub-solution")]
    OutsideSupport { r: f64, t: f64 },

    #[error("C* ladder exhausted at ε = {eps}: no candidate up to {largest} gives the required residual signs")]
    LadderExhausted { eps: f64, largest: f64 },

    #[error("time step {dt:e} exceeds the diffusion CFL bound {limit:e}")]
    CflViolation { dt: f64, limit: f64 },

    #[error("solution bound violated at t = {t:e}: value {value} at cell {cell} (allowed [{lower}, {bound}])")]
    BoundViolation {
        t: f64,
        cell: usize,
        value: f64,
        lower: f64,
        bound: f64,
        snapshot: Box<crate::solver::Snapshot>,
    },

    #[error("no transition layer found: {0}")]
    LayerNotFound(String),

    #[error("config error at `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
