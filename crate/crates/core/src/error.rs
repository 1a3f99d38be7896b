use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// det A ≤ 0: no positive equilibrium and the autonomous theory does not apply.
    #[error("no M-matrix regime: det A = {det} is not positive")]
    NoMMatrixRegime { det: f64 },

    #[error("t = {t} lies outside the table domain [{lo}, {hi}]")]
    Domain { t: f64, lo: f64, hi: f64 },

    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("integration diverged at t = {time}")]
    Diverged { time: f64 },

    #[error("tail too short: {intervals} delay intervals available, {required} required")]
    InsufficientTail { intervals: usize, required: usize },

    #[error("no oscillation detected")]
    NoOscillation,

    #[error("resonant ladder point at tau = {tau}: double-Hopf interaction, out of scope")]
    ResonantPoint { tau: f64 },

    #[error("eigenvector formula singular: k and l must both be positive")]
    SingularEigenvector,

    #[error("trivial system: m = 0, special-solution constants are not defined")]
    TrivialSystem,

    #[error("m*e*tau = {value} is not below 1")]
    SpecialHypothesis { value: f64 },

    #[error("I + tau*A(t) numerically singular at t = {t}")]
    SingularResolvent { t: f64 },
}
