use thiserror::Error;

/// Errors raised by the simulation and analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid interval [{a}, {b}]")]
    InvalidInterval { a: i64, b: i64 },

    #[error("invalid disorder law: {0}")]
    InvalidDisorderLaw(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("site {site} outside interval [{a}, {b}]")]
    SiteOutOfRange { site: i64, a: i64, b: i64 },

    #[error("eigensolver failed to converge for eigenvalue {index} after {iterations} iterations")]
    ConvergenceFailure { index: usize, iterations: usize },

    #[error("zero vector")]
    ZeroVector,

    #[error("need at least {needed} eigenvalues, have {have}")]
    TooFewEigenvalues { needed: usize, have: usize },

    #[error("invalid sigma pattern: {0}")]
    InvalidPattern(String),

    #[error("combinatorial budget exceeded: {count} > cap {cap}")]
    BudgetExceeded { count: u128, cap: u128 },

    #[error("non-finite state at t = {t}: {detail}")]
    NonFinite { t: f64, detail: String },

    #[error("unstable time step: dt * nu_plus = {value} exceeds {limit}")]
    UnstableStep { value: f64, limit: f64 },

    #[error("empty ensemble")]
    EmptyEnsemble,

    #[error("rejection sampler collapsed (alpha = {alpha}, gamma = {gamma}, quartic = {quartic}, attempts = {attempts})")]
    EnvelopeFailure {
        alpha: f64,
        gamma: f64,
        quartic: f64,
        attempts: usize,
    },

    #[error("near resonance: |denominator| = {delta:e} below threshold for monomial {monomial}")]
    NearResonance { delta: f64, monomial: String },

    #[error("empty ledger")]
    EmptyLedger,

    #[error("intervals are not nested")]
    NotNested,

    #[error("duplicate stream label path: {0}")]
    DuplicateStream(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
