use thiserror::Error;

/// Everything that can go wrong inside the library.
///
/// `is_config` separates user/config mistakes (CLI exit code 2) from
/// domain and numerical failures (exit code 1).
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    Domain(String),
    #[error("covector is not light-like: {0}")]
    NotLightLike(String),
    #[error("singular linear system")]
    Singular,
    #[error("infeasible configuration: {0}")]
    ConfigInfeasible(String),
    #[error("CFL violation: cfl = {cfl} exceeds 1/sqrt({d})")]
    CflViolation { cfl: f64, d: usize },
    #[error("grid too small: {0}")]
    GridTooSmall(String),
    #[error("blow-up at step {step}: sup|u| = {sup:e} exceeds guard {guard:e}")]
    BlowUp { step: usize, sup: f64, guard: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("stencil support exceeded: {0}")]
    StencilSupport(String),
    #[error("region does not intersect the stored samples")]
    EmptyRegion,
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("unresolved phase: |zeta|*dx/tau = {0:.3} > pi/2")]
    UnresolvedPhase(f64),
    #[error("unstable fit: {0}")]
    UnstableFit(String),
    #[error("no signal: {0}")]
    NoSignal(String),
    #[error("identity check failed: {0}")]
    IdentityCheck(String),
    #[error("points are not null-separated: {0}")]
    NotNullSeparated(String),
    #[error("no admissible ray pairs in the sample")]
    EmptyPairSet,
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Json(_))
    }

    /// Short machine-readable tag used in JSON error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "Domain",
            Error::NotLightLike(_) => "NotLightLike",
            Error::Singular => "Singular",
            Error::ConfigInfeasible(_) => "ConfigInfeasible",
            Error::CflViolation { .. } => "CflViolation",
            Error::GridTooSmall(_) => "GridTooSmall",
            Error::BlowUp { .. } => "BlowUp",
            Error::NonFinite(_) => "NonFinite",
            Error::StencilSupport(_) => "StencilSupport",
            Error::EmptyRegion => "EmptyRegion",
            Error::GridMismatch(_) => "GridMismatch",
            Error::UnresolvedPhase(_) => "UnresolvedPhase",
            Error::UnstableFit(_) => "UnstableFit",
            Error::NoSignal(_) => "NoSignal",
            Error::IdentityCheck(_) => "IdentityCheck",
            Error::NotNullSeparated(_) => "NotNullSeparated",
            Error::EmptyPairSet => "EmptyPairSet",
            Error::Invalid(_) => "Invalid",
            Error::Config(_) => "Config",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
