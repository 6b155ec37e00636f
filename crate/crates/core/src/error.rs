use thiserror::Error;

use crate::model::Diagnostic;
use crate::numerics::NumericsError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Numerics(#[from] NumericsError),

    #[error("invalid problem: {}", join_diagnostics(.0))]
    InvalidProblem(Vec<Diagnostic>),

    #[error("R(0) is rank deficient; the range-condition form of the equation is not supported")]
    UnsupportedRankDeficientR,

    #[error("unsupported problem shape: {0}")]
    UnsupportedShape(String),

    #[error("R(P) is singular (1-norm condition {cond:e})")]
    SingularRP { cond: f64 },

    #[error("R22(P) is singular")]
    SingularR22,

    #[error("generalized Lyapunov operator is singular (closed loop on the stability boundary)")]
    SingularLyapunov,

    #[error("P = 0 is outside Dom G: eig_min(R22) = {r22_min:e}, eig_max(R11) = {r11_max:e}")]
    NotInDomain { r22_min: f64, r11_max: f64 },

    #[error("iterate P({k}) left Dom G: eig_min(R22(P)) = {r22_min:e}, eig_max(R11(P)) = {r11_max:e}")]
    DomainExit { k: usize, r22_min: f64, r11_max: f64 },

    #[error(
        "no mean-square stabilizing initial gain among the candidates; \
         supply a certificate gain L (e.g. found with `gtare certificate --search`)"
    )]
    StabilizerNotFound,

    #[error("initial gain does not stabilize the closed loop (abscissa {abscissa:e})")]
    UnstableInitialGain { abscissa: f64 },

    #[error("quadratic weight lost definiteness at Newton iteration {iteration} (margin {margin:e})")]
    OrientationLost { iteration: usize, margin: f64 },

    #[error("Newton iteration did not converge in {iterations} steps (residual {residual:e})")]
    MaxItersExceeded { iterations: usize, residual: f64 },

    #[error("outer iteration did not converge in {iterations} steps (last ‖Z‖ = {z_norm:e})")]
    MaxOuterExceeded { iterations: usize, z_norm: f64 },

    #[error("constant term M({k}) is not PSD (eig_min {eig_min:e})")]
    NegativeConstantTerm { k: usize, eig_min: f64 },

    #[error("converged solution is not stabilizing (abscissa {abscissa:e})")]
    NotStabilizing { abscissa: f64 },

    #[error("invalid Riccati subproblem: {0}")]
    InvalidAre(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("trajectory became non-finite on path {path} at step {step}")]
    NonFinite { path: usize, step: usize },

    #[error("outer iteration {k}: {source}")]
    AtIteration {
        k: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Stable machine-readable name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Numerics(NumericsError::SingularMatrix { .. }) => "SingularMatrix",
            Error::Numerics(NumericsError::IllConditioned { .. }) => "IllConditioned",
            Error::Numerics(_) => "Numerics",
            Error::InvalidProblem(_) => "InvalidProblem",
            Error::UnsupportedRankDeficientR => "UnsupportedRankDeficientR",
            Error::UnsupportedShape(_) => "UnsupportedShape",
            Error::SingularRP { .. } => "SingularRP",
            Error::SingularR22 => "SingularR22",
            Error::SingularLyapunov => "SingularLyapunov",
            Error::NotInDomain { .. } => "NotInDomain",
            Error::DomainExit { .. } => "DomainExit",
            Error::StabilizerNotFound => "StabilizerNotFound",
            Error::UnstableInitialGain { .. } => "UnstableInitialGain",
            Error::OrientationLost { .. } => "OrientationLost",
            Error::MaxItersExceeded { .. } => "MaxItersExceeded",
            Error::MaxOuterExceeded { .. } => "MaxOuterExceeded",
            Error::NegativeConstantTerm { .. } => "NegativeConstantTerm",
            Error::NotStabilizing { .. } => "NotStabilizing",
            Error::InvalidAre(_) => "InvalidAre",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::NonFinite { .. } => "NonFinite",
            Error::AtIteration { source, .. } => source.kind(),
        }
    }

    /// Strips iteration context.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtIteration { source, .. } => source.root(),
            e => e,
        }
    }

    pub(crate) fn at_iteration(self, k: usize) -> Error {
        match self {
            e @ Error::AtIteration { .. } => e,
            e => Error::AtIteration {
                k,
                source: Box::new(e),
            },
        }
    }
}

fn join_diagnostics(d: &[Diagnostic]) -> String {
    d.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; ")
}
