use num_complex::Complex64;
use thiserror::Error;

/// Broad failure classes. The CLI maps these onto exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Input violates a documented precondition (shape, stability, rank...).
    Precondition,
    /// A synthesis step or stability requirement could not be met.
    Synthesis,
    /// An iterative kernel failed or hit a singularity.
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: {detail}")]
    Dimension { context: &'static str, detail: String },

    #[error("{0} did not converge")]
    NoConvergence(&'static str),

    #[error("lambda = {lambda} is (numerically) an eigenvalue of A; resolvent is singular")]
    ResolventSingular { lambda: Complex64 },

    #[error("Sylvester equation is singular: the coefficient matrices share eigenvalue {eigenvalue}")]
    SylvesterSingular { eigenvalue: Complex64 },

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("pair (A, B) is not stabilizable: uncontrollable mode at {eigenvalue}")]
    Unstabilizable { eigenvalue: Complex64 },

    #[error("pair (C, A) is not detectable: unobservable mode at {eigenvalue}")]
    Undetectable { eigenvalue: Complex64 },

    #[error("plant is not exponentially stable (spectral abscissa {abscissa:.3e})")]
    UnstablePlant { abscissa: f64 },

    #[error("P(i*omega_{k}) with omega = {omega} is not surjective (rank {rank} < {outputs})")]
    NotSurjective { k: usize, omega: f64, rank: usize, outputs: usize },

    #[error("P(i*omega_{k}) with omega = {omega} is not invertible")]
    NotInvertible { k: usize, omega: f64 },

    #[error("gain block {k} does not make P(i*omega_k) K_k invertible")]
    GainNotInvertible { k: usize },

    #[error("output feedback is ill-posed: I - D K1 is singular")]
    FeedbackIllPosed,

    #[error("no stabilizing epsilon found down to {smallest:.3e}")]
    EpsilonSearchFailed { smallest: f64 },

    #[error("numerical rank alert: {0}")]
    RankAlert(String),

    #[error("perturbation member {member} is invalid at frequency index {k}: {reason}")]
    InvalidClassMember { member: usize, k: usize, reason: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("synthesis failed: {0}")]
    Synthesis(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Dimension { .. }
            | Error::UnstablePlant { .. }
            | Error::NotSurjective { .. }
            | Error::NotInvertible { .. }
            | Error::GainNotInvertible { .. }
            | Error::FeedbackIllPosed
            | Error::InvalidClassMember { .. }
            | Error::ResolventSingular { .. }
            | Error::Precondition(_) => ErrorKind::Precondition,
            Error::Unstabilizable { .. }
            | Error::Undetectable { .. }
            | Error::EpsilonSearchFailed { .. }
            | Error::RankAlert(_)
            | Error::Synthesis(_) => ErrorKind::Synthesis,
            Error::NoConvergence(_) | Error::SylvesterSingular { .. } | Error::Singular(_) => ErrorKind::Numerical,
        }
    }

    pub(crate) fn dim(context: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension { context, detail: detail.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
