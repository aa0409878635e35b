use thiserror::Error;

use crate::boundary::BoundaryError;
use crate::odeprop::{ProblemError, PropagationError};

#[derive(Clone, Debug, PartialEq, Error)]
pub enum DetError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Propagation(#[from] PropagationError),
    #[error(transparent)]
    Boundary(#[from] BoundaryError),
    #[error("operators are incompatible: {0}")]
    Mismatch(String),
    #[error("L1 has a zero mode (|det(M + N Y(b))| = {residual:.3e}); use the zero-mode extracting ratio")]
    ZeroModeInNumerator { residual: f64 },
    #[error(
        "reference operator L2 has a zero mode (|det(M + N Y(b))| = {residual:.3e}); not supported"
    )]
    ZeroModeInReference { residual: f64 },
    #[error("L1 has no zero mode: |det(M + N Y(b))| = {residual:.3e} exceeds {threshold:.3e}")]
    NoZeroMode { residual: f64, threshold: f64 },
    #[error("boundary conditions are not self-adjoint (nonvanishing brackets {violated:?})")]
    NotSelfAdjoint { violated: Vec<usize> },
    #[error(
        "self-adjointness cannot be verified for r = {0}; extraction must be forced explicitly"
    )]
    UnverifiedSelfAdjointness(usize),
    #[error("zero-mode construction degenerate: every normalizing coefficient vanishes (kernel dimension > 1?)")]
    VanishingNorm,
    #[error("no boundary-constant case applies (all selectors or denominators vanish)")]
    NoApplicableBCase,
    #[error("sign check failed: nodeless Dirichlet zero mode against a positive reference gave ratio {0}")]
    SignCheck(f64),
    #[error("eigenvalue scan failed: {0}")]
    ScanFailed(String),
    #[error("zero eigenvalue {0:.3e} present; exclude it explicitly")]
    ZeroEigenvalue(f64),
    #[error("{0}")]
    OutOfRange(String),
}
