//! Ratios of functional determinants of `-d²/dx² + Q(x)` on an interval
//! under general boundary conditions, with zero-mode extraction.

// `!(a <= b)` is used deliberately to reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boundary;
pub mod error;
pub mod exec;
pub mod expr;
pub mod gelfand;
pub mod linalg;
pub mod odeprop;
pub mod oracle;
pub mod zeromode;

pub use boundary::{BoundaryKind, BoundarySpec};
pub use error::DetError;
pub use exec::Execution;
pub use gelfand::{det_ratio, dirichlet_ratio, DetRatioReport, RatioOptions};
pub use odeprop::{Controls, Problem};
pub use zeromode::{det_ratio_primed, ZeroModeHandling};
