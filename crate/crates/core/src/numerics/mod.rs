//! Shared numerical kernels.

pub mod fd;
pub mod grid;
pub mod interp;
pub mod ode;
pub mod root;
pub mod tridiag;

pub use grid::{Grid1D, SpacingKind};
pub use interp::HermiteTable;
pub use ode::{integrate_ivp, integrate_ivp_until, IntegratorConfig, IvpOutcome, Trajectory};
pub use root::{find_root, find_root_fallible};
pub use tridiag::{eig_sym_tridiag, Eigenpair, TridiagonalSystem};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid evaluation: right-hand side returned NaN at z = {z}")]
    InvalidEvaluation { z: f64 },
    #[error("stiffness failure: step size underflow at z = {z}")]
    StiffnessFailure { z: f64 },
    #[error("bracket failure: no sign change on [{lo}, {hi}] (f = {f_lo}, {f_hi})")]
    BracketFailure { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
    #[error("eigensolver failure: {0}")]
    EigensolverFailure(String),
}
