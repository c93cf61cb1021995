//! Sequential subspace optimization boosting for stochastic optimizers.
//!
//! A baseline stochastic method (SGD with momentum, Nesterov, AdaGrad) takes
//! `ell` steps; the cumulative step is then pushed into a bounded direction
//! buffer and the objective is minimized by nonlinear conjugate gradient over
//! the affine subspace `x + P·alpha` spanned by that buffer plus optional
//! anchor, momentum and gradient directions. The realized outer step then
//! replaces the newest buffer entry and the loop continues.
//!
//! The crate is organised bottom-up:
//!
//! - [`objective`]: tanh MLPs with MSE loss and L2 weight decay, plus a
//!   finite-difference gradient oracle.
//! - [`baselines`]: the stochastic inner optimizers.
//! - [`subspace`]: direction buffer, anchors, momentum direction and
//!   assembly of the subspace matrix.
//! - [`subspace_opt`]: Polak-Ribiere+ CG with a strong-Wolfe line search on
//!   the restricted objective.
//! - [`boost`]: the outer loop and its trace records.
//! - [`data`]: datasets, the synthetic regression generator and IDX files.

pub mod baselines;
pub mod boost;
pub mod data;
pub mod linalg;
pub mod objective;
pub mod subspace;
pub mod subspace_opt;

pub use baselines::{Baseline, BaselineConfig, BaselineError, BaselineState, Method};
pub use boost::{BoostConfig, BoostError, Seboost, TraceRecord};
pub use data::{Dataset, DataError};
pub use objective::{Activation, Batch, Mlp, MlpSpec, Objective, ObjectiveError};
pub use subspace::{Anchor, ColumnKind, DirectionBuffer, MomentumDirection, SubspaceMatrix};
pub use subspace_opt::{CgConfig, CgResult, CgStatus, SubspaceProblem};
