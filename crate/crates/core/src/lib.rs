//! Activity shaping for networks of recurrent events.
//!
//! Users' events follow a multivariate Hawkes process with exponential kernel.
//! The crate maps a constant exogenous rate vector `λ⁰` to the expected overall
//! intensity `μ(t) = Ψ(t) λ⁰` without forming `Ψ(t)`. It then chooses `λ⁰`
//! under a linear budget to optimize one of several concave utilities of `μ(t)`.
//!
//! Modules:
//! - [`model`]: domain types and validation
//! - [`psi`]: `Ψ(t)` products, exponential action, GMRES, oracles
//! - [`simulate`]: exact thinning simulation with branching labels
//! - [`estimate`]: maximum-likelihood fitting and bandwidth selection
//! - [`shape`]: shaping objectives, budget projection, projected gradient
//! - [`eval`]: baselines and evaluation schemes

// `!(x > 0.0)` is the NaN-rejecting form used throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub mod estimate;
pub mod eval;
pub mod model;
pub mod psi;
pub mod shape;
pub mod simulate;
pub mod sparse;

pub use model::{
    BudgetSpec, Cascade, Event, EventLog, ExogenousIntensity, HawkesNetwork, IntensityCurve, ModelError,
    ShapingTask, TaskKind,
};
pub use psi::{PsiError, PsiOptions};
pub use sparse::SparseMatrix;
