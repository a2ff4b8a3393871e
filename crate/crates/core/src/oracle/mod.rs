//! Independent checks for the backward engines.
//!
//! - [`fd`]: central finite differences on the smooth forward model.
//! - [`ift`]: dense Jacobians of a layer's implicit equations and their solve.
//! - [`chi`]: closed forms of the LIF reset products and the decay bound.

pub mod chi;
pub mod fd;
pub mod ift;

pub use chi::{
    check_decay_bound, chi_closed_form, chi_recursive, clamp_fprimes, gamma_closed_form, gamma_recursive,
    DecayBoundParams, DecayReport,
};
pub use fd::{finite_diff_grad, FD_MAX_WEIGHTS};
pub use ift::{build_ift_jacobians, ift_jacobians_from_fprimes, solve_ift_dense, DenseJacobians, DENSE_CAP};
