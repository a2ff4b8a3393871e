//! Spiking neural network gradient engines over a discrete-time spike
//! response model.
//!
//! One forward model ([`forward`]) feeds three backward passes ([`grad`]):
//! an exact vectorized pass through the reset loop, the reset-free SLAYER
//! approximation, and a step-by-step BPTT reference. [`oracle`] holds the
//! independent checks (finite differences, dense Jacobian solves, closed-form
//! reset products) and [`experiment`] the runs driven by the command line tool.

pub mod error;
pub mod experiment;
pub mod forward;
pub mod grad;
pub mod neuron;
pub mod oracle;
pub mod signal;
pub mod train;

pub use error::{Error, Result};
