//! Loads discretized multivariate probability distributions into the real
//! amplitudes of a simulated quantum register, using a vine-copula-structured
//! circuit ansatz trained progressively block by block.
//!
//! The pieces:
//!
//! - [`statevec`]: real-amplitude statevector engine for RY/CRY circuits
//!   with exact reverse-mode gradients,
//! - [`ansatz`]: ring / hierarchical / bivariate block constructors,
//!   resource accounting, and depth schedules,
//! - [`vine`]: Kendall's tau, spanning-tree selection, and D-/C-/R-vine
//!   structures,
//! - [`target`]: discretization of samples and analytic densities into
//!   probability tables and target amplitudes,
//! - [`train`]: ADAM with patience scheduling and the progressive
//!   train-through-the-vine loop,
//! - [`dla`]: dynamical Lie algebra closures verifying the expressivity of
//!   the block generator sets.

pub mod ansatz;
pub mod dla;
pub mod error;
pub mod statevec;
pub mod target;
pub mod train;
pub mod vine;

pub use error::{Error, Result};
