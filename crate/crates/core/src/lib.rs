//! Simulation and estimation toolkit for a driven dissipative qubit embedded in
//! the upper two levels of a transmon, near the exceptional point of its
//! effective non-Hermitian Hamiltonian.
//!
//! Rates are angular and expressed in μs⁻¹; times are in μs.

pub mod eigen;
pub mod error;
pub mod estimation;
pub mod evolution;
pub mod io;
pub mod ode;
pub mod trajectories;
pub mod types;

pub use error::{Error, Result};
pub use types::{bloch_from_block, state_from_angles, BlochVector, LinRange, QubitBlock, QubitState, SystemParams};
