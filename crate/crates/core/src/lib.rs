//! Numerical index theory for linear Hamiltonian systems z' = J B(t) z:
//! Maslov-type indices of the fundamental symplectic path, mean-index
//! intervals for non-periodic coefficients, rotation numbers in dimension 2,
//! and Fredholm tests for the operator -J d/dt - B.

pub mod error;
pub mod fredholm;
pub mod linalg;
pub mod maslov;
pub mod mean_index;
pub mod propagate;
pub mod report;
pub mod rotation;
pub mod systems;
pub mod testkit;

pub use error::{Error, Result};
