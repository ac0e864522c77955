//! Protected qubits built from continuously driven multi-level ions.
//!
//! The crate constructs dressed-state (dark) qubit subspaces of driven
//! Λ-type level schemes, checks them against magnetic and drive-amplitude
//! noise, estimates error budgets, simulates single-qubit gates on the
//! protected pair and evaluates AC magnetometry with it.
//!
//! Units: every frequency, Rabi amplitude and Zeeman shift is an angular
//! frequency in rad/s; the magnetic field enters as mu_B B in rad/s. Times are
//! in seconds. Desk-scale checks simply use Omega = 1.

pub mod atomic;
pub mod dynamics;
pub mod error;
pub mod errors;
pub mod gates;
pub mod hamiltonian;
pub mod linalg;
pub mod sensing;
pub mod subspace;

pub use error::{Error, Result};
pub use linalg::{CMat, CVec, C64};

/// Landé factor of D3/2.
pub const G_D: f64 = 0.8;
/// Landé factor of P1/2.
pub const G_P: f64 = 2.0 / 3.0;
