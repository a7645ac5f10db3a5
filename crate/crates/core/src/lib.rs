//! Nambu-Poisson dynamics: continuous flows with costate extensions and
//! invariant antisymmetric tensors, point vortices and their three-body
//! reduction, multi-Hamiltonian Nambu flows, reversible discrete maps with a
//! linear costate co-processor, and a conformal-potential check.

pub mod costate;
pub mod discrete;
pub mod error;
pub mod flows;
pub mod nambu;
pub mod qmcheck;
pub mod tensor;
pub mod vortex;

pub use error::{Error, Result};
pub use flows::{IntegratorConfig, Method, Monitor, Trajectory, VectorField};
