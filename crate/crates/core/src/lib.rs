//! Fluidized-bed biomass devolatilization with machine-learned kinetics.
//!
//! The crate couples a 1-D Eulerian gas phase with Lagrangian fuel
//! particles. Devolatilization kinetics come either from the exact
//! mechanism (virtual thermogravimetry plus a single-step fit) or from a
//! trained regressor that maps local conditions to the same parameters.

pub mod coupling;
pub mod fluid;
pub mod kinetics;
pub mod metrics;
pub mod particles;
pub mod surrogate;
pub mod tga;
