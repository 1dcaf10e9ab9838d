//! Numerical laboratory for spatially coupled constraint satisfaction ensembles.
//!
//! The crate covers random K-SAT, Q-colouring and K-XORSAT chains:
//!
//! * [`ensembles`] samples individual, coupled and interpolating instances.
//! * [`message_passing`] runs zero-temperature min-sum warning propagation and
//!   evaluates the Bethe energy.
//! * [`sp_population`] solves the survey propagation equations by population
//!   dynamics and estimates the complexity.
//! * [`scalar_field`] handles the large-K / large-Q scalar fixed-point equations and
//!   traces van der Waals curves.
//! * [`density_evolution`] covers leaf removal, the pure-literal rule and Q-core peeling.
//! * [`thresholds`] extracts thresholds by scanning and bisection.
//! * [`oracle`] holds exact ground-state solvers for tiny instances.

pub mod density_evolution;
pub mod ensembles;
pub mod error;
pub mod message_passing;
pub mod oracle;
pub mod rng;
pub mod scalar_field;
pub mod sp_population;
pub mod stats;
pub mod thresholds;

pub use error::{Error, Result};
