//! Kinetic-limit laboratory.
//!
//! Solves the scaled Vlasov-Fokker-Planck equation with Riesz interactions on
//! periodic grids in three singular scalings (diffusive, high-field and strong
//! magnetic field), solves the matching macroscopic limits, and measures how
//! fast the kinetic solutions approach them.

pub mod error;
pub mod functionals;
pub mod grid;
pub mod harness;
pub mod kinetic;
pub mod macrolimits;
pub mod metrics;
pub mod riesz;
pub mod states;

pub use error::{Error, Result};
