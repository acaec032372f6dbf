//! Lewis–Riesenfeld invariant, squeezed coherent states and uncertainty
//! dynamics for a particle in a gravitational well on a noncommutative
//! phase space.

pub mod audit;
pub mod error;
pub mod grid;
pub mod invariant;
pub mod opalg;
pub mod observables;
pub mod params;
pub mod report;
pub mod states;
pub mod tdse;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
