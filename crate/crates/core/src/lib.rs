//! Numerical toolkit for the M/M/c/K retrial queue whose blocked and
//! retrying customers may abandon, treated as a level-dependent QBD in the
//! number of orbiting customers.

pub mod asymptotics;
pub mod cli;
pub mod error;
pub mod expansion;
pub mod model;
pub mod rate_matrix;

pub use error::{Error, Result};
