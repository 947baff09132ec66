//! Exact verification and discovery of multiple theta function identities.

pub mod linalg;
pub mod model;
pub mod parser;
pub mod contiguous;
pub mod parallelepiped;
pub mod qseries;
pub mod coeff;
pub mod prover;
