//! Controlled diffusions under several information structures: simulation,
//! likelihood-ratio reweighting, cost estimation and discrete-time solvers.

pub mod cost;
mod error;
mod estimate;
pub mod fixtures;
pub mod girsanov;
pub mod harness;
pub mod info;
mod linalg;
pub mod policy;
pub mod sde;
pub mod solver;

pub use error::{Error, Result};
pub use estimate::{map_paths, pairwise_sum, EstimateWithError};
