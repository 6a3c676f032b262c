//! Recovery of pairwise geodesic distances from noisy, possibly missing,
//! distance observations.
//!
//! Pipeline: [`spaces`] provides ground truth, [`noise`] the observations,
//! [`cluster`] the comparator table, [`recovery`] turns a comparator into
//! distances, [`algo2`] is the sequential-center alternative, and
//! [`harness`] runs and evaluates experiments.

pub mod algo2;
pub mod cluster;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod noise;
pub mod recovery;
pub mod spaces;

pub use error::{Error, Result};
