//! Nonlinear invariant causal prediction.
//!
//! Given data from several environments, the toolkit tests which predictor
//! subsets render the target invariant across environments and intersects
//! the accepted subsets to obtain a conservative estimate of the causal
//! parents of the target.

pub mod bench;
pub mod citests;
pub mod data;
pub mod error;
pub mod icp;
pub mod io;
pub mod regress;
pub mod rng;
pub mod scm;
pub mod stattests;

pub use data::Dataset;
pub use error::{Error, Result};
