//! Continuous-control policy optimization on planar-arm manipulation tasks.
pub mod cg;
pub mod env;
pub mod error;
pub mod estimation;
pub mod naf;
pub mod nn;
pub mod policy;
pub mod rollout;
pub mod seeding;
pub mod trpo;
pub mod vpg;
pub use error::{Error, Result};
