//! Joint sensing-time, association and power allocation for sliced C-RAN
//! deployments that share spectrum with a licensed incumbent.

pub mod association;
pub mod cli;
pub mod error;
pub mod mathcore;
pub mod model;
pub mod orchestrator;
pub mod power;
pub mod rng;
pub mod scenario;
pub mod sensing;
pub mod sensing_opt;

pub use error::{Error, InfeasibleCause, Result, Step};
