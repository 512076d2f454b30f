//! Online imitation learning for runtime configuration of heterogeneous
//! big.LITTLE processors, with the models, search, baselines and harness
//! needed to evaluate it against a synthetic plant.

pub mod config_space;
pub mod error;
pub mod rl;
pub mod rng;
pub mod sim;
pub mod governors;
pub mod harness;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod oracle;
pub mod policy;
pub mod workload;

pub use config_space::{ConfigSpace, Configuration, Knob};
pub use error::{Error, Result};
