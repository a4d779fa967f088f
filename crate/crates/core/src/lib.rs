//! Federated offline reinforcement learning at desk scale.

pub mod approximator;
pub mod env_suite;
pub mod error;
pub mod federation;
pub mod harness;
pub mod offline_core;
pub mod rectifier;
pub mod rng;
pub mod verify;

pub use error::{Error, Result};
