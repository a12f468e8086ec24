//! Rate allocation for multiple video streams sharing several access
//! networks: network and distortion models, allocation policies, and a
//! trace-driven packet simulator.

pub mod config;
pub mod distortion;
pub mod error;
pub mod net_model;
pub mod optimize;
pub mod metrics;
pub mod policy;
pub mod runner;
pub mod scenarios;
pub mod sim;
pub mod traces;

pub use error::{ModelError, ModelResult};
