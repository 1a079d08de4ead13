//! Configuration-driven pipelines around the `hyperbranch` solver: operator
//! cache persistence, runs, post-processing exports, oracle references and
//! parameter sweeps.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod store;

pub use config::RunConfig;
pub use error::CliError;
