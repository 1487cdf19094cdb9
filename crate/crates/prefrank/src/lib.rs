//! Configuration files, the JSONL event log, the evaluation server, and
//! report formatting around `prefrank-core`.

pub mod config;
pub mod format;
pub mod log;
pub mod server;
pub mod service;

pub use config::{ConfigError, ExperimentConfig};
pub use service::{ApiError, Experiment, ServiceError};
