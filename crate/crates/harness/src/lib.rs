//! Config-driven experiment runner for comparing decentralized learning and
//! unlearning frameworks.

pub mod config;
pub mod error;
pub mod metrics;
pub mod runner;
pub mod sweep;

pub use config::{ConfigError, ExperimentConfig};
pub use error::HarnessError;
pub use metrics::emit_metrics;
pub use runner::{run_experiment, RunReport};
pub use sweep::{sweep, SweepParam};
