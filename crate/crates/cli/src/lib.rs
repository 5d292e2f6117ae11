//! Configuration-driven experiments on top of the `fraclap` library: parsing and
//! validation of run configurations, orchestration, and artifact emission.

pub mod config;
pub mod oracles;
pub mod output;
pub mod run;

pub use config::{parse_config, ConfigError, ConfigErrorKind, RunConfig, Subcommand};
pub use run::{execute, RunOptions, RunOutput};
