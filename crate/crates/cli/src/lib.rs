//! Configuration, caching and orchestration behind the `fewg` binary.

pub mod cache;
pub mod config;
pub mod run;

pub use cache::ModeCache;
pub use config::{ConfigError, RunConfig, Task};
pub use run::{run, RunError, RunOutcome, RunRequest, EXIT_CONFIG, EXIT_FAILURE, EXIT_OK, EXIT_PARTIAL};
