//! Scenario runner for the GHZ purification engines: scenario files,
//! curve sweeps, branch dumps and Monte Carlo estimates.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{cmd_curves, cmd_explain, cmd_mc, cmd_run, Verdict};
pub use config::{Engine, InputSpec, Overrides, ScenarioConfig, Sweep};
pub use error::{CliError, ConfigError};
