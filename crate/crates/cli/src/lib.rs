//! Scenario-file runner for the granular kinetic solver.

pub mod config;
pub mod error;
pub mod run;

pub use config::{Mode, ScenarioFile, ScenarioSpec};
pub use error::{CliError, Result};
pub use run::{run_scenario, Summary};
