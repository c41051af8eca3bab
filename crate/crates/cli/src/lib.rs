//! Scenario-driven batch front end: parse TOML scenarios, run identity
//! suites, side-condition checks and uniqueness experiments, and write
//! JSON, CSV and SVG artifacts.

pub mod config;
pub mod error;
pub mod plot;
pub mod run;

pub use config::{load_scenario, parse_scenario, Scenario};
pub use error::{CliError, Result};
pub use run::{report_dir, run_scenario, write_artifacts, Artifacts, Overrides, Verb, EXIT_FAIL, EXIT_INPUT, EXIT_PASS};
