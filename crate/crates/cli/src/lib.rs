//! Scenario-driven front end for `contact-core`: strict TOML scenarios, a small
//! expression language for potentials and frequencies, diagnostics, reports and plots.

pub mod batch;
pub mod error;
pub mod expr;
pub mod plot;
pub mod report;
pub mod runner;
pub mod scenario;

pub use error::{exit, CliError};
pub use expr::{parse_expression, ExprError, Expression};
pub use report::{DiagnosticResult, Report};
pub use runner::{run_scenario, write_outputs, Outcome, RunOptions};
pub use scenario::{parse_scenario, ConfigError, ScenarioConfig};
