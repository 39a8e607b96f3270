//! Scenario plumbing: configuration, orchestration, figure presets, the
//! positivity campaign and CSV output.

pub mod campaign;
pub mod config;
pub mod output;
pub mod presets;
pub mod run;

pub use config::{load_config, ScenarioConfig};
pub use output::{aggregate_age_bins, aggregate_classes};
pub use run::{run_scenario, RunOutcome, RunReport};
