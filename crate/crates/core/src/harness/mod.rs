//! Config-driven scenario runner: parsing, seeding, observers and artifacts.

pub mod config;
pub mod output;
pub mod scenario;
pub mod sweep;

pub use self::config::{load_config, load_config_with, Model, RawConfig, Scenario, ScenarioConfig};
pub use self::scenario::{analyze, run_scenario, RunSummary};
pub use self::sweep::{sweep, SweepSummary};
pub use crate::seeding::sample_initial;
