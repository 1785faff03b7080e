//! Scripted double-slit experiments with cavity which-path markers.

pub mod config;
pub mod report;
mod run;
pub mod script;

pub use config::{parse_config, ConfigError, ScenarioConfig, ScenarioId};
pub use report::{canonical_json, Derived, DistributionSummary, ScenarioReport, StepLog, FORMAT_VERSION};
pub use run::{
    condition, cross_factor, cross_factor_closed_form, cross_factor_printed, max_relative_deviation, run_scenario,
    run_scenario_a, run_scenario_b, run_scenario_c, run_scenario_d, run_scenario_e, single_slit_density,
};
pub use script::{BranchTrace, FieldPrep, Op, Script, Step};
