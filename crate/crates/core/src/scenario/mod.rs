//! Scenario files and the simulation runner behind `sdb simulate`.

pub mod report;
pub mod run;
pub mod spec;

use thiserror::Error;

pub use report::{ClientReport, ScenarioReport, SessionReport, SCHEMA_VERSION};
pub use run::{run_scenario, synthetic_artifact, RunOptions, Simulation};
pub use spec::{
    bundled_names, Action, CloudSeed, Expectation, FaultSpec, FileSeed, OsSeed, RogueSpec,
    ScenarioSpec, SegmentName, TimedAction, TopologySpec, UplinkSpec, UserSeed,
};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("{0}")]
    Runtime(String),
}
