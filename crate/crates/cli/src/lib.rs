//! Scenario runner for the multi-attacker data-injection game.

pub mod report;
pub mod run;
pub mod scenario;
pub mod verify;

pub use run::{execute, run, write_artifacts, Artifacts, RunOptions, Status};
