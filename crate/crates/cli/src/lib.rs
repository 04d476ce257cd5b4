//! Command-line tools and the live session service for the crossing
//! experiment.

use std::path::{Path, PathBuf};

use spsim_core::experiment::Scenario;

pub mod batch;
pub mod bench;
pub mod estimate;
pub mod server;
pub mod wire;

/// Where the log of one trial is written under an output directory.
pub fn log_path(out: &Path, session: &str, trial_index: usize, scenario: Scenario) -> PathBuf {
    out.join("logs").join(session).join(format!("trial{trial_index:02}_{}.jsonl", scenario.label()))
}
