//! Scenario-driven front end: parse a JSON scenario, run one command and
//! write its CSV/JSON artifacts.

pub mod commands;
pub mod error;
pub mod output;
pub mod scenario;

use std::path::{Path, PathBuf};

pub use commands::Outcome;
pub use error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    GraphInfo,
    Simulate,
    Certify,
    LimitCheck,
}

/// Loads the scenario, applies the seed override and runs `command`.
/// Output goes to `out`, else the scenario's `output_dir`, else `.`.
pub fn run(command: Command, scenario: &Path, out: Option<&Path>, seed: Option<u64>) -> Result<Outcome> {
    let mut s = scenario::load(scenario)?;
    if let Some(seed) = seed {
        s.override_seed(seed);
    }
    let out: PathBuf = match (out, &s.output_dir) {
        (Some(dir), _) => dir.to_owned(),
        (None, Some(dir)) => dir.into(),
        (None, None) => ".".into(),
    };
    match command {
        Command::GraphInfo => commands::graph_info(&s, &out),
        Command::Simulate => commands::simulate(&s, &out),
        Command::Certify => commands::certify(&s, &out),
        Command::LimitCheck => commands::limit_check(&s, &out),
    }
}
