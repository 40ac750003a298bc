//! Experiment runner: configs in, results, ledger rows and plot scripts out.

pub mod config;
pub mod experiments;
pub mod oracles;
pub mod report;

use std::path::Path;

pub use config::{ConfigError, ExperimentConfig};
pub use experiments::{find, registry, Experiment, Metric, Outcome, RunError};

/// Process exit codes of `driftlab run`.
pub mod exit {
    pub const PASS: i32 = 0;
    pub const CRITERION_FAILED: i32 = 1;
    pub const CONFIG_ERROR: i32 = 2;
    pub const BUDGET_EXHAUSTED: i32 = 3;
    /// Solver breakdown or an unwritable output directory.
    pub const RUNTIME_ERROR: i32 = 4;
}

/// Runs the experiment named in `cfg` and writes its artifacts into `dir`.
/// Nothing is written unless the experiment completes.
pub fn execute(cfg: &ExperimentConfig, dir: &Path) -> Result<Outcome, RunError> {
    let exp = find(&cfg.experiment)?;
    let out = exp.run(cfg)?;
    report::write_artifacts(cfg, &out, dir)?;
    Ok(out)
}

pub fn exit_code(result: &Result<Outcome, RunError>) -> i32 {
    match result {
        Ok(out) if out.passed() => exit::PASS,
        Ok(_) => exit::CRITERION_FAILED,
        Err(RunError::Config(_)) => exit::CONFIG_ERROR,
        Err(RunError::Budget(_)) => exit::BUDGET_EXHAUSTED,
        Err(RunError::Numerical(_) | RunError::Io(_)) => exit::RUNTIME_ERROR,
    }
}
