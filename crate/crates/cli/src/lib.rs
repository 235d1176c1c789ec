//! Config-driven experiment runner for `stablesgd`: repeated training runs
//! with pruning, particle-system rate experiments, result tables and data
//! installation.

pub mod config;
pub mod fetch;
pub mod report;
pub mod run;
pub mod sde_run;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    /// A run failed, or there was nothing to report.
    pub const FAILURE: i32 = 1;
    /// The configuration could not be parsed or validated.
    pub const CONFIG: i32 = 2;
}
