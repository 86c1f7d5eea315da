//! Pipeline driver: configuration, hashed artifacts and one function per
//! subcommand of the `cascade` binary.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod report;

pub use cascade_core;
pub use config::RunConfig;
pub use report::EvaluationReport;

/// Bad input detected before any computation; the binary exits with 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationError(pub String);

impl std::fmt::Display for ValidationError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ValidationError {}

/// Exit code for a failed command: 1 for validation, 2 for computation.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.chain().any(|e| e.downcast_ref::<ValidationError>().is_some()) {
        1
    } else {
        2
    }
}
