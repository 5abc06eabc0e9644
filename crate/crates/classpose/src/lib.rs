//! Data files, checkpoints, reports and experiment drivers for
//! [`classpose_core`].
//!
//! The core crate holds all of the mathematics; this crate adds what needs
//! an operating system: TOML configuration, binary dataset and checkpoint
//! files, CSV/JSON/PGM reports and the `classpose` command-line tool.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod config;
pub mod dataset_io;
pub mod experiment;
pub mod fixtures;
pub mod models;
pub mod report;

use std::fmt;

pub use config::{ExperimentConfig, ModelKind};
pub use models::AnyModel;

/// Invalid user input: a malformed config, an incompatible model and group,
/// a corrupt file. Maps to exit code 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationError(pub String);

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ValidationError {}

/// A run that completed but missed one of its acceptance checks.
/// Maps to exit code 3.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AcceptanceFailure(pub Vec<String>);

impl fmt::Display for AcceptanceFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} check(s) failed: {}", self.0.len(), self.0.join("; "))
    }
}

impl std::error::Error for AcceptanceFailure {}

pub mod exit_code {
    pub const OK: i32 = 0;
    pub const VALIDATION: i32 = 1;
    pub const RUNTIME: i32 = 2;
    pub const ACCEPTANCE: i32 = 3;
}

/// Exit code for an error returned by one of the commands.
pub fn exit_code_for(err: &anyhow::Error) -> i32 {
    if err.chain().any(|e| e.is::<ValidationError>()) {
        exit_code::VALIDATION
    } else if err.chain().any(|e| e.is::<AcceptanceFailure>()) {
        exit_code::ACCEPTANCE
    } else {
        exit_code::RUNTIME
    }
}

/// Shorthand for returning a [`ValidationError`].
pub(crate) fn invalid<T>(msg: impl Into<String>) -> anyhow::Result<T> {
    Err(ValidationError(msg.into()).into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use anyhow::Context;

    #[test]
    fn exit_codes_follow_the_error_chain() {
        let v: anyhow::Result<()> = invalid("bad");
        assert_eq!(exit_code_for(&v.context("loading").unwrap_err()), 1);
        let a = anyhow::Error::new(AcceptanceFailure(vec!["hit-rate".into()]));
        assert_eq!(exit_code_for(&a), 3);
        assert_eq!(exit_code_for(&anyhow::anyhow!("disk full")), 2);
    }
}
