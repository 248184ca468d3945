use std::fmt;

use kgchain_core::Error as CoreError;
use serde::Serialize;

/// Why a run stopped. Maps onto the process exit code.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunError {
    /// Config rejected before any compute (exit code 2).
    Validation { detail: String },
    /// Numerical abort: near-resonance, budget, divergence (exit code 3).
    Numerical { reason: String, detail: String },
    /// Filesystem trouble (exit code 1).
    Io { detail: String },
}

impl RunError {
    pub fn validation(detail: impl Into<String>) -> Self {
        RunError::Validation { detail: detail.into() }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Validation { .. } => 2,
            RunError::Numerical { .. } => 3,
            RunError::Io { .. } => 1,
        }
    }

    /// Short machine-readable tag.
    pub fn reason(&self) -> &str {
        match self {
            RunError::Validation { .. } => "validation",
            RunError::Numerical { reason, .. } => reason,
            RunError::Io { .. } => "io",
        }
    }

    pub fn detail(&self) -> &str {
        match self {
            RunError::Validation { detail } | RunError::Numerical { detail, .. } | RunError::Io { detail } => detail,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.reason(), self.detail())
    }
}

impl std::error::Error for RunError {}

impl From<CoreError> for RunError {
    fn from(e: CoreError) -> Self {
        let detail = e.to_string();
        let numerical = |reason: &str| RunError::Numerical {
            reason: reason.into(),
            detail: detail.clone(),
        };
        match e {
            CoreError::NearResonance { .. } => numerical("near_resonance"),
            CoreError::BudgetExceeded { .. } => numerical("budget_exceeded"),
            CoreError::NonFinite { .. } => numerical("non_finite"),
            CoreError::ConvergenceFailure { .. } => numerical("convergence_failure"),
            CoreError::EnvelopeFailure { .. } => numerical("sampler_failure"),
            CoreError::UnstableStep { .. } => numerical("unstable_step"),
            CoreError::EmptyLedger | CoreError::EmptyEnsemble | CoreError::ZeroVector => numerical("degenerate"),
            CoreError::Io(_) => RunError::Io { detail },
            _ => RunError::Validation { detail },
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io { detail: e.to_string() }
    }
}

impl From<csv::Error> for RunError {
    fn from(e: csv::Error) -> Self {
        RunError::Io { detail: e.to_string() }
    }
}

impl From<serde_json::Error> for RunError {
    fn from(e: serde_json::Error) -> Self {
        RunError::Io { detail: e.to_string() }
    }
}
