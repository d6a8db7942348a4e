use pmdss_core::lifecycle::LifecycleError;
use pmdss_core::{EventKind, EvmError, ProjectId, ProjectPhase, Role};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("validation failed: {0}")]
    ValidationFailed(String),
    #[error("project `{0}` already exists")]
    AlreadyExists(ProjectId),
    #[error("unknown project `{0}`")]
    UnknownProject(ProjectId),
    #[error("{0}")]
    NotFound(String),
    #[error("phase violation: {0}")]
    PhaseViolation(String),
    #[error("stale write: expected revision {expected}, current revision is {actual}")]
    ConflictingRevision { expected: u64, actual: u64 },
    #[error("{0}")]
    MethodNotAllowed(String),
    #[error("project has no baseline")]
    NoBaseline,
    #[error("project has no progress snapshot")]
    NoSnapshot,
    #[error("event {event} is not allowed in phase {phase}")]
    IllegalTransition {
        phase: ProjectPhase,
        event: EventKind,
    },
    #[error("project is in terminal phase {0}")]
    TerminalState(ProjectPhase),
    #[error("a role header is required")]
    MissingRole,
    #[error("role {role} may not record {event}")]
    Unauthorized { role: Role, event: EventKind },
    #[error(transparent)]
    Evm(EvmError),
    #[error("storage error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt storage for project `{project}`: {reason}")]
    Corrupt { project: String, reason: String },
}

impl ServiceError {
    /// Stable machine-readable code, used in HTTP error bodies and CLI output.
    pub fn code(&self) -> &'static str {
        use ServiceError::*;
        match self {
            ValidationFailed(_) => "validation_failed",
            AlreadyExists(_) => "already_exists",
            UnknownProject(_) => "unknown_project",
            NotFound(_) => "not_found",
            PhaseViolation(_) => "phase_violation",
            ConflictingRevision { .. } => "conflicting_revision",
            MethodNotAllowed(_) => "method_not_allowed",
            NoBaseline => "no_baseline",
            NoSnapshot => "no_snapshot",
            IllegalTransition { .. } => "illegal_transition",
            TerminalState(_) => "terminal_state",
            MissingRole | Unauthorized { .. } => "unauthorized",
            Evm(EvmError::UndefinedIndex(_)) => "undefined_index",
            Evm(EvmError::MissingEstimate) => "missing_estimate",
            Evm(EvmError::UnknownTask(_)) | Evm(EvmError::Invalid { .. }) => "validation_failed",
            Evm(EvmError::Overflow(_)) => "overflow",
            Io(_) | Corrupt { .. } => "internal",
        }
    }

    /// Input or state errors, as opposed to internal failures.
    pub fn is_client_error(&self) -> bool {
        !matches!(self, ServiceError::Io(_) | ServiceError::Corrupt { .. })
    }
}

impl From<EvmError> for ServiceError {
    fn from(e: EvmError) -> Self {
        match e {
            EvmError::Invalid { .. } | EvmError::UnknownTask(_) => {
                ServiceError::ValidationFailed(e.to_string())
            }
            other => ServiceError::Evm(other),
        }
    }
}

impl From<LifecycleError> for ServiceError {
    fn from(e: LifecycleError) -> Self {
        use LifecycleError as L;
        match e {
            L::IllegalTransition { phase, event } => {
                ServiceError::IllegalTransition { phase, event }
            }
            L::TerminalState(p) => ServiceError::TerminalState(p),
            L::PhaseViolation(_) => ServiceError::PhaseViolation(e.to_string()),
            L::NoBaseline => ServiceError::NoBaseline,
            L::BaselineLocked(_) => ServiceError::PhaseViolation(e.to_string()),
            L::Evm(inner) => inner.into(),
            L::TimeWentBackwards { .. }
            | L::SnapshotOrder { .. }
            | L::ProjectMismatch { .. }
            | L::RebaselineDropsTask(_) => ServiceError::ValidationFailed(e.to_string()),
        }
    }
}

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;
