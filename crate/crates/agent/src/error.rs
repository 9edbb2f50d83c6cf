use thiserror::Error;

use crate::artifact::ArtifactKind;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("tool {0} is already registered")]
    DuplicateTool(String),
    #[error("unknown tool {0}")]
    UnknownTool(String),
    #[error("tool {tool}: {message}")]
    InvalidArguments { tool: String, message: String },
    #[error("plan has {len} steps, the limit is {max}")]
    PlanTooLong { len: usize, max: usize },
    #[error("completion endpoint unreachable: {0}")]
    EndpointUnreachable(String),
    #[error("completion endpoint error: {0}")]
    Endpoint(String),
    #[error("could not parse plan: {0}")]
    PlanParse(String),
    #[error("answer quotes {0}, which no cited artifact contains")]
    GroundingViolation(String),
    #[error("no pair loaded")]
    NoPairLoaded,
    #[error("the loaded pair has no reference mask")]
    NoReferenceMask,
    #[error("no {0} artifact available")]
    MissingInput(ArtifactKind),
    #[error("artifact {0} not found")]
    ArtifactNotFound(String),
    #[error("path {0} escapes the data root")]
    PathEscape(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] canopy_core::Error),
}

pub type Result<T, E = AgentError> = std::result::Result<T, E>;
