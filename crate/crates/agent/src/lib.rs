//! Conversational orchestration over the forest change tools: a registry of
//! typed tools, planners that turn messages into validated plans, an
//! executor that records artifacts per session, and a composer whose answers
//! only quote numbers found in those artifacts.

pub mod artifact;
pub mod compose;
pub mod error;
pub mod llm;
pub mod orchestrator;
pub mod paths;
pub mod planner;
pub mod registry;
pub mod session;
pub mod tools;

pub use artifact::{Artifact, ArtifactData, ArtifactKind};
pub use error::{AgentError, Result};
pub use orchestrator::Agent;
pub use planner::{Plan, PlanStep, PlannerKind};
pub use registry::Registry;
pub use session::{CallStatus, ComposeMode, Session, SessionConfig, ToolCall, Turn};
