//! Sessions, turn records and plan execution.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::Arc;

use canopy_core::raster::{ChangeMask, ImagePair};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::artifact::{Artifact, ArtifactData, ArtifactKind};
use crate::error::{AgentError, Result};
use crate::planner::{Plan, PlannerKind};
use crate::registry::{Args, Registry};
use crate::tools::ToolContext;

pub const DEFAULT_MAX_STEPS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionConfig {
    pub max_steps: usize,
    /// When set, every path argument must resolve inside this directory.
    pub data_root: Option<PathBuf>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            max_steps: DEFAULT_MAX_STEPS,
            data_root: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallStatus {
    Pending,
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToolCall {
    pub tool: String,
    pub args: Args,
    pub status: CallStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result_ref: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// The result was reused from an earlier identical call.
    pub cached: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComposeMode {
    Template,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Turn {
    /// 1-based.
    pub index: usize,
    pub message: String,
    pub planner: PlannerKind,
    pub plan: Plan,
    pub calls: Vec<ToolCall>,
    pub answer: String,
    pub composer: ComposeMode,
    /// Artifact ids cited by the answer.
    pub citations: Vec<String>,
    /// Degradations on the way: planner or composer fallbacks.
    pub notes: Vec<String>,
}

impl Turn {
    pub fn failed(&self) -> bool {
        self.calls.iter().any(|c| c.status == CallStatus::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct CacheKey {
    tool: String,
    args: String,
    inputs: Vec<String>,
}

/// One conversation: append-only turns and an append-only artifact store.
#[derive(Debug, Clone)]
pub struct Session {
    pub id: String,
    pub config: SessionConfig,
    artifacts: Vec<Arc<Artifact>>,
    by_id: HashMap<String, usize>,
    turns: Vec<Turn>,
    cache: HashMap<CacheKey, String>,
}

impl Session {
    pub fn new(id: impl Into<String>, config: SessionConfig) -> Self {
        Self {
            id: id.into(),
            config,
            artifacts: Vec::new(),
            by_id: HashMap::new(),
            turns: Vec::new(),
            cache: HashMap::new(),
        }
    }

    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }

    pub fn artifacts(&self) -> &[Arc<Artifact>] {
        &self.artifacts
    }

    pub fn artifact(&self, id: &str) -> Option<&Arc<Artifact>> {
        self.by_id.get(id).map(|&i| &self.artifacts[i])
    }

    pub fn latest(&self, kind: ArtifactKind) -> Option<&Arc<Artifact>> {
        self.artifacts.iter().rev().find(|a| a.kind() == kind)
    }

    fn position(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    /// Whether the newest mask was made after the newest pair, so it
    /// belongs to the pair now loaded.
    pub fn has_current_mask(&self) -> bool {
        match (self.latest(ArtifactKind::Mask), self.latest(ArtifactKind::Pair)) {
            (Some(m), Some(p)) => self.position(&m.id) > self.position(&p.id),
            _ => false,
        }
    }

    pub fn loaded_pair(&self) -> Option<&ImagePair> {
        match &self.latest(ArtifactKind::Pair)?.data {
            ArtifactData::Pair { pair, .. } => Some(pair),
            _ => None,
        }
    }

    fn store(&mut self, tool: &str, data: ArtifactData) -> Arc<Artifact> {
        let id = format!("a{}", self.artifacts.len() + 1);
        let artifact = Arc::new(Artifact {
            id: id.clone(),
            tool: tool.to_string(),
            turn: self.turns.len(),
            data,
        });
        self.by_id.insert(id, self.artifacts.len());
        self.artifacts.push(Arc::clone(&artifact));
        artifact
    }

    /// Makes `pair` the loaded pair, outside of any turn.
    pub fn attach_pair(&mut self, pair: ImagePair, truth: Option<ChangeMask>) -> Arc<Artifact> {
        self.store("upload", ArtifactData::Pair { pair, truth })
    }

    /// One-line-per-artifact summary given to the completion model.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        match self.loaded_pair() {
            Some(p) => {
                let _ = writeln!(out, "loaded pair: {} ({}x{})", p.id, p.width(), p.height());
            }
            None => out.push_str("loaded pair: none\n"),
        }
        for a in &self.artifacts {
            let _ = writeln!(out, "{} {} from {} (turn {})", a.id, a.kind(), a.tool, a.turn);
        }
        out
    }

    fn resolve_inputs(&self, registry: &Registry, tool: &str, args: &Args) -> Result<Vec<Arc<Artifact>>> {
        let spec = &registry
            .get(tool)
            .ok_or_else(|| AgentError::UnknownTool(tool.to_string()))?
            .spec;
        spec.inputs
            .iter()
            .map(|slot| {
                let found = match args.get(slot.name).and_then(Value::as_str) {
                    Some(id) => {
                        let a = self
                            .artifact(id)
                            .ok_or_else(|| AgentError::ArtifactNotFound(id.to_string()))?;
                        if a.kind() != slot.kind {
                            return Err(AgentError::InvalidArguments {
                                tool: tool.to_string(),
                                message: format!("{id} is a {} artifact, expected {}", a.kind(), slot.kind),
                            });
                        }
                        a
                    }
                    None => self.latest(slot.kind).ok_or(match slot.kind {
                        ArtifactKind::Pair => AgentError::NoPairLoaded,
                        k => AgentError::MissingInput(k),
                    })?,
                };
                Ok(Arc::clone(found))
            })
            .collect()
    }

    fn run_call(&mut self, registry: &Registry, tool: &str, args: &Args) -> Result<(String, bool)> {
        let args = registry.validate(tool, args)?;
        let inputs = self.resolve_inputs(registry, tool, &args)?;
        let key = CacheKey {
            tool: tool.to_string(),
            args: Value::Object(args.clone()).to_string(),
            inputs: inputs.iter().map(|a| a.id.clone()).collect(),
        };
        if let Some(id) = self.cache.get(&key) {
            return Ok((id.clone(), true));
        }
        let ctx = ToolContext {
            inputs,
            data_root: self.config.data_root.as_deref(),
            pair_id: self.loaded_pair().map(|p| p.id.clone()),
        };
        let handler = registry.get(tool).expect("validated above").handler;
        let data = handler(&ctx, &args)?;
        let artifact = self.store(tool, data);
        self.cache.insert(key, artifact.id.clone());
        Ok((artifact.id.clone(), false))
    }

    /// Runs the steps in order. The first failure stops the plan; later
    /// steps stay `Pending` and earlier artifacts are kept.
    pub fn execute_plan(&mut self, registry: &Registry, plan: &Plan) -> Vec<ToolCall> {
        let mut calls: Vec<ToolCall> = plan
            .steps
            .iter()
            .map(|s| ToolCall {
                tool: s.tool.clone(),
                args: s.args.clone(),
                status: CallStatus::Pending,
                result_ref: None,
                error: None,
                cached: false,
            })
            .collect();
        for call in calls.iter_mut() {
            match self.run_call(registry, &call.tool, &call.args) {
                Ok((id, cached)) => {
                    call.status = CallStatus::Ok;
                    call.result_ref = Some(id);
                    call.cached = cached;
                }
                Err(e) => {
                    log::info!("session {}: {} failed: {e}", self.id, call.tool);
                    call.status = CallStatus::Failed;
                    call.error = Some(e.to_string());
                    break;
                }
            }
        }
        calls
    }

    pub(crate) fn push_turn(&mut self, turn: Turn) {
        self.turns.push(turn);
    }

    fn write_uploads(&self, out: &mut String, before_turn: usize) {
        for a in self
            .artifacts
            .iter()
            .filter(|a| a.tool == "upload" && a.turn == before_turn)
        {
            if let ArtifactData::Pair { pair, truth } = &a.data {
                let _ = writeln!(
                    out,
                    "upload: pair {} ({}x{}{}) -> {}\n",
                    pair.id,
                    pair.width(),
                    pair.height(),
                    if truth.is_some() { ", with reference mask" } else { "" },
                    a.id
                );
            }
        }
    }

    /// Plain-text record of uploads and turns, stable across runs.
    pub fn transcript(&self) -> String {
        let mut out = String::new();
        for t in &self.turns {
            self.write_uploads(&mut out, t.index - 1);
            let _ = writeln!(out, "turn {}", t.index);
            let _ = writeln!(out, "user: {}", t.message);
            let planner = serde_json::to_string(&t.planner).expect("enum serializes");
            let _ = writeln!(
                out,
                "planner: {}{}",
                planner.trim_matches('"'),
                if t.plan.fallback { " (fallback)" } else { "" }
            );
            for c in &t.calls {
                let status = match c.status {
                    CallStatus::Pending => "pending".to_string(),
                    CallStatus::Ok => format!(
                        "ok -> {}{}",
                        c.result_ref.as_deref().unwrap_or("?"),
                        if c.cached { " (cached)" } else { "" }
                    ),
                    CallStatus::Failed => format!("failed: {}", c.error.as_deref().unwrap_or("")),
                };
                let _ = writeln!(out, "  {} {} {status}", c.tool, Value::Object(c.args.clone()));
            }
            let _ = writeln!(out, "answer: {}", t.answer);
            out.push('\n');
        }
        self.write_uploads(&mut out, self.turns.len());
        out
    }
}
