//! Tool specifications, argument validation and the registry.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::artifact::{ArtifactData, ArtifactKind};
use crate::error::{AgentError, Result};
use crate::tools::ToolContext;

pub type Args = Map<String, Value>;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ParamType {
    Integer {
        min: i64,
        max: i64,
    },
    Text,
    /// A file path, resolved against the configured data root.
    Path,
    Choice {
        options: Vec<&'static str>,
    },
    /// Id of an artifact in the current session.
    ArtifactRef,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamSpec {
    pub name: &'static str,
    pub description: &'static str,
    #[serde(flatten)]
    pub ty: ParamType,
    pub required: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub default: Option<Value>,
}

impl ParamSpec {
    pub fn required(name: &'static str, description: &'static str, ty: ParamType) -> Self {
        Self {
            name,
            description,
            ty,
            required: true,
            default: None,
        }
    }

    pub fn optional(name: &'static str, description: &'static str, ty: ParamType, default: Option<Value>) -> Self {
        Self {
            name,
            description,
            ty,
            required: false,
            default,
        }
    }
}

/// An artifact a tool consumes. When the argument named `name` is absent and
/// `implicit` is set, the session's latest artifact of `kind` is used.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputSlot {
    pub name: &'static str,
    pub kind: ArtifactKind,
    pub implicit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToolSpec {
    pub name: &'static str,
    pub description: &'static str,
    pub params: Vec<ParamSpec>,
    pub inputs: Vec<InputSlot>,
    pub result: ArtifactKind,
}

pub type Handler = fn(&ToolContext<'_>, &Args) -> Result<ArtifactData>;

#[derive(Clone)]
pub struct Tool {
    pub spec: ToolSpec,
    pub handler: Handler,
}

impl ToolSpec {
    /// Checks `args` against the parameters and returns them with defaults
    /// filled in, which is the canonical form used for caching.
    pub fn validate(&self, args: &Args) -> Result<Args> {
        let invalid = |message: String| AgentError::InvalidArguments {
            tool: self.name.to_string(),
            message,
        };
        for key in args.keys() {
            if !self.params.iter().any(|p| p.name == key) {
                return Err(invalid(format!("unknown argument {key}")));
            }
        }
        let mut out = Args::new();
        for p in &self.params {
            let value = match (args.get(p.name), &p.default) {
                (Some(Value::Null) | None, Some(d)) => d.clone(),
                (Some(Value::Null) | None, None) if p.required => {
                    return Err(invalid(format!("missing required argument {}", p.name)))
                }
                (Some(Value::Null) | None, None) => continue,
                (Some(v), _) => v.clone(),
            };
            let ok = match &p.ty {
                ParamType::Integer { min, max } => value.as_i64().is_some_and(|v| (*min..=*max).contains(&v)),
                ParamType::Text | ParamType::Path | ParamType::ArtifactRef => {
                    value.as_str().is_some_and(|s| !s.is_empty())
                }
                ParamType::Choice { options } => value.as_str().is_some_and(|s| options.contains(&s)),
            };
            if !ok {
                return Err(invalid(format!("argument {} has invalid value {value}", p.name)));
            }
            out.insert(p.name.to_string(), value);
        }
        Ok(out)
    }
}

/// Tools by name. Immutable once built; listing order is alphabetical.
#[derive(Clone, Default)]
pub struct Registry {
    tools: BTreeMap<&'static str, Tool>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, tool: Tool) -> Result<()> {
        if self.tools.contains_key(tool.spec.name) {
            return Err(AgentError::DuplicateTool(tool.spec.name.to_string()));
        }
        self.tools.insert(tool.spec.name, tool);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tool> {
        self.tools.get(name)
    }

    pub fn specs(&self) -> Vec<&ToolSpec> {
        self.tools.values().map(|t| &t.spec).collect()
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.tools.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    /// Validated, canonical arguments for a call to `tool`.
    pub fn validate(&self, tool: &str, args: &Args) -> Result<Args> {
        self.get(tool)
            .ok_or_else(|| AgentError::UnknownTool(tool.to_string()))?
            .spec
            .validate(args)
    }
}
