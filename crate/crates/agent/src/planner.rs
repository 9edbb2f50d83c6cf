//! Turning a message into a validated plan.

use std::collections::BTreeSet;

use canopy_core::caption::normalize_tokens;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{AgentError, Result};
use crate::llm::{ChatMessage, CompletionClient};
use crate::registry::{Args, Registry};
use crate::session::Session;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerKind {
    #[serde(alias = "det")]
    Deterministic,
    Llm,
}

/// What the user asked about; steers which facts the answer leads with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intent {
    Amount,
    Location,
    Describe,
    Overlay,
    Evaluate,
}

const INTENT_WORDS: [(Intent, &[&str]); 5] = [
    (Intent::Amount, &["lost", "loss", "much", "percent", "percentage"]),
    (Intent::Location, &["where", "location", "located"]),
    (Intent::Describe, &["caption", "captions", "describe", "description"]),
    (Intent::Overlay, &["overlay", "show", "visualize", "visualise"]),
    (Intent::Evaluate, &["evaluate", "score", "accuracy"]),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub tool: String,
    #[serde(default)]
    pub args: Args,
}

impl PlanStep {
    pub fn new(tool: &str) -> Self {
        Self {
            tool: tool.to_string(),
            args: Args::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Plan {
    pub steps: Vec<PlanStep>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
    /// Produced by the keyword planner after the completion model failed.
    pub fallback: bool,
    pub focus: Vec<Intent>,
}

impl Plan {
    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Checks every step against the registry and the length cap, filling in
/// default arguments. Nothing runs unless the whole plan passes.
pub fn validate_plan(plan: &mut Plan, registry: &Registry, max_steps: usize) -> Result<()> {
    if plan.steps.len() > max_steps {
        return Err(AgentError::PlanTooLong {
            len: plan.steps.len(),
            max: max_steps,
        });
    }
    for step in &mut plan.steps {
        step.args = registry.validate(&step.tool, &step.args)?;
    }
    Ok(())
}

pub fn intents(message: &str) -> Vec<Intent> {
    let tokens: BTreeSet<String> = normalize_tokens(message).into_iter().collect();
    INTENT_WORDS
        .iter()
        .filter(|(_, words)| words.iter().any(|w| tokens.contains(*w)))
        .map(|(i, _)| *i)
        .collect()
}

/// Keyword-rule planner. Needs no network and gives the same plan for the
/// same message and session state.
pub fn plan_deterministic(message: &str, session: &Session, registry: &Registry) -> Plan {
    let focus = intents(message);
    let has = |i: Intent| focus.contains(&i);
    let mut steps = Vec::new();
    if !focus.is_empty() && !session.has_current_mask() {
        steps.push(PlanStep::new("detect_changes"));
    }
    if has(Intent::Amount) || has(Intent::Location) || has(Intent::Describe) {
        steps.push(PlanStep::new("compute_stats"));
    }
    if has(Intent::Describe) {
        steps.push(PlanStep::new("generate_captions"));
    }
    if has(Intent::Overlay) {
        steps.push(PlanStep::new("render_overlay"));
    }
    if has(Intent::Evaluate) {
        steps.push(PlanStep::new("evaluate_pair"));
    }
    let mut plan = Plan {
        steps,
        rationale: None,
        fallback: false,
        focus,
    };
    validate_plan(&mut plan, registry, usize::MAX).expect("keyword plans use builtin tools with default arguments");
    plan
}

pub const SYSTEM_PREAMBLE: &str = include_str!("../assets/system_prompt.txt");
pub const FEW_SHOT: &str = include_str!("../assets/few_shot_v1.txt");

/// Messages sent to the completion model for `message`.
pub fn planning_prompt(message: &str, session: &Session, registry: &Registry) -> Vec<ChatMessage> {
    let specs = serde_json::to_string_pretty(&registry.specs()).expect("specs serialize");
    let system = format!(
        "{}\nTools:\n{specs}\n\nAt most {} steps per plan.\n\n{}",
        SYSTEM_PREAMBLE.trim_end(),
        session.config.max_steps,
        FEW_SHOT.trim_end()
    );
    let user = format!("Session:\n{}\nMessage: {message}", session.summary());
    vec![ChatMessage::system(system), ChatMessage::user(user)]
}

/// Extracts the steps from the first fenced `plan` block of a reply.
pub fn parse_plan_block(reply: &str) -> Result<Vec<PlanStep>> {
    let start = reply
        .find("```plan")
        .ok_or_else(|| AgentError::PlanParse("no ```plan block in reply".into()))?;
    let body = &reply[start + "```plan".len()..];
    let end = body
        .find("```")
        .ok_or_else(|| AgentError::PlanParse("unterminated ```plan block".into()))?;
    let value: Value = serde_json::from_str(body[..end].trim()).map_err(|e| AgentError::PlanParse(e.to_string()))?;
    let list = match value {
        Value::Array(list) => list,
        Value::Object(mut o) => match o.remove("steps") {
            Some(Value::Array(list)) => list,
            _ => return Err(AgentError::PlanParse("expected a list of {tool, args} records".into())),
        },
        _ => return Err(AgentError::PlanParse("expected a list of {tool, args} records".into())),
    };
    list.into_iter()
        .map(|v| serde_json::from_value::<PlanStep>(v).map_err(|e| AgentError::PlanParse(e.to_string())))
        .collect()
}

/// Asks the model for a plan, retrying once with the rejection reason. On a
/// second failure or an endpoint error the keyword planner answers instead
/// and the plan is flagged as a fallback; the reason is returned with it.
pub fn plan_with_llm(
    message: &str,
    session: &Session,
    registry: &Registry,
    client: &dyn CompletionClient,
) -> (Plan, Option<String>) {
    let mut messages = planning_prompt(message, session, registry);
    let mut last_error = String::new();
    for attempt in 0..2 {
        let reply = match client.complete(&messages) {
            Ok(r) => r,
            Err(e) => {
                last_error = e.to_string();
                break;
            }
        };
        let parsed = parse_plan_block(&reply).and_then(|steps| {
            let mut plan = Plan {
                steps,
                rationale: None,
                fallback: false,
                focus: intents(message),
            };
            validate_plan(&mut plan, registry, session.config.max_steps)?;
            Ok(plan)
        });
        match parsed {
            Ok(plan) => return (plan, None),
            Err(e) => {
                log::info!("plan attempt {} rejected: {e}", attempt + 1);
                last_error = e.to_string();
                messages.push(ChatMessage::assistant(reply));
                messages.push(ChatMessage::user(format!(
                    "That plan was rejected: {e}. Reply with a corrected ```plan block."
                )));
            }
        }
    }
    let mut plan = plan_deterministic(message, session, registry);
    plan.fallback = true;
    (plan, Some(format!("planner fell back to keyword rules: {last_error}")))
}
