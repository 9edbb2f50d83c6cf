use std::sync::Arc;

use crate::compose::{compose_llm, compose_template};
use crate::llm::CompletionClient;
use crate::planner::{plan_deterministic, plan_with_llm, PlannerKind};
use crate::registry::Registry;
use crate::session::{ComposeMode, Session, Turn};
use crate::tools::builtin_registry;

/// Shared, immutable turn runner: the tool registry plus an optional
/// completion client.
#[derive(Clone)]
pub struct Agent {
    registry: Arc<Registry>,
    client: Option<Arc<dyn CompletionClient>>,
}

impl Default for Agent {
    fn default() -> Self {
        Self::new(builtin_registry())
    }
}

impl Agent {
    pub fn new(registry: Registry) -> Self {
        Self {
            registry: Arc::new(registry),
            client: None,
        }
    }

    pub fn with_client(mut self, client: Arc<dyn CompletionClient>) -> Self {
        self.client = Some(client);
        self
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn has_client(&self) -> bool {
        self.client.is_some()
    }

    /// Plans, executes and answers one message, appending the turn.
    pub fn run_turn(&self, session: &mut Session, message: &str, planner: PlannerKind, mode: ComposeMode) -> Turn {
        let mut notes = Vec::new();
        let plan = match (planner, &self.client) {
            (PlannerKind::Deterministic, _) => plan_deterministic(message, session, &self.registry),
            (PlannerKind::Llm, Some(client)) => {
                let (plan, note) = plan_with_llm(message, session, &self.registry, client.as_ref());
                notes.extend(note);
                plan
            }
            (PlannerKind::Llm, None) => {
                let mut plan = plan_deterministic(message, session, &self.registry);
                plan.fallback = true;
                notes.push("planner fell back to keyword rules: no completion endpoint configured".into());
                plan
            }
        };
        let calls = session.execute_plan(&self.registry, &plan);
        let (answer, composer) = match (mode, &self.client) {
            (ComposeMode::Llm, Some(client)) => {
                let (answer, note) = compose_llm(message, &calls, session, &plan.focus, client.as_ref());
                let used = if note.is_some() {
                    ComposeMode::Template
                } else {
                    ComposeMode::Llm
                };
                notes.extend(note);
                (answer, used)
            }
            (ComposeMode::Llm, None) => {
                notes.push("composer fell back to template: no completion endpoint configured".into());
                (compose_template(&calls, session, &plan.focus), ComposeMode::Template)
            }
            (ComposeMode::Template, _) => (compose_template(&calls, session, &plan.focus), ComposeMode::Template),
        };
        let turn = Turn {
            index: session.turns().len() + 1,
            message: message.to_string(),
            planner,
            plan,
            calls,
            answer: answer.text,
            composer,
            citations: answer.citations,
            notes,
        };
        session.push_turn(turn.clone());
        turn
    }
}
