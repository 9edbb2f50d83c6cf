#![allow(dead_code)]

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use canopy_agent::llm::{ChatMessage, CompletionClient};
use canopy_agent::{AgentError, Result, Session, SessionConfig};
use canopy_core::synthetic::{forest_pair, Rect, SceneSpec, SyntheticPair};

/// Replies from a fixed script; records every request.
pub struct Scripted {
    replies: Mutex<VecDeque<Result<String>>>,
    pub requests: Mutex<Vec<Vec<ChatMessage>>>,
    pub calls: AtomicUsize,
}

impl Scripted {
    pub fn new(replies: Vec<Result<String>>) -> Self {
        Self {
            replies: Mutex::new(replies.into()),
            requests: Mutex::new(Vec::new()),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl CompletionClient for Scripted {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.requests.lock().unwrap().push(messages.to_vec());
        self.replies
            .lock()
            .unwrap()
            .pop_front()
            .unwrap_or_else(|| Err(AgentError::Endpoint("script exhausted".into())))
    }
}

pub fn plan_reply(json: &str) -> Result<String> {
    Ok(format!("Here is the plan.\n```plan\n{json}\n```\n"))
}

pub fn synthetic() -> SyntheticPair {
    let spec = SceneSpec::new(96, 96, vec![Rect::square(8, 10, 24), Rect::square(60, 50, 20)]).with_seed(3);
    forest_pair(&spec, "syn")
}

pub fn loaded_session() -> (Session, SyntheticPair) {
    let s = synthetic();
    let mut session = Session::new("s1", SessionConfig::default());
    session.attach_pair(s.pair.clone(), Some(s.truth.clone()));
    (session, s)
}
