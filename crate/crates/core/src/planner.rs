//! Text-in, text-out planner contract and its table-driven implementations.

use std::sync::Mutex;

use crate::error::BackendError;

/// Synthetic token count used wherever no model reports usage.
pub fn approx_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlannerRequest {
    pub system: String,
    pub context: String,
    pub temperature: f64,
    pub seed: u64,
}

impl PlannerRequest {
    pub fn new(system: impl Into<String>, context: impl Into<String>, seed: u64) -> Self {
        PlannerRequest { system: system.into(), context: context.into(), temperature: 0.0, seed }
    }

    /// The value of a `key: value` header line in the context, if present.
    pub fn header(&self, key: &str) -> Option<&str> {
        self.context.lines().find_map(|l| {
            let (k, v) = l.split_once(':')?;
            (k.trim() == key).then(|| v.trim())
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Completion {
    pub text: String,
    pub tokens_in: u64,
    pub tokens_out: u64,
}

impl Completion {
    /// Wraps locally produced text, billing synthetic tokens for both sides.
    pub fn synthetic(req: &PlannerRequest, text: String) -> Self {
        Completion {
            tokens_in: approx_tokens(&req.system) + approx_tokens(&req.context),
            tokens_out: approx_tokens(&text),
            text,
        }
    }
}

pub trait Planner: Send + Sync {
    fn complete(&self, req: &PlannerRequest) -> Result<Completion, BackendError>;
}

/// Replays a fixed list of responses in order, cycling when exhausted.
pub struct ScriptedPlanner {
    responses: Vec<String>,
    cursor: Mutex<usize>,
}

impl ScriptedPlanner {
    pub fn new<S: Into<String>>(responses: impl IntoIterator<Item = S>) -> Self {
        let responses: Vec<String> = responses.into_iter().map(Into::into).collect();
        assert!(!responses.is_empty(), "scripted planner needs at least one response");
        ScriptedPlanner { responses, cursor: Mutex::new(0) }
    }

    pub fn calls(&self) -> usize {
        *self.cursor.lock().expect("cursor lock")
    }
}

impl Planner for ScriptedPlanner {
    fn complete(&self, req: &PlannerRequest) -> Result<Completion, BackendError> {
        let mut cur = self.cursor.lock().expect("cursor lock");
        let text = self.responses[*cur % self.responses.len()].clone();
        *cur += 1;
        Ok(Completion::synthetic(req, text))
    }
}

/// A planner computed from the request by a closure.
pub struct FnPlanner<F>(pub F);

impl<F> Planner for FnPlanner<F>
where
    F: Fn(&PlannerRequest) -> String + Send + Sync,
{
    fn complete(&self, req: &PlannerRequest) -> Result<Completion, BackendError> {
        Ok(Completion::synthetic(req, (self.0)(req)))
    }
}
