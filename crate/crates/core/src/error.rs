use thiserror::Error;

use crate::plan::{NodeId, NodeStatus, Violation};

/// Errors raised by plan-level operations (graphs, trajectories, records).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("illegal status transition for node {node}: {from:?} -> {to:?}")]
    IllegalTransition { node: NodeId, from: NodeStatus, to: NodeStatus },
    #[error("events out of order: step {found} follows step {previous}")]
    OutOfOrder { previous: u32, found: u32 },
    #[error("schema error in {entity}: {message}")]
    Schema { entity: &'static str, message: String },
    #[error("invalid graph: {}", join_violations(.0))]
    InvalidGraph(Vec<Violation>),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid event: {0}")]
    InvalidEvent(String),
    #[error("revision rejected: {}", join_violations(.0))]
    RevisionRejected(Vec<Violation>),
    #[error("reference error: {0}")]
    Reference(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("markup error: {0}")]
    Markup(String),
    #[error("initialization failed: {0}")]
    Init(String),
    #[error("role resolution failed: {0}")]
    Role(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for PlanError {
    fn from(e: std::io::Error) -> Self {
        PlanError::Io(e.to_string())
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

/// Failures of a planner, chat, or judge backend.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("server returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("backend not configured: {0}")]
    Config(String),
}

pub type PlanResult<T> = std::result::Result<T, PlanError>;
