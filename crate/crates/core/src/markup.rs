//! Fenced-block formats exchanged with planners.
//!
//! A plan block is tagged `plan` and holds
//! `{"nodes": [{"id", "title"?, "instruction", "kind"?, "role"?}], "edges": [{"from", "to"}]}`.
//! An ops block is tagged `ops` and holds `{"ops": [{"op": "add_node" | "remove_node" |
//! "add_edge" | "remove_edge" | "modify_node", ...}]}`. A config block is tagged
//! `config` and holds one planning configuration record. Unknown fields are
//! ignored everywhere.

use regex::Regex;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::sync::OnceLock;

use crate::error::{PlanError, PlanResult};
use crate::plan::{NodeId, NodeKind, PlanConfiguration, PlanEdge, PlanNode};
use crate::topology::{AtomicOp, NodePatch};

fn fence_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?s)```([A-Za-z0-9_-]+)[^\n]*\n(.*?)```").expect("static regex"))
}

/// Bodies of every fenced block carrying `tag`, in order of appearance.
pub fn fenced_blocks<'a>(text: &'a str, tag: &str) -> Vec<&'a str> {
    fence_re()
        .captures_iter(text)
        .filter(|c| c.get(1).is_some_and(|m| m.as_str().eq_ignore_ascii_case(tag)))
        .filter_map(|c| c.get(2).map(|m| m.as_str()))
        .collect()
}

/// Parses the first block that is valid JSON of the expected shape.
fn first_parsed<T: for<'de> Deserialize<'de>>(text: &str, tag: &str) -> PlanResult<T> {
    let blocks = fenced_blocks(text, tag);
    if blocks.is_empty() {
        return Err(PlanError::Markup(format!("no fenced `{tag}` block found")));
    }
    let mut first_err = None;
    for b in blocks {
        match serde_json::from_str::<T>(b) {
            Ok(v) => return Ok(v),
            Err(e) => {
                first_err.get_or_insert(e.to_string());
            }
        }
    }
    Err(PlanError::Markup(format!(
        "malformed `{tag}` block: {}",
        first_err.unwrap_or_default()
    )))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeDecl {
    pub id: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    pub instruction: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<NodeKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<String>,
}

impl NodeDecl {
    pub fn into_node(self) -> PlanNode {
        let mut n = PlanNode::new(self.id, self.kind.unwrap_or(NodeKind::Task), self.instruction);
        if let Some(t) = self.title {
            n.title = t;
        }
        n.role = self.role;
        n
    }

    pub fn from_node(n: &PlanNode) -> Self {
        NodeDecl {
            id: n.id.clone(),
            title: (n.title != n.id.as_str()).then(|| n.title.clone()),
            instruction: n.instruction.clone(),
            kind: (n.kind != NodeKind::Task).then_some(n.kind),
            role: n.role.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeDecl {
    pub from: NodeId,
    pub to: NodeId,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanBlock {
    #[serde(default)]
    pub nodes: Vec<NodeDecl>,
    #[serde(default)]
    pub edges: Vec<EdgeDecl>,
}

/// Extracts nodes and edges from the first well-formed `plan` block.
pub fn parse_plan_markup(text: &str) -> PlanResult<(Vec<PlanNode>, Vec<PlanEdge>)> {
    let block: PlanBlock = first_parsed(text, "plan")?;
    let mut seen = BTreeSet::new();
    for n in &block.nodes {
        if !seen.insert(n.id.clone()) {
            return Err(PlanError::Markup(format!("duplicate node id `{}`", n.id)));
        }
    }
    for e in &block.edges {
        for end in [&e.from, &e.to] {
            if !seen.contains(end) {
                return Err(PlanError::Markup(format!(
                    "dangling dependency {} -> {}: `{end}` is not declared",
                    e.from, e.to
                )));
            }
        }
    }
    let nodes = block.nodes.into_iter().map(NodeDecl::into_node).collect();
    let edges = block.edges.into_iter().map(|e| PlanEdge::new(e.from, e.to)).collect();
    Ok((nodes, edges))
}

/// Like [`parse_plan_markup`] but edges may name ids outside the block, for
/// incremental expansion against an existing graph.
pub fn parse_plan_fragment(text: &str) -> PlanResult<PlanBlock> {
    let block: PlanBlock = first_parsed(text, "plan")?;
    let mut seen = BTreeSet::new();
    for n in &block.nodes {
        if !seen.insert(n.id.clone()) {
            return Err(PlanError::Markup(format!("duplicate node id `{}`", n.id)));
        }
    }
    Ok(block)
}

pub fn render_plan_markup<'a>(
    nodes: impl IntoIterator<Item = &'a PlanNode>,
    edges: impl IntoIterator<Item = &'a PlanEdge>,
) -> String {
    let block = PlanBlock {
        nodes: nodes.into_iter().map(NodeDecl::from_node).collect(),
        edges: edges
            .into_iter()
            .map(|e| EdgeDecl { from: e.from.clone(), to: e.to.clone() })
            .collect(),
    };
    fence("plan", &serde_json::to_string(&block).expect("plan block serializes"))
}

/// Wire form of one atomic op.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum OpDecl {
    AddNode(NodeDecl),
    RemoveNode { id: NodeId },
    AddEdge { from: NodeId, to: NodeId },
    RemoveEdge { from: NodeId, to: NodeId },
    ModifyNode {
        id: NodeId,
        #[serde(flatten)]
        patch: NodePatch,
    },
}

impl From<OpDecl> for AtomicOp {
    fn from(d: OpDecl) -> Self {
        match d {
            OpDecl::AddNode(n) => AtomicOp::AddNode(n.into_node()),
            OpDecl::RemoveNode { id } => AtomicOp::RemoveNode(id),
            OpDecl::AddEdge { from, to } => AtomicOp::AddEdge(PlanEdge::new(from, to)),
            OpDecl::RemoveEdge { from, to } => AtomicOp::RemoveEdge(PlanEdge::new(from, to)),
            OpDecl::ModifyNode { id, patch } => AtomicOp::ModifyNode(id, patch),
        }
    }
}

impl From<&AtomicOp> for OpDecl {
    fn from(op: &AtomicOp) -> Self {
        match op {
            AtomicOp::AddNode(n) => OpDecl::AddNode(NodeDecl::from_node(n)),
            AtomicOp::RemoveNode(id) => OpDecl::RemoveNode { id: id.clone() },
            AtomicOp::AddEdge(e) => OpDecl::AddEdge { from: e.from.clone(), to: e.to.clone() },
            AtomicOp::RemoveEdge(e) => OpDecl::RemoveEdge { from: e.from.clone(), to: e.to.clone() },
            AtomicOp::ModifyNode(id, patch) => OpDecl::ModifyNode { id: id.clone(), patch: patch.clone() },
        }
    }
}

#[derive(Serialize, Deserialize)]
struct OpsBlock {
    #[serde(default)]
    ops: Vec<OpDecl>,
}

pub fn parse_ops_markup(text: &str) -> PlanResult<Vec<AtomicOp>> {
    let block: OpsBlock = first_parsed(text, "ops")?;
    Ok(block.ops.into_iter().map(AtomicOp::from).collect())
}

pub fn render_ops_markup(ops: &[AtomicOp]) -> String {
    let block = OpsBlock { ops: ops.iter().map(OpDecl::from).collect() };
    fence("ops", &serde_json::to_string(&block).expect("ops block serializes"))
}

pub fn parse_config_markup(text: &str) -> PlanResult<PlanConfiguration> {
    first_parsed(text, "config")
}

pub fn render_config_markup(config: &PlanConfiguration) -> String {
    fence("config", &crate::plan::encode(config))
}

fn fence(tag: &str, body: &str) -> String {
    format!("```{tag}\n{body}\n```")
}
