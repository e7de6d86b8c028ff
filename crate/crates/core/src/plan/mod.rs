//! Plan graph domain types and structural validation.
//!
//! A [`PlanGraph`] is the unit every other module reads and rewrites. Values are
//! plain data: revisions produce new graphs (see [`crate::topology`]) and node
//! readiness is always derived, never stored.

mod codec;
mod config;
mod trajectory;

pub use codec::{decode, encode, Record};
pub use config::{AgentSystemSpec, Budgets, ContextPolicy, PlanConfiguration};
pub use trajectory::{
    recompute_aggregates, Aggregates, CostClass, Directive, EventKind, EncodeMode, JudgeVerdict,
    Trajectory, TrajectoryEvent,
};

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{PlanError, PlanResult};

/// Opaque node identifier; ordering is plain string ordering.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        NodeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

impl From<String> for NodeId {
    fn from(s: String) -> Self {
        NodeId(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Task,
    Verification,
    Aggregation,
    Resolution,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeStatus {
    Pending,
    Dispatched,
    Succeeded,
    Failed,
    Pruned,
}

impl NodeStatus {
    /// The legal transition relation. `Failed -> Dispatched` is a retry.
    pub fn can_transition_to(self, to: NodeStatus) -> bool {
        use NodeStatus::*;
        matches!(
            (self, to),
            (Pending, Dispatched)
                | (Dispatched, Succeeded)
                | (Dispatched, Failed)
                | (Failed, Dispatched)
                | (Succeeded, Pruned)
        )
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, NodeStatus::Succeeded | NodeStatus::Failed | NodeStatus::Pruned)
    }

    pub fn label(self) -> &'static str {
        match self {
            NodeStatus::Pending => "pending",
            NodeStatus::Dispatched => "dispatched",
            NodeStatus::Succeeded => "succeeded",
            NodeStatus::Failed => "failed",
            NodeStatus::Pruned => "pruned",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanNode {
    pub id: NodeId,
    pub title: String,
    pub instruction: String,
    pub kind: NodeKind,
    pub status: NodeStatus,
    #[serde(default)]
    pub role: Option<String>,
    #[serde(default)]
    pub result: Option<String>,
    /// Number of `Dispatched` transitions so far.
    #[serde(default)]
    pub attempts: u32,
    /// Result notes inherited from pruned predecessors.
    #[serde(default)]
    pub notes: Vec<String>,
    /// Set by adaptation when partial results vouch for this node's dependents.
    #[serde(default)]
    pub aux_validated: bool,
    /// A revision asked for this failed node to be dispatched again.
    #[serde(default)]
    pub retry_requested: bool,
}

impl PlanNode {
    pub fn new(id: impl Into<NodeId>, kind: NodeKind, instruction: impl Into<String>) -> Self {
        let id = id.into();
        let instruction = instruction.into();
        PlanNode {
            title: id.to_string(),
            id,
            instruction,
            kind,
            status: NodeStatus::Pending,
            role: None,
            result: None,
            attempts: 0,
            notes: Vec::new(),
            aux_validated: false,
            retry_requested: false,
        }
    }

    pub fn task(id: impl Into<NodeId>, instruction: impl Into<String>) -> Self {
        Self::new(id, NodeKind::Task, instruction)
    }

    pub fn with_title(mut self, title: impl Into<String>) -> Self {
        self.title = title.into();
        self
    }

    pub fn with_role(mut self, role: impl Into<String>) -> Self {
        self.role = Some(role.into());
        self
    }

    pub fn with_status(mut self, status: NodeStatus) -> Self {
        self.status = status;
        self
    }

    pub fn with_result(mut self, result: impl Into<String>) -> Self {
        self.result = Some(result.into());
        self
    }

    /// Moves the node along the status relation, counting dispatches.
    pub fn transition(&mut self, to: NodeStatus) -> PlanResult<()> {
        if !self.status.can_transition_to(to) {
            return Err(PlanError::IllegalTransition {
                node: self.id.clone(),
                from: self.status,
                to,
            });
        }
        if to == NodeStatus::Dispatched {
            self.attempts += 1;
            self.retry_requested = false;
        }
        self.status = to;
        Ok(())
    }
}

/// `to` depends on `from`. `rewired` marks edges inserted by pruning.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PlanEdge {
    pub from: NodeId,
    pub to: NodeId,
    #[serde(default)]
    pub rewired: bool,
}

impl PlanEdge {
    pub fn new(from: impl Into<NodeId>, to: impl Into<NodeId>) -> Self {
        PlanEdge { from: from.into(), to: to.into(), rewired: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    Linear,
    Dag,
    Hierarchy,
    ThoughtGraph,
    ModularGraph,
    CrossCheckNet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraphRecord", into = "GraphRecord")]
pub struct PlanGraph {
    pub topology_kind: TopologyKind,
    pub nodes: BTreeMap<NodeId, PlanNode>,
    pub edges: BTreeSet<PlanEdge>,
    pub revision_count: u32,
}

/// Wire shape of a graph: nodes and edges as id-sorted lists.
#[derive(Serialize, Deserialize)]
struct GraphRecord {
    topology_kind: TopologyKind,
    revision_count: u32,
    nodes: Vec<PlanNode>,
    edges: Vec<PlanEdge>,
}

impl From<PlanGraph> for GraphRecord {
    fn from(g: PlanGraph) -> Self {
        GraphRecord {
            topology_kind: g.topology_kind,
            revision_count: g.revision_count,
            nodes: g.nodes.into_values().collect(),
            edges: g.edges.into_iter().collect(),
        }
    }
}

impl TryFrom<GraphRecord> for PlanGraph {
    type Error = String;

    fn try_from(r: GraphRecord) -> Result<Self, Self::Error> {
        let mut nodes = BTreeMap::new();
        for n in r.nodes {
            let id = n.id.clone();
            if nodes.insert(id.clone(), n).is_some() {
                return Err(format!("nodes: duplicate node id `{id}`"));
            }
        }
        Ok(PlanGraph {
            topology_kind: r.topology_kind,
            nodes,
            edges: r.edges.into_iter().collect(),
            revision_count: r.revision_count,
        })
    }
}

impl PlanGraph {
    pub fn new(topology_kind: TopologyKind) -> Self {
        PlanGraph {
            topology_kind,
            nodes: BTreeMap::new(),
            edges: BTreeSet::new(),
            revision_count: 0,
        }
    }

    /// Inserts or replaces a node.
    pub fn insert_node(&mut self, node: PlanNode) {
        self.nodes.insert(node.id.clone(), node);
    }

    /// Adds `from -> to` unless that pair is already present.
    pub fn insert_edge(&mut self, edge: PlanEdge) -> bool {
        if self.has_edge(&edge.from, &edge.to) {
            return false;
        }
        self.edges.insert(edge)
    }

    pub fn with_node(mut self, node: PlanNode) -> Self {
        self.insert_node(node);
        self
    }

    pub fn with_edge(mut self, from: &str, to: &str) -> Self {
        self.insert_edge(PlanEdge::new(from, to));
        self
    }

    pub fn has_edge(&self, from: &NodeId, to: &NodeId) -> bool {
        self.edges.iter().any(|e| &e.from == from && &e.to == to)
    }

    pub fn node(&self, id: &NodeId) -> Option<&PlanNode> {
        self.nodes.get(id)
    }

    pub fn node_mut(&mut self, id: &NodeId) -> Option<&mut PlanNode> {
        self.nodes.get_mut(id)
    }

    pub fn predecessors(&self, id: &NodeId) -> Vec<&NodeId> {
        self.edges.iter().filter(|e| &e.to == id).map(|e| &e.from).collect()
    }

    pub fn successors(&self, id: &NodeId) -> Vec<&NodeId> {
        self.edges.iter().filter(|e| &e.from == id).map(|e| &e.to).collect()
    }

    /// Non-pruned nodes with no successors, in id order.
    pub fn sinks(&self) -> Vec<&PlanNode> {
        self.nodes
            .values()
            .filter(|n| n.status != NodeStatus::Pruned && self.successors(&n.id).is_empty())
            .collect()
    }

    pub fn count_status(&self, status: NodeStatus) -> usize {
        self.nodes.values().filter(|n| n.status == status).count()
    }

    pub fn validate(&self) -> ValidationReport {
        validate_graph(self)
    }

    /// Same nodes and edges, ignoring per-node execution state.
    pub fn same_structure(&self, other: &PlanGraph) -> bool {
        let strip = |g: &PlanGraph| -> Vec<(NodeId, String, NodeKind)> {
            g.nodes.values().map(|n| (n.id.clone(), n.instruction.clone(), n.kind)).collect()
        };
        self.topology_kind == other.topology_kind
            && strip(self) == strip(other)
            && self.edges == other.edges
    }
}

/// One broken structural rule.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    SelfLoop(NodeId),
    DanglingEdge { from: NodeId, to: NodeId },
    Cycle(Vec<NodeId>),
    OutDegree(NodeId),
    InDegree(NodeId),
    NotSingleChain,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::SelfLoop(n) => write!(f, "self-loop at {n}"),
            Violation::DanglingEdge { from, to } => write!(f, "dangling edge {from} -> {to}"),
            Violation::Cycle(path) => {
                let ids: Vec<&str> = path.iter().map(|n| n.as_str()).collect();
                write!(f, "cycle: {}", ids.join(" -> "))
            }
            Violation::OutDegree(n) => write!(f, "out-degree > 1 at {n}"),
            Violation::InDegree(n) => write!(f, "in-degree > 1 at {n}"),
            Violation::NotSingleChain => write!(f, "linear graph is not a single chain"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    /// True when any rendered violation contains `needle`.
    pub fn mentions(&self, needle: &str) -> bool {
        self.violations.iter().any(|v| v.to_string().contains(needle))
    }

    pub fn into_result(self) -> PlanResult<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(PlanError::InvalidGraph(self.violations))
        }
    }
}

/// Checks every structural invariant of `graph`; violations are data.
pub fn validate_graph(graph: &PlanGraph) -> ValidationReport {
    let mut violations = Vec::new();
    for e in &graph.edges {
        if e.from == e.to {
            violations.push(Violation::SelfLoop(e.from.clone()));
        }
        if !graph.nodes.contains_key(&e.from) || !graph.nodes.contains_key(&e.to) {
            violations.push(Violation::DanglingEdge { from: e.from.clone(), to: e.to.clone() });
        }
    }
    if let Some(cycle) = find_cycle(graph) {
        violations.push(Violation::Cycle(cycle));
    }

    let mut indeg: BTreeMap<&NodeId, usize> = graph.nodes.keys().map(|k| (k, 0)).collect();
    let mut outdeg = indeg.clone();
    for e in &graph.edges {
        if let Some(d) = indeg.get_mut(&e.to) {
            *d += 1;
        }
        if let Some(d) = outdeg.get_mut(&e.from) {
            *d += 1;
        }
    }

    match graph.topology_kind {
        TopologyKind::Linear => {
            let mut degree_ok = true;
            for (id, d) in &outdeg {
                if *d > 1 {
                    violations.push(Violation::OutDegree((*id).clone()));
                    degree_ok = false;
                }
            }
            for (id, d) in &indeg {
                if *d > 1 {
                    violations.push(Violation::InDegree((*id).clone()));
                    degree_ok = false;
                }
            }
            if degree_ok && violations.is_empty() && !is_single_chain(graph) {
                violations.push(Violation::NotSingleChain);
            }
        }
        TopologyKind::Hierarchy => {
            for (id, d) in &indeg {
                if *d > 1 {
                    violations.push(Violation::InDegree((*id).clone()));
                }
            }
        }
        _ => {}
    }
    ValidationReport { violations }
}

/// Non-pruned nodes form one path. Pruned nodes are detached and ignored.
fn is_single_chain(graph: &PlanGraph) -> bool {
    let active: Vec<&NodeId> = graph
        .nodes
        .values()
        .filter(|n| n.status != NodeStatus::Pruned)
        .map(|n| &n.id)
        .collect();
    if active.is_empty() {
        return true;
    }
    let heads: Vec<&&NodeId> = active.iter().filter(|id| graph.predecessors(id).is_empty()).collect();
    if heads.len() != 1 {
        return false;
    }
    let mut seen = 1;
    let mut cur = (*heads[0]).clone();
    while let Some(next) = graph.successors(&cur).first() {
        cur = (*next).clone();
        seen += 1;
        if seen > active.len() {
            return false;
        }
    }
    seen == active.len()
}

/// Returns one directed cycle as a closed path (first id repeated at the end).
pub fn find_cycle(graph: &PlanGraph) -> Option<Vec<NodeId>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        White,
        Grey,
        Black,
    }
    let mut ids: BTreeSet<&NodeId> = graph.nodes.keys().collect();
    for e in &graph.edges {
        ids.insert(&e.from);
        ids.insert(&e.to);
    }
    let mut succ: BTreeMap<&NodeId, Vec<&NodeId>> = ids.iter().map(|id| (*id, Vec::new())).collect();
    for e in &graph.edges {
        succ.get_mut(&e.from).unwrap().push(&e.to);
    }
    let mut mark: BTreeMap<&NodeId, Mark> = ids.iter().map(|id| (*id, Mark::White)).collect();

    for &root in &ids {
        if mark[root] != Mark::White {
            continue;
        }
        // Iterative DFS: stack of (node, next child index).
        let mut stack: Vec<(&NodeId, usize)> = vec![(root, 0)];
        mark.insert(root, Mark::Grey);
        while let Some(&mut (node, ref mut idx)) = stack.last_mut() {
            let children = &succ[node];
            if *idx < children.len() {
                let child = children[*idx];
                *idx += 1;
                match mark[child] {
                    Mark::White => {
                        mark.insert(child, Mark::Grey);
                        stack.push((child, 0));
                    }
                    Mark::Grey => {
                        let start = stack.iter().position(|(n, _)| *n == child).unwrap();
                        let mut path: Vec<NodeId> =
                            stack[start..].iter().map(|(n, _)| (*n).clone()).collect();
                        path.push(child.clone());
                        return Some(path);
                    }
                    Mark::Black => {}
                }
            } else {
                mark.insert(node, Mark::Black);
                stack.pop();
            }
        }
    }
    None
}
