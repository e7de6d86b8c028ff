//! Directive issuance: which ready nodes run next, under which role, and how
//! parallel answers are reconciled.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

use crate::error::{PlanError, PlanResult};
use crate::executor::judge::normalize_answer;
use crate::plan::{Directive, NodeId, NodeKind, NodeStatus, PlanGraph, PlanNode};
use crate::topology::{depth_to_sink, ready_set};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NavigationKind {
    Sequential,
    DynamicDispatch,
    ConcurrentPaths,
    CentralizedRouting,
    GraphTraversal,
    JointDeliberation,
    ConflictResolution,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NavigationPolicy {
    pub kind: NavigationKind,
    pub max_concurrency: usize,
}

impl NavigationPolicy {
    pub fn new(kind: NavigationKind, max_concurrency: usize) -> Self {
        NavigationPolicy { kind, max_concurrency }
    }

    pub fn sequential() -> Self {
        Self::new(NavigationKind::Sequential, 1)
    }
}

/// 64-bit FNV-1a; stable across platforms and runs.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Resolves the acting role for a node. Declared roles must exist in the
/// roster; otherwise verification work goes to `verifier` when available and
/// everything else is spread over the sorted roster by id hash.
pub fn assign_role(node: &PlanNode, roster: &[String]) -> PlanResult<String> {
    if roster.is_empty() {
        return Err(PlanError::Role("roster is empty".into()));
    }
    if let Some(r) = &node.role {
        return if roster.contains(r) {
            Ok(r.clone())
        } else {
            Err(PlanError::Role(format!("node {} declares role `{r}`, absent from roster", node.id)))
        };
    }
    if node.kind == NodeKind::Verification && roster.iter().any(|r| r == "verifier") {
        return Ok("verifier".into());
    }
    let mut sorted: Vec<&String> = roster.iter().collect();
    sorted.sort();
    let idx = (fnv1a(node.id.as_str().as_bytes()) % sorted.len() as u64) as usize;
    Ok(sorted[idx].clone())
}

/// Own role when the roster knows it, else the first roster entry.
fn default_role(node: &PlanNode, roster: &[String]) -> String {
    match &node.role {
        Some(r) if roster.contains(r) => r.clone(),
        _ => roster.first().cloned().unwrap_or_default(),
    }
}

/// The role a policy hands `node` to: centralized routing resolves roles
/// strictly, other policies fall back to the first roster entry.
pub fn role_for(kind: NavigationKind, node: &PlanNode, roster: &[String]) -> PlanResult<String> {
    if kind == NavigationKind::CentralizedRouting {
        assign_role(node, roster)
    } else {
        Ok(default_role(node, roster))
    }
}

/// Pending nodes whose unmet predecessors all carry the auxiliary-validated flag.
fn speculative(graph: &PlanGraph) -> Vec<NodeId> {
    graph
        .nodes
        .values()
        .filter(|n| n.status == NodeStatus::Pending)
        .filter(|n| {
            let unmet: Vec<&PlanNode> = graph
                .predecessors(&n.id)
                .into_iter()
                .filter_map(|p| graph.node(p))
                .filter(|p| p.status != NodeStatus::Succeeded)
                .collect();
            !unmet.is_empty() && unmet.iter().all(|p| p.aux_validated)
        })
        .map(|n| n.id.clone())
        .collect()
}

/// Next batch of directives for `graph` under `policy`.
pub fn next_directives(
    graph: &PlanGraph,
    policy: &NavigationPolicy,
    roster: &[String],
    step: u32,
) -> PlanResult<Vec<Directive>> {
    let ready = ready_set(graph)?;
    let cap = policy.max_concurrency.max(1);
    let chosen: Vec<NodeId> = match policy.kind {
        NavigationKind::Sequential => ready.into_iter().take(1).collect(),
        NavigationKind::DynamicDispatch
        | NavigationKind::CentralizedRouting
        | NavigationKind::JointDeliberation
        | NavigationKind::ConflictResolution => ready.into_iter().take(cap).collect(),
        NavigationKind::ConcurrentPaths => {
            let mut all: BTreeSet<NodeId> = ready.into_iter().collect();
            all.extend(speculative(graph));
            all.into_iter().take(cap).collect()
        }
        NavigationKind::GraphTraversal => {
            let depth = depth_to_sink(graph);
            let mut scored: Vec<(usize, usize, NodeId)> = ready
                .into_iter()
                .map(|id| {
                    let satisfied = graph
                        .predecessors(&id)
                        .iter()
                        .filter(|p| graph.node(p).is_some_and(|n| n.status == NodeStatus::Succeeded))
                        .count();
                    (satisfied, depth.get(&id).copied().unwrap_or(0), id)
                })
                .collect();
            // more satisfied predecessors first, then shallower, then smaller id
            scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            scored.into_iter().take(cap).map(|(_, _, id)| id).collect()
        }
    };
    chosen
        .into_iter()
        .map(|id| {
            let node = graph.node(&id).expect("ready ids exist");
            let role = role_for(policy.kind, node, roster)?;
            Ok(Directive { node: id, instruction: node.instruction.clone(), role, issued_at_step: step })
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VoteBallot {
    /// (source node, answer text)
    pub candidates: Vec<(NodeId, String)>,
}

/// Plurality over normalized answers; ties go to the answer whose smallest
/// source id is smallest. Returns that source's original text.
pub fn vote(ballot: &VoteBallot) -> Option<String> {
    let mut tally: BTreeMap<String, (usize, &NodeId, &String)> = BTreeMap::new();
    for (src, text) in &ballot.candidates {
        let entry = tally.entry(normalize_answer(text)).or_insert((0, src, text));
        entry.0 += 1;
        if src < entry.1 {
            entry.1 = src;
            entry.2 = text;
        }
    }
    tally
        .into_values()
        .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(a.1)))
        .map(|(_, _, text)| text.clone())
}
