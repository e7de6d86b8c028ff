//! Deciding when to revise a running plan, and producing the revision.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

use crate::error::PlanError;
use crate::executor::judge::{answers_match, normalize_answer};
use crate::markup::parse_ops_markup;
use crate::plan::{
    recompute_aggregates, EventKind, NodeId, NodeKind, NodeStatus, PlanEdge, PlanGraph, PlanNode,
    TopologyKind, Trajectory,
};
use crate::planner::{Planner, PlannerRequest};
use crate::topology::{apply_atomic_ops, graph_summary, prune_completed, AtomicOp};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerSpec {
    Periodic(u32),
    OnFailureSignal,
    CriticLoop(u32),
    EnvFeedback,
    Inconsistency,
    Never,
}

impl TriggerSpec {
    pub fn validate(&self) -> Result<(), String> {
        match self {
            TriggerSpec::Periodic(0) | TriggerSpec::CriticLoop(0) => {
                Err(format!("trigger {self} needs a period of at least 1"))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for TriggerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TriggerSpec::Periodic(n) => write!(f, "periodic({n})"),
            TriggerSpec::OnFailureSignal => f.write_str("on_failure_signal"),
            TriggerSpec::CriticLoop(n) => write!(f, "critic_loop({n})"),
            TriggerSpec::EnvFeedback => f.write_str("env_feedback"),
            TriggerSpec::Inconsistency => f.write_str("inconsistency"),
            TriggerSpec::Never => f.write_str("never"),
        }
    }
}

/// What a fired trigger does to the plan.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RevisionMechanism {
    /// Planner re-plans and injects revised sub-tasks.
    ManagerIntervention,
    /// Planner acts as critic over intermediate results.
    CriticLoopFeedback,
    /// Planner reacts to anomalous environment observations.
    EnvFeedback,
    /// Resolved nodes are excised; no planner call.
    PeriodicPruning,
    /// Failed leaves retry locally; answers are settled by vote.
    ConsensusVoting,
    /// Planner grows the thought graph.
    DynamicExpansion,
    /// Conflicting verifications get a resolution node, then the planner
    /// supplies the deferred deep plan.
    MetaVerification,
}

impl RevisionMechanism {
    pub fn label(self) -> &'static str {
        match self {
            RevisionMechanism::ManagerIntervention => "manager_intervention",
            RevisionMechanism::CriticLoopFeedback => "critic_loop_feedback",
            RevisionMechanism::EnvFeedback => "env_feedback",
            RevisionMechanism::PeriodicPruning => "periodic_pruning",
            RevisionMechanism::ConsensusVoting => "consensus_voting",
            RevisionMechanism::DynamicExpansion => "dynamic_expansion",
            RevisionMechanism::MetaVerification => "meta_verification",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptDecision {
    pub fired: bool,
    /// The first trigger (in declared order) whose condition held.
    pub trigger: Option<TriggerSpec>,
    pub evidence: String,
}

impl AdaptDecision {
    pub fn quiet() -> Self {
        AdaptDecision { fired: false, trigger: None, evidence: String::new() }
    }

    fn fire(trigger: &TriggerSpec, evidence: String) -> Self {
        AdaptDecision { fired: true, trigger: Some(trigger.clone()), evidence }
    }

    pub fn reason(&self) -> String {
        match &self.trigger {
            Some(t) => format!("{t}: {}", self.evidence),
            None => String::new(),
        }
    }
}

fn step_count(traj: &Trajectory) -> u32 {
    recompute_aggregates(&traj.events).map(|a| a.n_steps).unwrap_or(traj.aggregates.n_steps)
}

/// Step at which a node's latest outcome was observed.
fn completion_step(traj: &Trajectory, id: &NodeId) -> Option<u32> {
    traj.events
        .iter()
        .rev()
        .find(|e| e.kind == EventKind::Observation && e.node.as_ref() == Some(id))
        .map(|e| e.step)
}

/// Two succeeded verification nodes asking the same thing but answering
/// differently, with no revision logged since the later of them finished.
pub fn find_inconsistency(traj: &Trajectory, graph: &PlanGraph) -> Option<(NodeId, NodeId)> {
    let mut groups: BTreeMap<String, Vec<&PlanNode>> = BTreeMap::new();
    for n in graph.nodes.values() {
        if n.kind == NodeKind::Verification && n.status == NodeStatus::Succeeded {
            groups.entry(normalize_answer(&n.instruction)).or_default().push(n);
        }
    }
    for members in groups.values() {
        for (i, a) in members.iter().enumerate() {
            for b in &members[i + 1..] {
                let (ra, rb) = (a.result.as_deref().unwrap_or(""), b.result.as_deref().unwrap_or(""));
                if answers_match(ra, rb) {
                    continue;
                }
                let done = completion_step(traj, &a.id).max(completion_step(traj, &b.id)).unwrap_or(0);
                let handled = traj.events.iter().any(|e| e.kind == EventKind::Revision && e.step >= done);
                if !handled {
                    return Some((a.id.clone(), b.id.clone()));
                }
            }
        }
    }
    None
}

/// Evaluates the triggers in order; pure in its inputs.
pub fn should_adapt(traj: &Trajectory, graph: &PlanGraph, triggers: &[TriggerSpec]) -> AdaptDecision {
    let n_steps = step_count(traj);
    for t in triggers {
        let evidence = match t {
            TriggerSpec::Never => None,
            TriggerSpec::Periodic(p) | TriggerSpec::CriticLoop(p) => {
                (*p > 0 && n_steps > 0 && n_steps % p == 0).then(|| format!("n_steps={n_steps}"))
            }
            TriggerSpec::OnFailureSignal => traj
                .events
                .last()
                .filter(|e| e.kind == EventKind::FailureSignal)
                .map(|e| match &e.node {
                    Some(n) => format!("node {n} failed: {}", e.detail),
                    None => e.detail.clone(),
                }),
            TriggerSpec::EnvFeedback => {
                let last_step = traj.events.iter().rev().find(|e| e.kind == EventKind::Observation).map(|e| e.step);
                last_step.and_then(|s| {
                    let flagged: Vec<String> = traj
                        .events
                        .iter()
                        .filter(|e| e.kind == EventKind::Observation && e.step == s && e.anomalous)
                        .map(|e| e.node.as_ref().map(|n| n.to_string()).unwrap_or_default())
                        .collect();
                    (!flagged.is_empty()).then(|| format!("anomalous observation from {}", flagged.join(", ")))
                })
            }
            TriggerSpec::Inconsistency => {
                find_inconsistency(traj, graph).map(|(a, b)| format!("{a} and {b} disagree"))
            }
        };
        if let Some(ev) = evidence {
            return AdaptDecision::fire(t, ev);
        }
    }
    AdaptDecision::quiet()
}

/// Nodes named by the most recent round's failure signals that are still failed.
pub fn recently_failed(traj: &Trajectory, graph: &PlanGraph) -> Vec<NodeId> {
    let Some(last) = traj.events.iter().rev().find(|e| e.kind == EventKind::FailureSignal) else {
        return Vec::new();
    };
    let mut out: Vec<NodeId> = traj
        .events
        .iter()
        .filter(|e| e.kind == EventKind::FailureSignal && e.step == last.step)
        .filter_map(|e| e.node.clone())
        .filter(|n| graph.node(n).is_some_and(|x| x.status == NodeStatus::Failed))
        .collect();
    out.sort();
    out.dedup();
    out
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Usage {
    pub calls: u32,
    pub tokens_in: u64,
    pub tokens_out: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Proposal {
    pub ops: Vec<AtomicOp>,
    /// The graph with `ops` applied; equal to the input for an empty batch.
    pub revised: PlanGraph,
    pub usage: Usage,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProposalFailure {
    pub error: String,
    pub usage: Usage,
}

#[derive(Clone, Debug)]
pub struct ReviseOptions {
    pub mechanism: RevisionMechanism,
    pub retries: u32,
    pub seed: u64,
    pub temperature: f64,
    pub system_prompt: String,
}

impl Default for ReviseOptions {
    fn default() -> Self {
        ReviseOptions {
            mechanism: RevisionMechanism::ManagerIntervention,
            retries: 2,
            seed: 0,
            temperature: 0.0,
            system_prompt: REVISE_SYSTEM.to_string(),
        }
    }
}

pub const REVISE_SYSTEM: &str = "You revise a running task plan. Reply with exactly one fenced ```ops block \
holding {\"ops\": [...]}. Each op is one of add_node {id, instruction, title?, kind?, role?}, \
remove_node {id}, add_edge {from, to}, remove_edge {from, to}, modify_node {id, instruction?, \
title?, kind?, role?, retry?, aux_validated?}. Set retry to true on a failed node to run it again. \
An empty ops list keeps the plan as it is.";

fn revise_context(graph: &PlanGraph, traj: &Trajectory, decision: &AdaptDecision, opts: &ReviseOptions, failed: &[NodeId]) -> String {
    let mut ctx = format!(
        "mode: revise\nmechanism: {}\nreason: {}\nquery: {}\n",
        opts.mechanism.label(),
        decision.reason(),
        traj.query
    );
    if !failed.is_empty() {
        let ids: Vec<&str> = failed.iter().map(|n| n.as_str()).collect();
        ctx.push_str(&format!("failed: {}\n", ids.join(", ")));
    }
    ctx.push_str("graph:\n");
    ctx.push_str(&graph_summary(graph));
    ctx.push_str("recent events:\n");
    let start = traj.events.len().saturating_sub(8);
    for e in &traj.events[start..] {
        ctx.push_str(&crate::executor::context::render_event(e));
        ctx.push('\n');
    }
    ctx
}

/// Asks the planner for an ops batch and checks it applies cleanly. On a
/// failure-signal trigger every recently failed node must be touched by the
/// batch. Rejected proposals are retried with the rejection in context.
pub fn propose_revision(
    graph: &PlanGraph,
    traj: &Trajectory,
    planner: &dyn Planner,
    decision: &AdaptDecision,
    opts: &ReviseOptions,
) -> Result<Proposal, ProposalFailure> {
    let failed = if decision.trigger == Some(TriggerSpec::OnFailureSignal) {
        recently_failed(traj, graph)
    } else {
        Vec::new()
    };
    let base = revise_context(graph, traj, decision, opts, &failed);
    let mut usage = Usage::default();
    let mut context = base.clone();
    let mut last_err = String::new();
    for attempt in 0..=opts.retries {
        let mut req = PlannerRequest::new(opts.system_prompt.clone(), context.clone(), opts.seed.wrapping_add(attempt as u64));
        req.temperature = opts.temperature;
        let completion = match planner.complete(&req) {
            Ok(c) => c,
            Err(e) => {
                usage.calls += 1;
                last_err = e.to_string();
                continue;
            }
        };
        usage.calls += 1;
        usage.tokens_in += completion.tokens_in;
        usage.tokens_out += completion.tokens_out;
        let verdict = parse_ops_markup(&completion.text).and_then(|ops| {
            if let Some(missing) = failed.iter().find(|f| !ops.iter().any(|op| op.mentions(f))) {
                return Err(PlanError::Reference(format!("proposal does not address failed node {missing}")));
            }
            let revised = apply_atomic_ops(graph, &ops)?;
            Ok((ops, revised))
        });
        match verdict {
            Ok((ops, revised)) => return Ok(Proposal { ops, revised, usage }),
            Err(e) => {
                last_err = e.to_string();
                context = format!("{base}\nYour previous proposal was rejected: {last_err}\n");
            }
        }
    }
    Err(ProposalFailure { error: last_err, usage })
}

/// Cross-checks paired verification nodes. Disagreement yields a resolution
/// node over the conflicting pair unless one already exists.
pub fn meta_verify(graph: &PlanGraph) -> (AdaptDecision, Option<Vec<AtomicOp>>) {
    if graph.topology_kind != TopologyKind::CrossCheckNet {
        return (AdaptDecision::quiet(), None);
    }
    let mut groups: BTreeMap<String, Vec<&PlanNode>> = BTreeMap::new();
    for n in graph.nodes.values().filter(|n| n.kind == NodeKind::Verification) {
        groups.entry(normalize_answer(&n.instruction)).or_default().push(n);
    }
    let trigger = TriggerSpec::Inconsistency;
    for members in groups.values() {
        if members.len() < 2 || members.iter().any(|n| matches!(n.status, NodeStatus::Pending | NodeStatus::Dispatched)) {
            continue;
        }
        let done: Vec<&&PlanNode> = members.iter().filter(|n| n.status == NodeStatus::Succeeded).collect();
        for (i, a) in done.iter().enumerate() {
            for b in &done[i + 1..] {
                let (ra, rb) = (a.result.as_deref().unwrap_or(""), b.result.as_deref().unwrap_or(""));
                if answers_match(ra, rb) {
                    continue;
                }
                let evidence = format!("{}={ra:?} vs {}={rb:?}", a.id, b.id);
                let decision = AdaptDecision::fire(&trigger, evidence);
                let covered = graph.nodes.values().any(|r| {
                    r.kind == NodeKind::Resolution && {
                        let preds = graph.predecessors(&r.id);
                        preds.contains(&&a.id) && preds.contains(&&b.id)
                    }
                });
                if covered {
                    return (decision, None);
                }
                let rid = NodeId::new(format!("R_{}_{}", a.id, b.id));
                let node = PlanNode::new(rid.clone(), NodeKind::Resolution, format!("resolve(${}, ${})", a.id, b.id))
                    .with_title("resolve conflict");
                let ops = vec![
                    AtomicOp::AddNode(node),
                    AtomicOp::AddEdge(PlanEdge::new(a.id.clone(), rid.clone())),
                    AtomicOp::AddEdge(PlanEdge::new(b.id.clone(), rid)),
                ];
                return (decision, Some(ops));
            }
        }
    }
    (AdaptDecision::quiet(), None)
}

/// The pruned graph at every `period_n`-th step, otherwise nothing.
pub fn prune_trigger(graph: &PlanGraph, traj: &Trajectory, period_n: u32) -> Option<PlanGraph> {
    let n = step_count(traj);
    (period_n > 0 && n > 0 && n % period_n == 0).then(|| prune_completed(graph))
}
