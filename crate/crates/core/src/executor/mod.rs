//! The episode engine: initialize a plan, dispatch rounds of directives,
//! adapt when triggers fire, then synthesize and judge the answer.

pub mod agent;
pub mod context;
pub mod judge;
pub mod llm;
pub mod tools;
pub mod world;

use rayon::prelude::*;
use std::collections::BTreeMap;
use thiserror::Error;

use crate::adaptation::{meta_verify, propose_revision, should_adapt, AdaptDecision, ReviseOptions, RevisionMechanism, TriggerSpec, Usage};
use crate::error::{BackendError, PlanError};
use crate::navigation::{next_directives, role_for, vote, NavigationKind, VoteBallot};
use crate::paradigms::{initialize_plan, InitError};
use crate::plan::{
    AgentSystemSpec, CostClass, Directive, EventKind, JudgeVerdict, NodeId, NodeKind, NodeStatus,
    PlanConfiguration, PlanGraph, Trajectory, TrajectoryEvent,
};
use crate::planner::Planner;
use crate::topology::{apply_atomic_ops, prune_completed};

pub use agent::{execute_directive, AgentBackend, ExecEnv, LlmAgent, NodeOutcome, ScriptedAgent, Turn};
pub use context::{aggregate_context, render_event};
pub use judge::{answers_match, judge_exact, normalize_answer, JudgeMode};
pub use llm::{ChatBackend, ChatPlanner, HttpChatBackend};
pub use world::ScriptedWorld;

pub const DEFAULT_ROSTER: &[&str] = &["orchestrator", "searcher", "analyst", "verifier"];

/// Every default role with every registered tool.
pub fn default_agent_spec() -> AgentSystemSpec {
    AgentSystemSpec::uniform(DEFAULT_ROSTER, &tools::tool_names())
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// The collaborators an episode talks to.
#[derive(Clone, Copy)]
pub struct Backends<'a> {
    pub planner: &'a dyn Planner,
    pub agent: &'a dyn AgentBackend,
    pub world: &'a ScriptedWorld,
    /// Chat model and model name for the LLM judge.
    pub judge_chat: Option<(&'a dyn ChatBackend, &'a str)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EngineParams {
    pub judge: JudgeMode,
    /// Run a round's directives on the thread pool.
    pub concurrent: bool,
    pub revise_retries: u32,
    pub temperature: f64,
}

impl Default for EngineParams {
    fn default() -> Self {
        EngineParams { judge: JudgeMode::ExactNormalized, concurrent: true, revise_retries: 2, temperature: 0.0 }
    }
}

/// How an episode ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FinalReason {
    Answer,
    Budget,
    Stalled,
    InitFailed,
}

impl FinalReason {
    pub fn label(self) -> &'static str {
        match self {
            FinalReason::Answer => "answer",
            FinalReason::Budget => "budget",
            FinalReason::Stalled => "stalled",
            FinalReason::InitFailed => "init-failed",
        }
    }
}

struct Episode<'a> {
    config: &'a PlanConfiguration,
    spec: &'a AgentSystemSpec,
    backends: Backends<'a>,
    seed: u64,
    params: &'a EngineParams,
    traj: Trajectory,
    graph: PlanGraph,
    step: u32,
}

/// Runs one query to completion. Planner backend failures during
/// initialization are returned as [`EngineError::Backend`]; everything else
/// that goes wrong inside the episode is recorded in the trajectory.
pub fn run_episode(
    query: &str,
    gold: Option<&str>,
    config: &PlanConfiguration,
    spec: &AgentSystemSpec,
    backends: Backends<'_>,
    seed: u64,
    params: &EngineParams,
) -> Result<Trajectory, EngineError> {
    let mut traj = Trajectory::new(query);
    traj.label = config.name.clone();
    let mut ep = Episode {
        config,
        spec,
        backends,
        seed,
        params,
        traj,
        graph: PlanGraph::new(config.topology_kind),
        step: 0,
    };
    if config.budgets.max_steps == 0 {
        return ep.finish(FinalReason::Budget, gold);
    }
    config.validate()?;
    spec.validate(&tools::tool_names())?;

    match initialize_plan(query, config, backends.planner, seed) {
        Ok(init) => {
            ep.traj.push(init.event);
            ep.graph = init.graph;
            ep.traj.initial_graph = Some(ep.graph.clone());
        }
        Err(InitError::Backend(e)) => return Err(EngineError::Backend(e)),
        Err(InitError::Plan { error, usage }) => {
            ep.traj.push(
                TrajectoryEvent::new(0, EventKind::PlanInit, CostClass::Plan)
                    .with_tokens(usage.tokens_in, usage.tokens_out)
                    .with_detail(format!("{}: {error}", config.init.kind.label())),
            );
            return ep.finish(FinalReason::InitFailed, gold);
        }
    }

    let reason = loop {
        let retries = ep.retry_directives()?;
        let pending = ep.graph.count_status(NodeStatus::Pending);
        if pending == 0 && retries.is_empty() {
            break FinalReason::Answer;
        }
        ep.traj.refresh()?;
        if ep.step >= config.budgets.max_steps || ep.traj.aggregates.c_total_tokens >= config.budgets.max_total_tokens {
            break FinalReason::Budget;
        }
        let mut batch = retries;
        let cap = config.navigation.max_concurrency.max(1);
        for d in next_directives(&ep.graph, &config.navigation, &spec.roster, ep.step + 1)? {
            if batch.len() >= cap {
                break;
            }
            if !batch.iter().any(|b| b.node == d.node) {
                batch.push(d);
            }
        }
        if batch.is_empty() {
            break FinalReason::Stalled;
        }
        ep.step += 1;
        ep.run_round(batch)?;
        ep.adapt()?;
    };
    ep.finish(reason, gold)
}

impl Episode<'_> {
    /// Failed nodes a revision asked to re-run, whose inputs are available and
    /// whose retry budget is not spent.
    fn retry_directives(&self) -> Result<Vec<Directive>, PlanError> {
        let limit = 1 + self.config.budgets.max_retries;
        let mut out = Vec::new();
        for n in self.graph.nodes.values() {
            if n.status != NodeStatus::Failed || !n.retry_requested || n.attempts >= limit {
                continue;
            }
            let inputs_ready = self
                .graph
                .predecessors(&n.id)
                .iter()
                .all(|p| self.graph.node(p).is_some_and(|x| x.status == NodeStatus::Succeeded));
            if inputs_ready {
                let role = role_for(self.config.navigation.kind, n, &self.spec.roster)?;
                out.push(Directive { node: n.id.clone(), instruction: n.instruction.clone(), role, issued_at_step: self.step + 1 });
            }
        }
        out.truncate(self.config.navigation.max_concurrency.max(1));
        Ok(out)
    }

    fn resolved(&self) -> BTreeMap<NodeId, String> {
        self.graph
            .nodes
            .values()
            .filter(|n| matches!(n.status, NodeStatus::Succeeded | NodeStatus::Pruned))
            .filter_map(|n| n.result.clone().map(|r| (n.id.clone(), r)))
            .collect()
    }

    fn run_round(&mut self, mut batch: Vec<Directive>) -> Result<(), PlanError> {
        batch.sort_by(|a, b| a.node.cmp(&b.node));
        let step = self.step;
        let base_context = aggregate_context(&self.traj, &self.graph, &self.spec.context_policy);
        let resolved = self.resolved();
        for d in &mut batch {
            d.role = self.spec.active_selector.pick(&d.role);
            self.graph.node_mut(&d.node).expect("directive node exists").transition(NodeStatus::Dispatched)?;
        }
        let world = self.backends.world;
        let agent = self.backends.agent;
        let seed = self.seed;
        let jobs: Vec<(Directive, String, u32, Vec<String>)> = batch
            .into_iter()
            .map(|d| {
                let node = self.graph.node(&d.node).expect("directive node exists");
                let mut ctx = base_context.clone();
                if !node.notes.is_empty() {
                    ctx.push_str("notes:\n");
                    for n in &node.notes {
                        ctx.push_str(&format!("- {n}\n"));
                    }
                }
                let tools = self.spec.toolset.get(&d.role).cloned().unwrap_or_default();
                (d, ctx, node.attempts, tools)
            })
            .collect();
        let exec = |(d, ctx, attempt, tools): &(Directive, String, u32, Vec<String>)| {
            let env = ExecEnv { world, resolved: &resolved, allowed_tools: tools.clone(), seed, attempt: *attempt };
            execute_directive(d, ctx, agent, &env, world.forced_failure(step, d.node.as_str()))
        };
        let outcomes: Vec<NodeOutcome> = if self.params.concurrent && jobs.len() > 1 {
            jobs.par_iter().map(exec).collect()
        } else {
            jobs.iter().map(exec).collect()
        };

        let mut failures = Vec::new();
        for ((d, _, _, _), outcome) in jobs.iter().zip(outcomes) {
            self.traj.push(TrajectoryEvent::new(step, EventKind::Dispatch, CostClass::Exec).for_node(&d.node).with_detail(d.role.clone()));
            let last = outcome.turns.len().saturating_sub(1);
            for (i, turn) in outcome.turns.iter().enumerate() {
                self.traj.push(
                    TrajectoryEvent::new(step, EventKind::ToolCall, CostClass::Exec)
                        .for_node(&d.node)
                        .with_detail(turn.call.clone())
                        .with_tokens(turn.tokens_in, 0),
                );
                let mut obs = TrajectoryEvent::new(step, EventKind::Observation, CostClass::Exec)
                    .for_node(&d.node)
                    .with_detail(turn.output.clone())
                    .with_tokens(0, turn.tokens_out);
                obs.anomalous = !turn.ok;
                if i == last {
                    obs.wall_ms = outcome.wall_ms;
                }
                self.traj.push(obs);
            }
            if outcome.turns.is_empty() {
                let mut obs = TrajectoryEvent::new(step, EventKind::Observation, CostClass::Exec)
                    .for_node(&d.node)
                    .with_detail(outcome.output.clone())
                    .with_wall_ms(outcome.wall_ms);
                obs.anomalous = !outcome.succeeded;
                self.traj.push(obs);
            }
            let node = self.graph.node_mut(&d.node).expect("directive node exists");
            if outcome.succeeded {
                node.transition(NodeStatus::Succeeded)?;
                node.result = Some(outcome.output);
            } else {
                node.transition(NodeStatus::Failed)?;
                node.result = None;
                failures.push((d.node.clone(), outcome.output));
            }
        }
        for (node, error) in failures {
            self.traj.push(TrajectoryEvent::new(step, EventKind::FailureSignal, CostClass::Exec).for_node(&node).with_detail(error));
        }
        Ok(())
    }

    fn revision_event(&self, usage: &Usage, detail: String) -> TrajectoryEvent {
        TrajectoryEvent::new(self.step, EventKind::Revision, CostClass::Plan)
            .with_tokens(usage.tokens_in, usage.tokens_out)
            .with_detail(detail)
    }

    fn adapt(&mut self) -> Result<(), PlanError> {
        let decision = should_adapt(&self.traj, &self.graph, &self.config.adaptation_triggers);
        if !decision.fired {
            return Ok(());
        }
        match self.config.adaptation {
            RevisionMechanism::PeriodicPruning if matches!(decision.trigger, Some(TriggerSpec::Periodic(_))) => {
                let pruned = prune_completed(&self.graph);
                let removed = pruned.count_status(NodeStatus::Pruned) - self.graph.count_status(NodeStatus::Pruned);
                if removed > 0 {
                    self.graph = pruned;
                    let ev = self.revision_event(&Usage::default(), format!("{}: pruned {removed} nodes", decision.reason()));
                    self.traj.push(ev);
                }
                Ok(())
            }
            RevisionMechanism::ConsensusVoting => {
                let limit = 1 + self.config.budgets.max_retries;
                for n in self.graph.nodes.values_mut() {
                    if n.status == NodeStatus::Failed && n.attempts < limit {
                        n.retry_requested = true;
                    }
                }
                Ok(())
            }
            RevisionMechanism::MetaVerification => {
                let (check, ops) = meta_verify(&self.graph);
                if let Some(ops) = ops {
                    match apply_atomic_ops(&self.graph, &ops) {
                        Ok(g) => {
                            self.graph = g;
                            let ev = self.revision_event(&Usage::default(), format!("meta-verification: {}", check.reason()));
                            self.traj.push(ev);
                        }
                        Err(e) => self.adaptation_failed(&Usage::default(), e.to_string()),
                    }
                }
                self.consult_planner(&decision);
                Ok(())
            }
            _ => {
                self.consult_planner(&decision);
                Ok(())
            }
        }
    }

    fn consult_planner(&mut self, decision: &AdaptDecision) {
        let opts = ReviseOptions {
            mechanism: self.config.adaptation,
            retries: self.params.revise_retries,
            seed: self.seed.wrapping_add(self.step as u64 * 7919),
            temperature: self.params.temperature,
            ..ReviseOptions::default()
        };
        match propose_revision(&self.graph, &self.traj, self.backends.planner, decision, &opts) {
            Ok(p) => {
                let ev = self.revision_event(&p.usage, format!("{} | {} ops", decision.reason(), p.ops.len()));
                self.graph = p.revised;
                self.traj.push(ev);
            }
            Err(f) => self.adaptation_failed(&f.usage, f.error),
        }
    }

    fn adaptation_failed(&mut self, usage: &Usage, error: String) {
        if usage.calls > 0 {
            let ev = self.revision_event(usage, format!("rejected after {} calls", usage.calls));
            self.traj.push(ev);
        }
        self.traj.push(
            TrajectoryEvent::new(self.step, EventKind::FailureSignal, CostClass::Exec).with_detail(format!("adaptation failed: {error}")),
        );
    }

    fn finish(mut self, reason: FinalReason, gold: Option<&str>) -> Result<Trajectory, EngineError> {
        let answer = match reason {
            FinalReason::Answer => synthesize_answer(&self.graph, self.config.navigation.kind),
            _ => None,
        };
        let step = self.step;
        if let Some(gold) = gold {
            let (verdict, tin, tout) = match reason {
                FinalReason::Budget => (
                    JudgeVerdict { success: false, normalized_answer: String::new(), rationale: "budget exhausted".into() },
                    0,
                    0,
                ),
                _ => match self.params.judge {
                    JudgeMode::ExactNormalized => (judge_exact(answer.as_deref(), gold), 0, 0),
                    JudgeMode::LlmJudge => {
                        let (chat, model) = self
                            .backends
                            .judge_chat
                            .ok_or_else(|| BackendError::Config("LLM judge requested without a chat backend".into()))?;
                        judge::judge_with_llm(chat, model, &self.traj.query, answer.as_deref(), gold)?
                    }
                },
            };
            self.traj.push(
                TrajectoryEvent::new(step, EventKind::Judge, CostClass::Plan)
                    .with_tokens(tin, tout)
                    .with_detail(if verdict.success { "correct" } else { "incorrect" }),
            );
            self.traj.verdict = Some(verdict);
        }
        self.traj.push(TrajectoryEvent::new(step, EventKind::Final, CostClass::Exec).with_detail(reason.label()));
        self.traj.final_answer = answer;
        self.traj.final_graph = Some(self.graph);
        self.traj.refresh()?;
        Ok(self.traj)
    }
}

/// The episode's answer from the finished graph.
pub fn synthesize_answer(graph: &PlanGraph, nav: NavigationKind) -> Option<String> {
    let sinks = graph.sinks();
    let done: Vec<_> = sinks.iter().filter(|n| n.status == NodeStatus::Succeeded).collect();
    match nav {
        NavigationKind::JointDeliberation => {
            let ballot = VoteBallot {
                candidates: done.iter().map(|n| (n.id.clone(), n.result.clone().unwrap_or_default())).collect(),
            };
            return vote(&ballot);
        }
        NavigationKind::ConflictResolution => {
            if let Some(r) = done.iter().find(|n| n.kind == NodeKind::Resolution) {
                return r.result.clone();
            }
        }
        _ => {}
    }
    if sinks.is_empty() || done.len() != sinks.len() {
        return None;
    }
    let parts: Vec<String> = done.iter().map(|n| n.result.clone().unwrap_or_default()).collect();
    Some(parts.join(", "))
}
