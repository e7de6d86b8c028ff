use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use crate::error::{PlanError, PlanResult};
use crate::plan::{NodeId, PlanGraph};

/// An executable instruction handed to one agent role.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Directive {
    pub node: NodeId,
    pub instruction: String,
    pub role: String,
    pub issued_at_step: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    PlanInit,
    Dispatch,
    ToolCall,
    Observation,
    Revision,
    FailureSignal,
    Judge,
    Final,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostClass {
    Plan,
    Exec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEvent {
    pub step: u32,
    pub kind: EventKind,
    #[serde(default)]
    pub node: Option<NodeId>,
    #[serde(default)]
    pub detail: String,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub wall_ms: u64,
    pub cost_class: CostClass,
    /// Executor flagged the observation as anomalous.
    #[serde(default)]
    pub anomalous: bool,
}

impl TrajectoryEvent {
    pub fn new(step: u32, kind: EventKind, cost_class: CostClass) -> Self {
        TrajectoryEvent {
            step,
            kind,
            node: None,
            detail: String::new(),
            tokens_in: 0,
            tokens_out: 0,
            wall_ms: 0,
            cost_class,
            anomalous: false,
        }
    }

    pub fn for_node(mut self, node: &NodeId) -> Self {
        self.node = Some(node.clone());
        self
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }

    pub fn with_tokens(mut self, tokens_in: u64, tokens_out: u64) -> Self {
        self.tokens_in = tokens_in;
        self.tokens_out = tokens_out;
        self
    }

    pub fn with_wall_ms(mut self, wall_ms: u64) -> Self {
        self.wall_ms = wall_ms;
        self
    }

    pub fn tokens(&self) -> u64 {
        self.tokens_in + self.tokens_out
    }

    /// Planning events bill to `Plan`, tool traffic to `Exec`.
    pub fn validate(&self) -> PlanResult<()> {
        let expected = match self.kind {
            EventKind::PlanInit | EventKind::Revision => Some(CostClass::Plan),
            EventKind::ToolCall | EventKind::Observation => Some(CostClass::Exec),
            _ => None,
        };
        match expected {
            Some(c) if c != self.cost_class => Err(PlanError::InvalidEvent(format!(
                "{:?} event at step {} must carry cost class {:?}",
                self.kind, self.step, c
            ))),
            _ => Ok(()),
        }
    }
}

/// Counters derived from the event list.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Aggregates {
    pub c_total_tokens: u64,
    pub c_plan_tokens: u64,
    pub c_exec_tokens: u64,
    pub n_fail: u32,
    pub n_revisions: u32,
    pub n_retries: u32,
    pub n_steps: u32,
}

/// Folds an event list into [`Aggregates`].
///
/// A step is one dispatch round, so `n_steps` counts distinct steps carrying a
/// `Dispatch` event; `n_retries` counts dispatches of a node already dispatched
/// earlier in the log.
pub fn recompute_aggregates(events: &[TrajectoryEvent]) -> PlanResult<Aggregates> {
    let mut agg = Aggregates::default();
    let mut previous = 0u32;
    let mut dispatched: BTreeSet<&NodeId> = BTreeSet::new();
    let mut dispatch_steps: BTreeSet<u32> = BTreeSet::new();
    for ev in events {
        if ev.step < previous {
            return Err(PlanError::OutOfOrder { previous, found: ev.step });
        }
        previous = ev.step;
        match ev.cost_class {
            CostClass::Plan => agg.c_plan_tokens += ev.tokens(),
            CostClass::Exec => agg.c_exec_tokens += ev.tokens(),
        }
        match ev.kind {
            EventKind::FailureSignal => agg.n_fail += 1,
            EventKind::Revision => agg.n_revisions += 1,
            EventKind::Dispatch => {
                dispatch_steps.insert(ev.step);
                if let Some(n) = &ev.node {
                    if !dispatched.insert(n) {
                        agg.n_retries += 1;
                    }
                }
            }
            _ => {}
        }
    }
    agg.c_total_tokens = agg.c_plan_tokens + agg.c_exec_tokens;
    agg.n_steps = dispatch_steps.len() as u32;
    Ok(agg)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub success: bool,
    pub normalized_answer: String,
    pub rationale: String,
}

/// Whether wall-clock fields survive encoding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EncodeMode {
    Full,
    /// `wall_ms` zeroed so scripted runs compare byte-for-byte.
    Replay,
}

/// One episode's record: events, answer, verdict, and derived counters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub query: String,
    #[serde(default)]
    pub label: String,
    pub events: Vec<TrajectoryEvent>,
    pub final_answer: Option<String>,
    /// `None` until judged.
    pub verdict: Option<JudgeVerdict>,
    pub aggregates: Aggregates,
    /// The plan as first initialized, before any execution.
    #[serde(default)]
    pub initial_graph: Option<PlanGraph>,
    #[serde(default)]
    pub final_graph: Option<PlanGraph>,
}

impl Trajectory {
    pub fn new(query: impl Into<String>) -> Self {
        Trajectory {
            query: query.into(),
            label: String::new(),
            events: Vec::new(),
            final_answer: None,
            verdict: None,
            aggregates: Aggregates::default(),
            initial_graph: None,
            final_graph: None,
        }
    }

    /// R(τ): 1 on a judged success, else 0.
    pub fn success(&self) -> bool {
        self.verdict.as_ref().is_some_and(|v| v.success)
    }

    pub fn is_judged(&self) -> bool {
        self.verdict.is_some()
    }

    pub fn push(&mut self, event: TrajectoryEvent) {
        self.events.push(event);
    }

    /// Recomputes and stores the aggregates.
    pub fn refresh(&mut self) -> PlanResult<()> {
        self.aggregates = recompute_aggregates(&self.events)?;
        Ok(())
    }

    pub fn current_step(&self) -> u32 {
        self.events.last().map(|e| e.step).unwrap_or(0)
    }

    pub fn total_wall_ms(&self) -> u64 {
        self.events.iter().map(|e| e.wall_ms).sum()
    }

    /// Checks event cost classes and that stored aggregates match the log.
    pub fn check_consistency(&self) -> PlanResult<()> {
        for e in &self.events {
            e.validate()?;
        }
        let fresh = recompute_aggregates(&self.events)?;
        if fresh != self.aggregates {
            return Err(PlanError::InvalidEvent(format!(
                "stored aggregates {:?} disagree with events {:?}",
                self.aggregates, fresh
            )));
        }
        Ok(())
    }

    fn for_mode(&self, mode: EncodeMode) -> std::borrow::Cow<'_, Trajectory> {
        match mode {
            EncodeMode::Full => std::borrow::Cow::Borrowed(self),
            EncodeMode::Replay => {
                let mut t = self.clone();
                for e in &mut t.events {
                    e.wall_ms = 0;
                }
                std::borrow::Cow::Owned(t)
            }
        }
    }

    /// Single-line canonical record.
    pub fn encode_with(&self, mode: EncodeMode) -> String {
        super::encode(self.for_mode(mode).as_ref())
    }

    /// Line-delimited log: a header record, then one event per line.
    pub fn to_log(&self, mode: EncodeMode) -> String {
        let t = self.for_mode(mode);
        let header = LogHeader {
            record: "trajectory".into(),
            query: t.query.clone(),
            label: t.label.clone(),
            final_answer: t.final_answer.clone(),
            verdict: t.verdict.clone(),
            aggregates: t.aggregates.clone(),
            initial_graph: t.initial_graph.clone(),
            final_graph: t.final_graph.clone(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for e in &t.events {
            out.push_str(&serde_json::to_string(e).expect("event serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_log(text: &str) -> PlanResult<Trajectory> {
        let schema = |m: String| PlanError::Schema { entity: "trajectory log", message: m };
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let first = lines.next().ok_or_else(|| schema("empty log".into()))?;
        let header: LogHeader =
            serde_json::from_str(first).map_err(|e| schema(format!("header: {e}")))?;
        if header.record != "trajectory" {
            return Err(schema(format!("record: expected `trajectory`, found `{}`", header.record)));
        }
        let mut events = Vec::new();
        for (i, line) in lines.enumerate() {
            let ev: TrajectoryEvent =
                serde_json::from_str(line).map_err(|e| schema(format!("event {}: {e}", i + 1)))?;
            events.push(ev);
        }
        Ok(Trajectory {
            query: header.query,
            label: header.label,
            events,
            final_answer: header.final_answer,
            verdict: header.verdict,
            aggregates: header.aggregates,
            initial_graph: header.initial_graph,
            final_graph: header.final_graph,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct LogHeader {
    record: String,
    query: String,
    #[serde(default)]
    label: String,
    final_answer: Option<String>,
    verdict: Option<JudgeVerdict>,
    aggregates: Aggregates,
    #[serde(default)]
    initial_graph: Option<PlanGraph>,
    #[serde(default)]
    final_graph: Option<PlanGraph>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(step: u32, kind: EventKind, class: CostClass, out: u64) -> TrajectoryEvent {
        TrajectoryEvent::new(step, kind, class).with_tokens(0, out)
    }

    #[test]
    fn empty_log_is_all_zero() {
        assert_eq!(recompute_aggregates(&[]).unwrap(), Aggregates::default());
    }

    #[test]
    fn sums_by_cost_class() {
        let events = vec![
            ev(0, EventKind::PlanInit, CostClass::Plan, 100),
            ev(1, EventKind::ToolCall, CostClass::Exec, 300),
        ];
        let a = recompute_aggregates(&events).unwrap();
        assert_eq!((a.c_plan_tokens, a.c_exec_tokens, a.c_total_tokens), (100, 300, 400));
    }

    #[test]
    fn counts_failure_signals() {
        let events = vec![
            ev(1, EventKind::FailureSignal, CostClass::Exec, 0),
            ev(2, EventKind::FailureSignal, CostClass::Exec, 0),
        ];
        assert_eq!(recompute_aggregates(&events).unwrap().n_fail, 2);
    }

    #[test]
    fn out_of_order_steps_rejected() {
        let events = vec![
            ev(2, EventKind::ToolCall, CostClass::Exec, 1),
            ev(1, EventKind::ToolCall, CostClass::Exec, 1),
        ];
        assert!(matches!(recompute_aggregates(&events), Err(PlanError::OutOfOrder { .. })));
    }

    #[test]
    fn retries_and_steps_from_dispatches() {
        let a = NodeId::from("A");
        let events = vec![
            TrajectoryEvent::new(1, EventKind::Dispatch, CostClass::Exec).for_node(&a),
            TrajectoryEvent::new(1, EventKind::Dispatch, CostClass::Exec).for_node(&"B".into()),
            TrajectoryEvent::new(2, EventKind::Dispatch, CostClass::Exec).for_node(&a),
        ];
        let agg = recompute_aggregates(&events).unwrap();
        assert_eq!((agg.n_steps, agg.n_retries), (2, 1));
    }

    #[test]
    fn cost_class_rules() {
        assert!(ev(0, EventKind::PlanInit, CostClass::Exec, 0).validate().is_err());
        assert!(ev(0, EventKind::Observation, CostClass::Plan, 0).validate().is_err());
        assert!(ev(0, EventKind::Judge, CostClass::Plan, 0).validate().is_ok());
    }

    fn kind_strategy() -> impl Strategy<Value = EventKind> {
        prop_oneof![
            Just(EventKind::PlanInit),
            Just(EventKind::Dispatch),
            Just(EventKind::ToolCall),
            Just(EventKind::Observation),
            Just(EventKind::Revision),
            Just(EventKind::FailureSignal),
            Just(EventKind::Judge),
            Just(EventKind::Final),
        ]
    }

    proptest! {
        #[test]
        fn aggregates_match_single_pass_fold(
            raw in proptest::collection::vec((0u32..3, kind_strategy(), any::<bool>(), 0u64..500, 0u64..500, 0u8..4), 0..60)
        ) {
            let mut step = 0;
            let events: Vec<TrajectoryEvent> = raw.iter().map(|(inc, kind, plan, i, o, node)| {
                step += inc;
                let class = if *plan { CostClass::Plan } else { CostClass::Exec };
                TrajectoryEvent::new(step, *kind, class)
                    .with_tokens(*i, *o)
                    .for_node(&NodeId::new(format!("n{node}")))
            }).collect();
            let agg = recompute_aggregates(&events).unwrap();
            // independent fold
            let plan: u64 = events.iter().filter(|e| e.cost_class == CostClass::Plan).map(|e| e.tokens_in + e.tokens_out).sum();
            let exec: u64 = events.iter().filter(|e| e.cost_class == CostClass::Exec).map(|e| e.tokens_in + e.tokens_out).sum();
            let fails = events.iter().filter(|e| e.kind == EventKind::FailureSignal).count() as u32;
            let revs = events.iter().filter(|e| e.kind == EventKind::Revision).count() as u32;
            let dispatches: Vec<&TrajectoryEvent> = events.iter().filter(|e| e.kind == EventKind::Dispatch).collect();
            let mut distinct_nodes: Vec<&NodeId> = dispatches.iter().filter_map(|e| e.node.as_ref()).collect();
            distinct_nodes.sort();
            distinct_nodes.dedup();
            let mut steps: Vec<u32> = dispatches.iter().map(|e| e.step).collect();
            steps.dedup();
            prop_assert_eq!(agg.c_plan_tokens, plan);
            prop_assert_eq!(agg.c_exec_tokens, exec);
            prop_assert_eq!(agg.c_total_tokens, plan + exec);
            prop_assert_eq!(agg.n_fail, fails);
            prop_assert_eq!(agg.n_revisions, revs);
            prop_assert_eq!(agg.n_retries as usize, dispatches.len() - distinct_nodes.len());
            prop_assert_eq!(agg.n_steps as usize, steps.len());
            // idempotent
            prop_assert_eq!(recompute_aggregates(&events).unwrap(), agg);
        }
    }
}
