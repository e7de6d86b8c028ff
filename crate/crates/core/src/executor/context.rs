//! The bounded view of an episode handed to each agent.

use std::fmt::Write as _;

use crate::plan::{ContextPolicy, EventKind, NodeStatus, PlanGraph, Trajectory, TrajectoryEvent};

pub fn event_label(kind: EventKind) -> &'static str {
    match kind {
        EventKind::PlanInit => "plan_init",
        EventKind::Dispatch => "dispatch",
        EventKind::ToolCall => "tool_call",
        EventKind::Observation => "observation",
        EventKind::Revision => "revision",
        EventKind::FailureSignal => "failure_signal",
        EventKind::Judge => "judge",
        EventKind::Final => "final",
    }
}

/// One-line rendering: `step <n> <kind> [<node>] <detail>`.
pub fn render_event(e: &TrajectoryEvent) -> String {
    let mut s = format!("step {} {}", e.step, event_label(e.kind));
    if let Some(n) = &e.node {
        let _ = write!(s, " {n}");
    }
    if !e.detail.is_empty() {
        let detail: String = e.detail.chars().take(160).collect();
        let _ = write!(s, " {}", detail.replace('\n', " "));
    }
    s
}

/// The query, summaries of completed nodes (if enabled) and the last
/// `window_k` events. Deterministic in its inputs.
pub fn aggregate_context(traj: &Trajectory, graph: &PlanGraph, policy: &ContextPolicy) -> String {
    let mut out = format!("query: {}\n", traj.query);
    if policy.include_summaries {
        let done: Vec<_> = graph
            .nodes
            .values()
            .filter(|n| n.status == NodeStatus::Succeeded)
            .collect();
        if !done.is_empty() {
            out.push_str("completed:\n");
            for n in done {
                let _ = writeln!(out, "- {}: {}", n.id, n.result.as_deref().unwrap_or(""));
            }
        }
    }
    if policy.window_k > 0 && !traj.events.is_empty() {
        out.push_str("recent:\n");
        let start = traj.events.len().saturating_sub(policy.window_k);
        for e in &traj.events[start..] {
            let _ = writeln!(out, "- {}", render_event(e));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{CostClass, PlanNode, TopologyKind};

    #[test]
    fn empty_history_is_just_the_query() {
        let t = Trajectory::new("what?");
        let g = PlanGraph::new(TopologyKind::Dag);
        assert_eq!(aggregate_context(&t, &g, &ContextPolicy::default()), "query: what?\n");
    }

    #[test]
    fn window_and_summaries() {
        let mut t = Trajectory::new("q");
        for s in 1..=5 {
            t.push(TrajectoryEvent::new(s, EventKind::Dispatch, CostClass::Exec).for_node(&"A".into()));
        }
        let g = PlanGraph::new(TopologyKind::Dag).with_node(
            PlanNode::task("A", "x").with_status(NodeStatus::Succeeded).with_result("42"),
        );
        let ctx = aggregate_context(&t, &g, &ContextPolicy { window_k: 2, include_summaries: true });
        assert!(ctx.contains("- A: 42"));
        assert!(ctx.contains("step 4 dispatch A") && ctx.contains("step 5 dispatch A"));
        assert!(!ctx.contains("step 3"));
        let bare = aggregate_context(&t, &g, &ContextPolicy { window_k: 0, include_summaries: false });
        assert_eq!(bare, "query: q\n");
        assert_eq!(ctx, aggregate_context(&t, &g, &ContextPolicy { window_k: 2, include_summaries: true }));
    }
}
