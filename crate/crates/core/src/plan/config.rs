use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::adaptation::{RevisionMechanism, TriggerSpec};
use crate::error::{PlanError, PlanResult};
use crate::navigation::{NavigationKind, NavigationPolicy};
use crate::paradigms::{InitKind, InitStrategy};
use crate::plan::TopologyKind;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budgets {
    /// Dispatch rounds allowed per episode.
    pub max_steps: u32,
    pub max_total_tokens: u64,
    /// Re-dispatches allowed per node after its first attempt.
    pub max_retries: u32,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets { max_steps: 40, max_total_tokens: 200_000, max_retries: 2 }
    }
}

/// A full planning configuration: topology, initialization, adaptation and
/// navigation, plus execution budgets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanConfiguration {
    #[serde(default)]
    pub name: String,
    pub topology_kind: TopologyKind,
    pub init: InitStrategy,
    pub adaptation: RevisionMechanism,
    pub adaptation_triggers: Vec<TriggerSpec>,
    pub navigation: NavigationPolicy,
    #[serde(default)]
    pub budgets: Budgets,
}

impl PlanConfiguration {
    pub fn validate(&self) -> PlanResult<()> {
        let bad = |m: String| Err(PlanError::InvalidConfig(m));
        if self.navigation.max_concurrency == 0 {
            return bad("navigation.max_concurrency must be >= 1".into());
        }
        if self.navigation.kind == NavigationKind::Sequential && self.navigation.max_concurrency != 1 {
            return bad("sequential navigation requires max_concurrency = 1".into());
        }
        let b = &self.budgets;
        if b.max_steps == 0 || b.max_total_tokens == 0 || b.max_retries == 0 {
            return bad("budgets must be strictly positive".into());
        }
        if self.adaptation_triggers.is_empty() {
            return bad("adaptation_triggers must list at least one trigger (use never)".into());
        }
        for t in &self.adaptation_triggers {
            t.validate().map_err(PlanError::InvalidConfig)?;
        }
        let cross_check = self.topology_kind == TopologyKind::CrossCheckNet;
        if (self.init.kind == InitKind::InconsistencyTrigger) != cross_check {
            return bad("inconsistency_trigger initialization pairs with the cross_check_net topology".into());
        }
        if self.adaptation == RevisionMechanism::MetaVerification && !cross_check {
            return bad("meta_verification adaptation requires the cross_check_net topology".into());
        }
        if self.adaptation == RevisionMechanism::PeriodicPruning && self.topology_kind != TopologyKind::Dag {
            return bad("periodic_pruning adaptation requires the dag topology".into());
        }
        if self.init.max_nodes == 0 || self.init.max_depth == 0 {
            return bad("init bounds must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextPolicy {
    /// How many trailing events the context window shows.
    pub window_k: usize,
    pub include_summaries: bool,
}

impl Default for ContextPolicy {
    fn default() -> Self {
        ContextPolicy { window_k: 6, include_summaries: true }
    }
}

/// Which agent acts on a directive.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActiveSelector {
    /// The role navigation wrote onto the directive.
    DirectiveRole,
    /// Every directive goes to one role.
    Fixed(String),
}

impl ActiveSelector {
    /// The role that acts on a directive navigation assigned to `role`.
    pub fn pick(&self, role: &str) -> String {
        match self {
            ActiveSelector::DirectiveRole => role.to_string(),
            ActiveSelector::Fixed(r) => r.clone(),
        }
    }
}

/// The execution substrate: who can act, with which tools, seeing what history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentSystemSpec {
    pub roster: Vec<String>,
    pub toolset: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub context_policy: ContextPolicy,
    pub active_selector: ActiveSelector,
}

impl AgentSystemSpec {
    /// Every role gets every listed tool.
    pub fn uniform(roster: &[&str], tools: &[&str]) -> Self {
        let roster: Vec<String> = roster.iter().map(|r| r.to_string()).collect();
        let toolset = roster
            .iter()
            .map(|r| (r.clone(), tools.iter().map(|t| t.to_string()).collect()))
            .collect();
        AgentSystemSpec {
            roster,
            toolset,
            context_policy: ContextPolicy::default(),
            active_selector: ActiveSelector::DirectiveRole,
        }
    }

    pub fn validate(&self, known_tools: &[&str]) -> PlanResult<()> {
        if self.roster.is_empty() {
            return Err(PlanError::InvalidConfig("agent roster is empty".into()));
        }
        for (role, tools) in &self.toolset {
            for t in tools {
                if !known_tools.contains(&t.as_str()) {
                    return Err(PlanError::InvalidConfig(format!(
                        "tool `{t}` of role `{role}` is not in the tool registry"
                    )));
                }
            }
        }
        if let ActiveSelector::Fixed(r) = &self.active_selector {
            if !self.roster.contains(r) {
                return Err(PlanError::InvalidConfig(format!("fixed role `{r}` not in roster")));
            }
        }
        Ok(())
    }

    pub fn allows(&self, role: &str, tool: &str) -> bool {
        self.toolset.get(role).is_some_and(|ts| ts.iter().any(|t| t == tool))
    }
}
