//! The seven catalogued planning paradigms as concrete configurations, and
//! the initialization strategies that turn a query into a first plan graph.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::sync::OnceLock;

use crate::adaptation::{RevisionMechanism, TriggerSpec, Usage};
use crate::error::{BackendError, PlanError, PlanResult};
use crate::executor::tools;
use crate::markup::{parse_plan_fragment, parse_plan_markup};
use crate::navigation::{NavigationKind, NavigationPolicy};
use crate::plan::{
    validate_graph, Budgets, CostClass, EventKind, NodeId, NodeKind, PlanConfiguration, PlanEdge,
    PlanGraph, PlanNode, TopologyKind, TrajectoryEvent,
};
use crate::planner::{Planner, PlannerRequest};
use crate::topology::graph_summary;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    PlannerDecompose,
    SopConfiguration,
    RoleDefinition,
    DependencyParsing,
    HybridPlanning,
    FlowConstruction,
    InconsistencyTrigger,
}

impl InitKind {
    pub fn label(self) -> &'static str {
        match self {
            InitKind::PlannerDecompose => "planner_decompose",
            InitKind::SopConfiguration => "sop_configuration",
            InitKind::RoleDefinition => "role_definition",
            InitKind::DependencyParsing => "dependency_parsing",
            InitKind::HybridPlanning => "hybrid_planning",
            InitKind::FlowConstruction => "flow_construction",
            InitKind::InconsistencyTrigger => "inconsistency_trigger",
        }
    }
}

fn default_parse_retries() -> u32 {
    2
}
fn default_max_depth() -> u32 {
    4
}
fn default_max_nodes() -> u32 {
    24
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitStrategy {
    pub kind: InitKind,
    /// Extra planner calls allowed after unparseable markup.
    #[serde(default = "default_parse_retries")]
    pub parse_retries: u32,
    /// Expansion depth bound for iterative construction.
    #[serde(default = "default_max_depth")]
    pub max_depth: u32,
    #[serde(default = "default_max_nodes")]
    pub max_nodes: u32,
}

impl InitStrategy {
    pub fn new(kind: InitKind) -> Self {
        InitStrategy {
            kind,
            parse_retries: default_parse_retries(),
            max_depth: default_max_depth(),
            max_nodes: default_max_nodes(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParadigmEntry {
    pub name: &'static str,
    pub config: PlanConfiguration,
    pub description: &'static str,
    /// Table labels for the four dimensions.
    pub dimensions: [&'static str; 4],
}

fn config(
    name: &str,
    topology_kind: TopologyKind,
    init: InitKind,
    adaptation: RevisionMechanism,
    adaptation_triggers: Vec<TriggerSpec>,
    navigation: NavigationPolicy,
) -> PlanConfiguration {
    PlanConfiguration {
        name: name.to_string(),
        topology_kind,
        init: InitStrategy::new(init),
        adaptation,
        adaptation_triggers,
        navigation,
        budgets: Budgets::default(),
    }
}

fn build_registry() -> Vec<ParadigmEntry> {
    use NavigationKind as N;
    use RevisionMechanism as M;
    use TopologyKind as T;
    vec![
        ParadigmEntry {
            name: "OWL",
            config: config("OWL", T::Hierarchy, InitKind::PlannerDecompose, M::ManagerIntervention,
                vec![TriggerSpec::OnFailureSignal], NavigationPolicy::new(N::DynamicDispatch, 4)),
            description: "A planner sizes the task against the workers' abilities and emits an ordered \
                sub-task list. Failures are broadcast to a manager, which re-plans and injects revised \
                sub-tasks while dispatch proceeds dynamically.",
            dimensions: ["Dual Hierarchy", "Planner Decompose", "Manager Intervention", "Dynamic Dispatch"],
        },
        ParadigmEntry {
            name: "OAgents",
            config: config("OAgents", T::ModularGraph, InitKind::SopConfiguration, M::CriticLoopFeedback,
                vec![TriggerSpec::CriticLoop(3)], NavigationPolicy::new(N::DynamicDispatch, 4)),
            description: "A standard operating procedure fixes modules and their prerequisite edges. Work \
                runs in a loop; every few steps a critic cross-references intermediate results and may \
                restructure the remaining plan.",
            dimensions: ["Modular Graph", "SOP Configuration", "Critic-Loop Feedback", "Loop Execution"],
        },
        ParadigmEntry {
            name: "AgentOrchestra",
            config: config("AgentOrchestra", T::Hierarchy, InitKind::RoleDefinition, M::EnvFeedback,
                vec![TriggerSpec::EnvFeedback], NavigationPolicy::new(N::CentralizedRouting, 2)),
            description: "A central orchestrator defines specialist roles and routes each instruction to \
                the matching sub-agent. Anomalous environment feedback prompts the orchestrator to revise \
                the plan.",
            dimensions: ["Orch. Hierarchy", "Role Definition", "Env Feedback", "Centralized Routing"],
        },
        ParadigmEntry {
            name: "Flash-Searcher",
            config: config("Flash-Searcher", T::Dag, InitKind::DependencyParsing, M::PeriodicPruning,
                vec![TriggerSpec::Periodic(4)], NavigationPolicy::new(N::ConcurrentPaths, 4)),
            description: "The query is parsed into a dependency DAG in one pass. Every node whose \
                dependencies are met runs concurrently, and at fixed step intervals resolved nodes are \
                summarized and pruned from the workflow.",
            dimensions: ["Parallel DAG", "Dependency Parsing", "Workflow Pruning", "Concurrent Paths"],
        },
        ParadigmEntry {
            name: "JoyAgent",
            config: config("JoyAgent", T::Hierarchy, InitKind::HybridPlanning, M::ConsensusVoting,
                vec![TriggerSpec::OnFailureSignal], NavigationPolicy::new(N::JointDeliberation, 3)),
            description: "A supervisor plan is combined with reactive leaf executors. The final step is \
                answered by several leaves independently and their answers are settled by consensus vote; \
                failed leaves retry locally.",
            dimensions: ["Collective Hierarchy", "Hybrid Planning", "Consensus Voting", "Joint Deliberation"],
        },
        ParadigmEntry {
            name: "FlowSearch",
            config: config("FlowSearch", T::ThoughtGraph, InitKind::FlowConstruction, M::DynamicExpansion,
                vec![TriggerSpec::OnFailureSignal, TriggerSpec::Periodic(3)], NavigationPolicy::new(N::GraphTraversal, 4)),
            description: "A thought graph grows from a root: each active node is checked for whether it \
                needs decomposition or supplementation. Execution traverses the graph by readiness and the \
                graph keeps expanding as results arrive.",
            dimensions: ["Thought Graph", "Flow Construction", "Dynamic Expansion", "Graph Traversal"],
        },
        ParadigmEntry {
            name: "Co-Sight",
            config: config("Co-Sight", T::CrossCheckNet, InitKind::InconsistencyTrigger, M::MetaVerification,
                vec![TriggerSpec::Inconsistency, TriggerSpec::OnFailureSignal], NavigationPolicy::new(N::ConflictResolution, 4)),
            description: "Two redundant verifiers answer the query independently. A full plan is only \
                built when they conflict or fail, after a meta-level check of the verification logic, and \
                a resolution node settles the conflict.",
            dimensions: ["Cross-Check Net", "Inconsistency Trigger", "Meta-Verification", "Conflict Resolution"],
        },
    ]
}

pub fn registry() -> &'static [ParadigmEntry] {
    static REG: OnceLock<Vec<ParadigmEntry>> = OnceLock::new();
    REG.get_or_init(build_registry)
}

/// Finds a paradigm by name (ASCII case-insensitive).
pub fn registry_lookup(name: &str) -> PlanResult<&'static ParadigmEntry> {
    registry()
        .iter()
        .find(|e| e.name.eq_ignore_ascii_case(name.trim()))
        .ok_or_else(|| PlanError::NotFound(format!("no paradigm named `{name}`")))
}

pub const SEQUENTIAL_BASELINE: &str = "Linear-Sequential";

/// A single-chain plan executed one directive at a time. Not one of the
/// catalogued paradigms; used as the comparison point for parallel ones.
pub fn sequential_baseline() -> PlanConfiguration {
    config(
        SEQUENTIAL_BASELINE,
        TopologyKind::Linear,
        InitKind::PlannerDecompose,
        RevisionMechanism::ManagerIntervention,
        vec![TriggerSpec::OnFailureSignal],
        NavigationPolicy::sequential(),
    )
}

/// Registry lookup that also knows the sequential baseline.
pub fn named_config(name: &str) -> PlanResult<PlanConfiguration> {
    if name.trim().eq_ignore_ascii_case(SEQUENTIAL_BASELINE) {
        return Ok(sequential_baseline());
    }
    registry_lookup(name).map(|e| e.config.clone())
}

/// Paradigms as a JSON matrix of their four dimensions.
pub fn registry_matrix() -> serde_json::Value {
    let rows: Vec<serde_json::Value> = registry()
        .iter()
        .map(|e| {
            serde_json::json!({
                "name": e.name,
                "topology": e.dimensions[0],
                "initialization": e.dimensions[1],
                "adaptation": e.dimensions[2],
                "navigation": e.dimensions[3],
                "config": e.config,
            })
        })
        .collect();
    serde_json::Value::Array(rows)
}

/// Documentation of the planning building blocks, shipped to meta-planners.
pub fn meta_tool_docs() -> String {
    let mut out = String::from("Planning building blocks. Compose one of each dimension into a configuration.\n");
    out.push_str("topology_kind: linear | dag | hierarchy | thought_graph | modular_graph | cross_check_net\n");
    out.push_str("init.kind: planner_decompose | sop_configuration | role_definition | dependency_parsing | hybrid_planning | flow_construction | inconsistency_trigger\n");
    out.push_str("adaptation: manager_intervention | critic_loop_feedback | env_feedback | periodic_pruning | consensus_voting | dynamic_expansion | meta_verification\n");
    out.push_str("adaptation_triggers: [{\"periodic\": n} | \"on_failure_signal\" | {\"critic_loop\": n} | \"env_feedback\" | \"inconsistency\" | \"never\"]\n");
    out.push_str("navigation.kind: sequential | dynamic_dispatch | concurrent_paths | centralized_routing | graph_traversal | joint_deliberation | conflict_resolution\n");
    out.push_str("Known systems:\n");
    for e in registry() {
        let _ = writeln!(out, "- {} ({}): {}", e.name, e.dimensions.join(" / "), e.description);
    }
    out
}

pub const PLANNER_SYSTEM: &str = "You are a task planner. Decompose the query into sub-tasks that tools \
can execute. Reply with exactly one fenced ```plan block holding {\"nodes\": [{\"id\", \"title\", \
\"instruction\", \"kind\", \"role\"}], \"edges\": [{\"from\", \"to\"}]}. An edge means `to` depends on \
`from`. Each instruction is a single tool call; `$ID` inserts the result of node ID.";

pub fn planner_system_prompt() -> String {
    format!("{PLANNER_SYSTEM}\n\n{}", tools::tool_docs())
}

#[derive(Debug)]
pub enum InitError {
    /// The planner backend itself failed.
    Backend(BackendError),
    /// The planner answered but no valid plan came out of it.
    Plan { error: PlanError, usage: Usage },
}

impl std::fmt::Display for InitError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InitError::Backend(e) => write!(f, "{e}"),
            InitError::Plan { error, .. } => write!(f, "{error}"),
        }
    }
}

impl std::error::Error for InitError {}

#[derive(Clone, Debug, PartialEq)]
pub struct Initialized {
    pub graph: PlanGraph,
    pub event: TrajectoryEvent,
    pub usage: Usage,
}

struct Session<'a> {
    planner: &'a dyn Planner,
    system: String,
    seed: u64,
    usage: Usage,
    retries: u32,
}

impl Session<'_> {
    fn call(&mut self, context: &str) -> Result<String, InitError> {
        let req = PlannerRequest::new(self.system.clone(), context.to_string(), self.seed.wrapping_add(self.usage.calls as u64));
        let c = self.planner.complete(&req).map_err(InitError::Backend)?;
        self.usage.calls += 1;
        self.usage.tokens_in += c.tokens_in;
        self.usage.tokens_out += c.tokens_out;
        Ok(c.text)
    }

    /// Calls until `parse` accepts the reply or retries run out.
    fn call_parsed<T>(&mut self, context: &str, parse: impl Fn(&str) -> PlanResult<T>) -> Result<T, InitError> {
        let mut ctx = context.to_string();
        let mut last = None;
        for _ in 0..=self.retries {
            let text = self.call(&ctx)?;
            match parse(&text) {
                Ok(v) => return Ok(v),
                Err(e) => {
                    ctx = format!("{context}\nYour previous reply could not be parsed ({e}). Reply with exactly one fenced plan block.\n");
                    last = Some(e);
                }
            }
        }
        Err(self.fail(last.expect("at least one attempt")))
    }

    fn fail(&self, error: PlanError) -> InitError {
        InitError::Plan { error, usage: self.usage.clone() }
    }
}

/// Orders declared nodes so dependencies come first, keeping declaration
/// order among independent nodes.
fn dependency_order(nodes: &[PlanNode], edges: &[PlanEdge]) -> PlanResult<Vec<PlanNode>> {
    let index: BTreeMap<&NodeId, usize> = nodes.iter().enumerate().map(|(i, n)| (&n.id, i)).collect();
    let mut indeg = vec![0usize; nodes.len()];
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
    for e in edges {
        let (a, b) = (index[&e.from], index[&e.to]);
        succ[a].push(b);
        indeg[b] += 1;
    }
    let mut ready: BTreeSet<usize> = (0..nodes.len()).filter(|i| indeg[*i] == 0).collect();
    let mut out = Vec::with_capacity(nodes.len());
    while let Some(i) = ready.pop_first() {
        out.push(nodes[i].clone());
        for &s in &succ[i] {
            indeg[s] -= 1;
            if indeg[s] == 0 {
                ready.insert(s);
            }
        }
    }
    if out.len() != nodes.len() {
        return Err(PlanError::Init("declared dependencies contain a cycle".into()));
    }
    Ok(out)
}

fn chain_graph(kind: TopologyKind, head: Option<PlanNode>, ordered: Vec<PlanNode>) -> PlanGraph {
    let mut g = PlanGraph::new(kind);
    let mut prev: Option<NodeId> = None;
    for n in head.into_iter().chain(ordered) {
        let id = n.id.clone();
        g.insert_node(n);
        if let Some(p) = prev {
            g.insert_edge(PlanEdge::new(p, id.clone()));
        }
        prev = Some(id);
    }
    g
}

fn graph_from(kind: TopologyKind, nodes: Vec<PlanNode>, edges: Vec<PlanEdge>) -> PlanGraph {
    let mut g = PlanGraph::new(kind);
    for n in nodes {
        g.insert_node(n);
    }
    for e in edges {
        g.insert_edge(e);
    }
    g
}

fn check_unique(head: &str, nodes: &[PlanNode]) -> PlanResult<()> {
    if nodes.iter().any(|n| n.id.as_str() == head) {
        return Err(PlanError::Init(format!("planner used reserved node id `{head}`")));
    }
    Ok(())
}

fn decompose_context(query: &str, config: &PlanConfiguration) -> String {
    format!(
        "mode: decompose\nstrategy: {}\ntopology: {}\nquery: {query}\n",
        config.init.kind.label(),
        serde_json::to_value(config.topology_kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
    )
}

/// Builds the first plan graph for `query` under `config.init`.
pub fn initialize_plan(
    query: &str,
    config: &PlanConfiguration,
    planner: &dyn Planner,
    seed: u64,
) -> Result<Initialized, InitError> {
    let mut s = Session {
        planner,
        system: planner_system_prompt(),
        seed,
        usage: Usage::default(),
        retries: config.init.parse_retries,
    };
    let kind = config.topology_kind;
    let ctx = decompose_context(query, config);
    let graph = match config.init.kind {
        InitKind::PlannerDecompose => {
            let (nodes, edges) = s.call_parsed(&ctx, parse_plan_markup)?;
            let ordered = dependency_order(&nodes, &edges).map_err(|e| s.fail(e))?;
            chain_graph(kind, None, ordered)
        }
        InitKind::SopConfiguration | InitKind::DependencyParsing => {
            let (nodes, edges) = s.call_parsed(&ctx, parse_plan_markup)?;
            graph_from(kind, nodes, edges)
        }
        InitKind::RoleDefinition => {
            let (nodes, edges) = s.call_parsed(&ctx, parse_plan_markup)?;
            check_unique("orchestrator", &nodes).map_err(|e| s.fail(e))?;
            let ordered = dependency_order(&nodes, &edges).map_err(|e| s.fail(e))?;
            let root = PlanNode::task("orchestrator", format!("note(orchestrate: {query})"))
                .with_title("orchestrate")
                .with_role("orchestrator");
            chain_graph(kind, Some(root), ordered)
        }
        InitKind::HybridPlanning => {
            let (nodes, edges) = s.call_parsed(&ctx, parse_plan_markup)?;
            check_unique("supervisor", &nodes).map_err(|e| s.fail(e))?;
            let mut ordered = dependency_order(&nodes, &edges).map_err(|e| s.fail(e))?;
            let last = ordered.pop();
            let root = PlanNode::task("supervisor", format!("note(supervise: {query})")).with_title("supervise");
            let mut g = chain_graph(kind, Some(root), ordered);
            if let Some(last) = last {
                let parent = g.sinks().first().map(|n| n.id.clone());
                for i in 1..=3 {
                    let mut leaf = last.clone();
                    leaf.id = NodeId::new(format!("{}_{i}", last.id));
                    leaf.title = format!("{} ({i})", last.title);
                    let leaf_id = leaf.id.clone();
                    g.insert_node(leaf);
                    if let Some(p) = &parent {
                        g.insert_edge(PlanEdge::new(p.clone(), leaf_id));
                    }
                }
            }
            g
        }
        InitKind::FlowConstruction => flow_construction(&mut s, query, config)?,
        InitKind::InconsistencyTrigger => {
            let verify = |id: &str| {
                PlanNode::new(id, NodeKind::Verification, format!("search({query})"))
                    .with_title("verify")
                    .with_role("verifier")
            };
            PlanGraph::new(kind)
                .with_node(verify("V1"))
                .with_node(verify("V2"))
                .with_node(PlanNode::new("R", NodeKind::Resolution, "resolve($V1, $V2)").with_title("resolve"))
                .with_edge("V1", "R")
                .with_edge("V2", "R")
        }
    };
    let report = validate_graph(&graph);
    if !report.is_valid() {
        return Err(s.fail(PlanError::Init(format!("planner output violates topology: {}", PlanError::InvalidGraph(report.violations)))));
    }
    if graph.nodes.is_empty() {
        return Err(s.fail(PlanError::Init("planner produced an empty plan".into())));
    }
    let event = TrajectoryEvent::new(0, EventKind::PlanInit, CostClass::Plan)
        .with_tokens(s.usage.tokens_in, s.usage.tokens_out)
        .with_detail(format!(
            "{}: {} nodes, {} edges, {} planner calls",
            config.init.kind.label(),
            graph.nodes.len(),
            graph.edges.len(),
            s.usage.calls
        ));
    Ok(Initialized { graph, event, usage: s.usage })
}

/// Grows a thought graph from a root node. Each frontier node is offered to
/// the planner, whose fragment may add nodes, redefine the offered node, and
/// add edges between any known nodes. An empty fragment leaves the node as is.
fn flow_construction(s: &mut Session<'_>, query: &str, config: &PlanConfiguration) -> Result<PlanGraph, InitError> {
    let max_nodes = config.init.max_nodes as usize;
    let mut g = PlanGraph::new(config.topology_kind)
        .with_node(PlanNode::task("root", format!("note({query})")).with_title("root"));
    let mut depth: BTreeMap<NodeId, u32> = BTreeMap::from([(NodeId::from("root"), 0)]);
    let mut frontier: VecDeque<NodeId> = VecDeque::from([NodeId::from("root")]);
    while let Some(cur) = frontier.pop_front() {
        let d = depth[&cur];
        if d >= config.init.max_depth || g.nodes.len() >= max_nodes {
            continue;
        }
        let ctx = format!(
            "mode: flow-expand\nnode: {cur}\ndepth: {d}\nquery: {query}\ngraph:\n{}",
            graph_summary(&g)
        );
        let block = s.call_parsed(&ctx, parse_plan_fragment)?;
        let mut next = g.clone();
        let mut added = Vec::new();
        for decl in block.nodes {
            if decl.id == cur {
                let node = next.node_mut(&cur).expect("frontier node exists");
                node.instruction = decl.instruction;
                if let Some(k) = decl.kind {
                    node.kind = k;
                }
                if let Some(t) = decl.title {
                    node.title = t;
                }
                node.role = decl.role.or(node.role.take());
            } else if next.nodes.contains_key(&decl.id) {
                return Err(s.fail(PlanError::Init(format!("expansion redeclares existing node {}", decl.id))));
            } else {
                added.push(decl.id.clone());
                next.insert_node(decl.into_node());
            }
        }
        for e in block.edges {
            next.insert_edge(PlanEdge::new(e.from, e.to));
        }
        if next.nodes.len() > max_nodes {
            // over budget: keep the graph as it was and stop growing here
            continue;
        }
        let report = validate_graph(&next);
        if !report.is_valid() {
            return Err(s.fail(PlanError::Init(format!(
                "expansion of {cur} is invalid: {}",
                PlanError::InvalidGraph(report.violations)
            ))));
        }
        g = next;
        for id in added {
            depth.insert(id.clone(), d + 1);
            frontier.push_back(id);
        }
    }
    Ok(g)
}
