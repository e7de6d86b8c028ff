//! The bundled multi-hop task suite: a small synthetic fact world, fifty
//! tasks over five templates, and a table-driven planner that knows each
//! task's decomposition.
//!
//! The facts are illustrative values chosen for the suite, not a reference
//! dataset.

use regex::Regex;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::OnceLock;

use crate::error::{BackendError, PlanError, PlanResult};
use crate::executor::tools::format_number;
use crate::executor::world::ScriptedWorld;
use crate::markup::{parse_plan_markup, render_ops_markup, render_plan_markup};
use crate::plan::{NodeId, NodeKind, PlanEdge, PlanNode};
use crate::planner::{Completion, Planner, PlannerRequest};
use crate::topology::{AtomicOp, NodePatch};

/// One benchmark item. `plan` is the reference decomposition as plan markup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub query: String,
    pub gold: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tags: Vec<String>,
}

impl Task {
    pub fn has_tag(&self, tag: &str) -> bool {
        self.tags.iter().any(|t| t == tag)
    }
}

pub fn parse_tasks(text: &str) -> PlanResult<Vec<Task>> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let t: Task = serde_json::from_str(line).map_err(|e| PlanError::Schema {
            entity: "task",
            message: format!("line {}: {e}", i + 1),
        })?;
        if !seen.insert(t.id.clone()) {
            return Err(PlanError::Schema { entity: "task", message: format!("duplicate task id `{}`", t.id) });
        }
        out.push(t);
    }
    Ok(out)
}

pub fn load_tasks(path: &Path) -> PlanResult<Vec<Task>> {
    parse_tasks(&std::fs::read_to_string(path)?)
}

pub fn tasks_to_jsonl(tasks: &[Task]) -> String {
    tasks
        .iter()
        .map(|t| serde_json::to_string(t).expect("task serializes") + "\n")
        .collect()
}

struct Country {
    name: &'static str,
    capital: &'static str,
    population: u64,
    founded: u64,
    river: &'static str,
    river_km: u64,
}

const COUNTRIES: &[Country] = &[
    Country { name: "France", capital: "Paris", population: 2102650, founded: 508, river: "Seine", river_km: 777 },
    Country { name: "Germany", capital: "Berlin", population: 3878100, founded: 1237, river: "Spree", river_km: 400 },
    Country { name: "Spain", capital: "Madrid", population: 3332035, founded: 865, river: "Manzanares", river_km: 92 },
    Country { name: "Italy", capital: "Rome", population: 2746984, founded: 753, river: "Tiber", river_km: 406 },
    Country { name: "Austria", capital: "Vienna", population: 2005760, founded: 1155, river: "Danube", river_km: 2850 },
    Country { name: "Portugal", capital: "Lisbon", population: 548703, founded: 1147, river: "Tagus", river_km: 1007 },
    Country { name: "Poland", capital: "Warsaw", population: 1861975, founded: 1300, river: "Vistula", river_km: 1047 },
    Country { name: "Czechia", capital: "Prague", population: 1357326, founded: 885, river: "Vltava", river_km: 430 },
    Country { name: "United Kingdom", capital: "London", population: 8866180, founded: 47, river: "Thames", river_km: 346 },
    Country { name: "Egypt", capital: "Cairo", population: 10025657, founded: 969, river: "Nile", river_km: 6650 },
    Country { name: "Russia", capital: "Moscow", population: 13010112, founded: 1147, river: "Moskva", river_km: 503 },
    Country { name: "Ireland", capital: "Dublin", population: 592713, founded: 841, river: "Liffey", river_km: 132 },
    Country { name: "Serbia", capital: "Belgrade", population: 1197714, founded: 878, river: "Sava", river_km: 990 },
];

fn node(id: &str, instruction: String, role: &str) -> PlanNode {
    PlanNode::task(id, instruction).with_role(role)
}

fn capital(id: &str, c: &Country) -> PlanNode {
    node(id, format!("lookup(capital, {})", c.name), "searcher").with_title(format!("capital of {}", c.name))
}

fn of(id: &str, relation: &str, src: &str) -> PlanNode {
    node(id, format!("lookup({relation}, ${src})"), "searcher").with_title(format!("{relation} of {src}"))
}

fn calc(id: &str, expr: String) -> PlanNode {
    node(id, format!("calc({expr})"), "analyst").with_title("compute")
}

fn markup(nodes: &[PlanNode], edges: &[(&str, &str)]) -> String {
    let edges: Vec<PlanEdge> = edges.iter().map(|(a, b)| PlanEdge::new(*a, *b)).collect();
    render_plan_markup(nodes, &edges)
}

fn build_tasks() -> Vec<Task> {
    let n = COUNTRIES.len();
    let mut tasks = Vec::new();
    for i in 0..10 {
        let x = &COUNTRIES[i % n];
        let y = &COUNTRIES[(i + 3) % n];
        let z = &COUNTRIES[(i + 7) % n];
        let river = &COUNTRIES[(i + 5) % n];

        let plan = markup(&[capital("A", x), of("B", "population", "A")], &[("A", "B")]);
        tasks.push((format!("What is the population of the capital of {}?", x.name), x.population.to_string(), plan, "chain"));

        let plan = markup(
            &[capital("A", x), capital("B", y), of("C", "population", "A"), of("D", "population", "B"), calc("E", "$C + $D".into())],
            &[("A", "C"), ("B", "D"), ("C", "E"), ("D", "E")],
        );
        tasks.push((
            format!("What is the combined population of the capitals of {} and {}?", x.name, y.name),
            (x.population + y.population).to_string(),
            plan,
            "parallel",
        ));

        let expr = if x.founded >= y.founded { "$C - $D" } else { "$D - $C" };
        let plan = markup(
            &[capital("A", x), capital("B", y), of("C", "founded", "A"), of("D", "founded", "B"), calc("E", expr.into())],
            &[("A", "C"), ("B", "D"), ("C", "E"), ("D", "E")],
        );
        tasks.push((
            format!("How many years apart were the capitals of {} and {} founded?", x.name, y.name),
            x.founded.abs_diff(y.founded).to_string(),
            plan,
            "parallel",
        ));

        let plan = markup(
            &[
                capital("A", x),
                capital("B", y),
                capital("C", z),
                of("D", "population", "A"),
                of("E", "population", "B"),
                of("F", "population", "C"),
                calc("G", "$D + $E + $F".into()),
            ],
            &[("A", "D"), ("B", "E"), ("C", "F"), ("D", "G"), ("E", "G"), ("F", "G")],
        );
        tasks.push((
            format!("What is the total population of the capitals of {}, {} and {}?", x.name, y.name, z.name),
            (x.population + y.population + z.population).to_string(),
            plan,
            "parallel",
        ));

        let plan = markup(&[capital("A", river), of("B", "river", "A"), of("C", "length", "B")], &[("A", "B"), ("B", "C")]);
        tasks.push((
            format!("How long in km is the river through the capital of {}?", river.name),
            river.river_km.to_string(),
            plan,
            "chain",
        ));
    }
    tasks
        .into_iter()
        .enumerate()
        .map(|(i, (query, gold, plan, tag))| Task {
            id: format!("t{:02}", i + 1),
            query,
            gold,
            plan: Some(plan),
            tags: vec![tag.to_string()],
        })
        .collect()
}

/// The fifty bundled tasks.
pub fn suite_tasks() -> &'static [Task] {
    static TASKS: OnceLock<Vec<Task>> = OnceLock::new();
    TASKS.get_or_init(build_tasks)
}

/// Facts for every country, search snippets keyed by task query, and the
/// default failure plan (node `B` fails when dispatched at step 2).
pub fn suite_world() -> ScriptedWorld {
    let mut w = ScriptedWorld::new();
    for c in COUNTRIES {
        w.add_fact(c.name, "capital", c.capital);
        w.add_fact(c.capital, "population", &c.population.to_string());
        w.add_fact(c.capital, "founded", &c.founded.to_string());
        w.add_fact(c.capital, "river", c.river);
        w.add_fact(c.river, "length", &c.river_km.to_string());
    }
    for (i, t) in suite_tasks().iter().enumerate() {
        let wrong = t.gold.parse::<f64>().map(|g| format_number(g + 1.0)).unwrap_or_else(|_| format!("not {}", t.gold));
        match i % 3 {
            0 => w.add_fact(&t.query, "search", &t.gold),
            1 => {
                w.add_fact(&t.query, "search", &t.gold);
                w.add_fact(&t.query, "search", &wrong);
            }
            _ => {}
        }
    }
    w.add_failure(2, "B");
    w
}

fn ref_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\$([A-Za-z0-9_-]+)").expect("static regex"))
}

fn summary_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^- node (\S+) \[(\w+), (\w+), attempts=\d+\]").expect("static regex"))
}

/// (id, kind, status) of each node listed in a revise context.
fn summary_nodes(context: &str) -> Vec<(String, String, String)> {
    context
        .lines()
        .filter_map(|l| summary_re().captures(l))
        .map(|c| (c[1].to_string(), c[2].to_string(), c[3].to_string()))
        .collect()
}

/// A planner that answers from each task's reference decomposition.
///
/// `decompose` returns the task plan. `flow-expand` returns the whole plan
/// under the root (turning the root into an aggregation of the final node)
/// and nothing for deeper nodes. `revise` asks for failed nodes to be
/// retried; on a cross-check net it instead supplies the deep plan under an
/// `x` prefix, wires it into the resolution node and drops failed verifiers.
pub struct SuitePlanner {
    plans: BTreeMap<String, (Vec<PlanNode>, Vec<PlanEdge>)>,
}

impl SuitePlanner {
    pub fn new(tasks: &[Task]) -> PlanResult<Self> {
        let mut plans = BTreeMap::new();
        for t in tasks {
            if let Some(p) = &t.plan {
                plans.insert(t.query.clone(), parse_plan_markup(p)?);
            }
        }
        Ok(SuitePlanner { plans })
    }

    fn plan_for(&self, req: &PlannerRequest) -> Option<&(Vec<PlanNode>, Vec<PlanEdge>)> {
        self.plans.get(req.header("query")?)
    }

    fn respond(&self, req: &PlannerRequest) -> String {
        let Some((nodes, edges)) = self.plan_for(req) else {
            return "I have no plan for this query.".into();
        };
        match req.header("mode") {
            Some("decompose") => render_plan_markup(nodes, edges),
            Some("flow-expand") => {
                if req.header("node") != Some("root") {
                    return "```plan\n{\"nodes\":[]}\n```".into();
                }
                let sink = sink_of(nodes, edges);
                let mut all = nodes.clone();
                all.push(PlanNode::new("root", NodeKind::Aggregation, format!("echo(${sink})")).with_title("answer"));
                let mut es = edges.clone();
                es.push(PlanEdge::new(sink, "root"));
                render_plan_markup(&all, &es)
            }
            Some("revise") => render_ops_markup(&self.revise(req, nodes, edges)),
            _ => "Unsupported request.".into(),
        }
    }

    fn revise(&self, req: &PlannerRequest, nodes: &[PlanNode], edges: &[PlanEdge]) -> Vec<AtomicOp> {
        let listed = summary_nodes(&req.context);
        let failed: Vec<&str> = listed.iter().filter(|n| n.2 == "failed").map(|n| n.0.as_str()).collect();
        let cross_check = req.header("mechanism") == Some("meta_verification");
        let has_deep = listed.iter().any(|n| n.0.starts_with('x'));
        let resolution = listed.iter().find(|n| n.1 == "resolution").map(|n| n.0.clone());
        match (cross_check && !has_deep, resolution) {
            (true, Some(r)) => {
                let mut ops = Vec::new();
                let rename = |s: &str| ref_re().replace_all(s, "$$x$1").into_owned();
                for n in nodes {
                    let mut x = n.clone();
                    x.id = NodeId::new(format!("x{}", n.id));
                    x.instruction = rename(&n.instruction);
                    ops.push(AtomicOp::AddNode(x));
                }
                for e in edges {
                    ops.push(AtomicOp::AddEdge(PlanEdge::new(format!("x{}", e.from), format!("x{}", e.to))));
                }
                let sink = format!("x{}", sink_of(nodes, edges));
                let mut args: Vec<String> = listed
                    .iter()
                    .filter(|n| n.1 == "verification" && n.2 == "succeeded")
                    .map(|n| format!("${}", n.0))
                    .collect();
                args.push(format!("${sink}"));
                for f in &failed {
                    ops.push(AtomicOp::RemoveNode(NodeId::new(*f)));
                }
                ops.push(AtomicOp::AddEdge(PlanEdge::new(sink, r.clone())));
                ops.push(AtomicOp::ModifyNode(
                    NodeId::new(r),
                    NodePatch { instruction: Some(format!("resolve({})", args.join(", "))), ..Default::default() },
                ));
                ops
            }
            _ => failed
                .iter()
                .map(|f| AtomicOp::ModifyNode(NodeId::new(*f), NodePatch { retry: true, ..Default::default() }))
                .collect(),
        }
    }
}

fn sink_of(nodes: &[PlanNode], edges: &[PlanEdge]) -> String {
    let sources: BTreeSet<&NodeId> = edges.iter().map(|e| &e.from).collect();
    nodes
        .iter()
        .rev()
        .find(|n| !sources.contains(&n.id))
        .map(|n| n.id.to_string())
        .unwrap_or_default()
}

impl Planner for SuitePlanner {
    fn complete(&self, req: &PlannerRequest) -> Result<Completion, BackendError> {
        Ok(Completion::synthetic(req, self.respond(req)))
    }
}
