//! Command implementations behind the `planfab` binary.
//!
//! Every command writes its human-readable output to a caller-supplied
//! writer and its files under `--out`, so the functions here are testable
//! without spawning the binary.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use planfab_core::datapipe::{
    emit_corpus, reference_pool, run_pipeline, CorpusRecord, Delta, PipelineParams, PipelineSummary, PromptPack,
    ScriptedMetaPlanner,
};
use planfab_core::executor::llm::ENV_MODEL;
use planfab_core::executor::{
    default_agent_spec, run_episode, AgentBackend, Backends, ChatBackend, ChatPlanner, EngineError, EngineParams,
    HttpChatBackend, JudgeMode, LlmAgent, ScriptedAgent, ScriptedWorld,
};
use planfab_core::igpo::verify_suite;
use planfab_core::impedance::{impedance, objective, ImpedanceParams, PriceTable};
use planfab_core::paradigms::{named_config, registry, registry_matrix};
use planfab_core::plan::{decode, Budgets, EncodeMode, PlanConfiguration, PlanGraph, Trajectory};
use planfab_core::planner::Planner;
use planfab_core::suite::{load_tasks, suite_tasks, suite_world, tasks_to_jsonl, SuitePlanner, Task};
use planfab_core::topology::to_dot;
use planfab_core::{BackendError, PlanError};

#[derive(Debug, Parser)]
#[command(name = "planfab", version, about = "Run, compare and mine planning configurations for agent teams")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one paradigm or configuration over a task file.
    Run(RunArgs),
    /// Run several paradigms over the same tasks and compare them.
    Bench(BenchArgs),
    /// Generate supervised or preference training corpora.
    Dataset(DatasetArgs),
    /// Numerical self-checks of the preference-optimization math.
    VerifyMath(VerifyArgs),
    /// Render a plan graph from a trajectory or graph file as DOT.
    ExportDot(ExportArgs),
    /// Print the paradigm registry as JSON.
    Registry,
    /// Score a stored trajectory.
    Impedance(ImpedanceArgs),
    /// Write the bundled task suite and its world to a directory.
    Suite(SuiteArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Scripted,
    Llm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum JudgeFlag {
    Exact,
    Llm,
}

impl From<JudgeFlag> for JudgeMode {
    fn from(j: JudgeFlag) -> Self {
        match j {
            JudgeFlag::Exact => JudgeMode::ExactNormalized,
            JudgeFlag::Llm => JudgeMode::LlmJudge,
        }
    }
}

/// Flags shared by the commands that execute episodes.
#[derive(Clone, Debug, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Task file (JSON lines of {id, query, gold}); defaults to the bundled suite.
    #[arg(long)]
    pub tasks: Option<PathBuf>,
    /// Fact world for the tools (JSON lines); defaults to the bundled world.
    #[arg(long)]
    pub world: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for episodes.
    #[arg(long, default_value_t = 4)]
    pub jobs: usize,
    #[arg(long, default_value = "planfab-out")]
    pub out: PathBuf,
    /// Print the resolved configuration and exit without writing anything.
    #[arg(long)]
    pub dry_run: bool,
    #[arg(long, value_enum)]
    pub judge: Option<JudgeFlag>,
}

#[derive(Clone, Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: Common,
    /// Paradigm name; overrides the configuration file.
    #[arg(long)]
    pub paradigm: Option<String>,
}

#[derive(Clone, Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: Common,
    /// Paradigms to compare (comma separated); defaults to all catalogued ones.
    #[arg(long, value_delimiter = ',')]
    pub paradigm: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DatasetMode {
    Sft,
    Igpo,
}

#[derive(Clone, Debug, Args)]
pub struct DatasetArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum, default_value = "igpo")]
    pub mode: DatasetMode,
    /// Candidate configurations per task.
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    /// Impedance gap for pairing two successes: `0.2` (absolute) or `10%` (of the winner).
    #[arg(long)]
    pub delta: Option<String>,
}

#[derive(Clone, Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random instances for the grid optimality check.
    #[arg(long, default_value_t = 50)]
    pub instances: usize,
}

#[derive(Clone, Debug, Args)]
pub struct ExportArgs {
    /// Trajectory log, single-line trajectory or plan graph record.
    #[arg(long)]
    pub input: PathBuf,
    /// Export the graph as first planned instead of as finished.
    #[arg(long)]
    pub initial: bool,
    /// Write here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Args)]
pub struct ImpedanceArgs {
    #[arg(long)]
    pub trajectory: PathBuf,
    /// Run configuration supplying the impedance parameters.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Clone, Debug, Args)]
pub struct SuiteArgs {
    #[arg(long, default_value = "planfab-suite")]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: Option<BackendKind>,
    /// Model name for planner and agents; `PF_MODEL` when absent.
    pub model: Option<String>,
    /// Model for the LLM judge; the main model when absent.
    pub judge_model: Option<String>,
}

/// The JSON run configuration file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paradigm: Option<String>,
    /// A full planning configuration, used when no paradigm is named.
    pub plan: Option<PlanConfiguration>,
    /// Replaces the budgets of whichever configuration is chosen.
    pub budgets: Option<Budgets>,
    pub impedance: ImpedanceParams,
    pub judge: Option<JudgeMode>,
    pub backend: BackendConfig,
    pub tasks: Option<PathBuf>,
    pub world: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| PlanError::InvalidConfig(format!("{}: {e}", path.display())))?;
        cfg.impedance.validate()?;
        Ok(cfg)
    }
}

/// Everything a command needs after flags and file have been merged.
#[derive(Clone, Debug, Serialize)]
pub struct Resolved {
    pub plan: Option<PlanConfiguration>,
    pub budgets: Option<Budgets>,
    pub impedance: ImpedanceParams,
    pub judge: JudgeMode,
    pub backend: BackendKind,
    pub model: Option<String>,
    pub judge_model: Option<String>,
    pub seed: u64,
    pub jobs: usize,
    pub tasks: Option<PathBuf>,
    pub world: Option<PathBuf>,
}

pub fn resolve(common: &Common, paradigm: Option<&str>) -> Result<Resolved> {
    let file = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if common.jobs == 0 {
        return Err(PlanError::InvalidConfig("--jobs must be at least 1".into()).into());
    }
    let plan = match paradigm.map(str::to_string).or(file.paradigm) {
        Some(name) => Some(named_config(&name)?),
        None => file.plan,
    };
    let plan = plan
        .map(|mut p| {
            if let Some(b) = &file.budgets {
                p.budgets = b.clone();
            }
            p.validate().map(|_| p)
        })
        .transpose()?;
    Ok(Resolved {
        plan,
        budgets: file.budgets,
        impedance: file.impedance,
        judge: common.judge.map(JudgeMode::from).or(file.judge).unwrap_or_default(),
        backend: common.backend.or(file.backend.kind).unwrap_or(BackendKind::Scripted),
        model: file.backend.model,
        judge_model: file.backend.judge_model,
        seed: common.seed,
        jobs: common.jobs,
        tasks: common.tasks.clone().or(file.tasks),
        world: common.world.clone().or(file.world),
    })
}

impl Resolved {
    pub fn load_tasks(&self) -> Result<Vec<Task>> {
        match &self.tasks {
            Some(p) => {
                if !p.exists() {
                    return Err(PlanError::InvalidConfig(format!("task file {} does not exist", p.display())).into());
                }
                Ok(load_tasks(p)?)
            }
            None => Ok(suite_tasks().to_vec()),
        }
    }

    pub fn load_world(&self) -> Result<ScriptedWorld> {
        match &self.world {
            Some(p) => {
                if !p.exists() {
                    return Err(PlanError::InvalidConfig(format!("world file {} does not exist", p.display())).into());
                }
                Ok(ScriptedWorld::load(p)?)
            }
            None => Ok(suite_world()),
        }
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new().num_threads(self.jobs).build().map_err(|e| anyhow!("thread pool: {e}"))
    }

    fn engine(&self) -> EngineParams {
        EngineParams { judge: self.judge, ..Default::default() }
    }

    /// A configuration with the file's budgets applied.
    fn with_budgets(&self, mut plan: PlanConfiguration) -> PlanConfiguration {
        if let Some(b) = &self.budgets {
            plan.budgets = b.clone();
        }
        plan
    }
}

/// Planner, agent and judge for one invocation.
pub struct Runtime {
    pub planner: Box<dyn Planner>,
    pub meta_planner: Box<dyn Planner>,
    pub agent: Box<dyn AgentBackend>,
    pub chat: Option<Arc<dyn ChatBackend>>,
    pub judge_model: String,
    pub world: ScriptedWorld,
}

impl Runtime {
    pub fn build(r: &Resolved, tasks: &[Task]) -> Result<Self> {
        let world = r.load_world()?;
        match r.backend {
            BackendKind::Scripted => Ok(Runtime {
                planner: Box::new(SuitePlanner::new(tasks)?),
                meta_planner: Box::new(ScriptedMetaPlanner),
                agent: Box::new(ScriptedAgent),
                chat: None,
                judge_model: String::new(),
                world,
            }),
            BackendKind::Llm => {
                let model = r
                    .model
                    .clone()
                    .or_else(|| std::env::var(ENV_MODEL).ok())
                    .ok_or_else(|| BackendError::Config(format!("no model configured and {ENV_MODEL} is not set")))?;
                let chat: Arc<dyn ChatBackend> = Arc::new(HttpChatBackend::from_env()?);
                Ok(Runtime {
                    planner: Box::new(ChatPlanner::new(chat.clone(), model.clone())),
                    meta_planner: Box::new(ChatPlanner::new(chat.clone(), model.clone())),
                    agent: Box::new(LlmAgent::new(chat.clone(), model.clone())),
                    judge_model: r.judge_model.clone().unwrap_or(model),
                    chat: Some(chat),
                    world,
                })
            }
        }
    }

    pub fn backends(&self) -> Backends<'_> {
        Backends {
            planner: self.planner.as_ref(),
            agent: self.agent.as_ref(),
            world: &self.world,
            judge_chat: self.chat.as_deref().map(|c| (c, self.judge_model.as_str())),
        }
    }
}

/// Per-configuration metrics over a task set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub paradigm: String,
    pub n_tasks: usize,
    /// Percent of tasks judged correct.
    pub accuracy: f64,
    pub mean_steps: f64,
    pub mean_tokens: f64,
    pub mean_plan_tokens: f64,
    pub mean_exec_tokens: f64,
    pub mean_cost_usd: f64,
    pub mean_impedance: f64,
}

pub fn summarize(name: &str, trajs: &[Trajectory], params: &ImpedanceParams) -> Result<RunSummary> {
    let n = trajs.len().max(1) as f64;
    let mean = |f: &dyn Fn(&Trajectory) -> f64| trajs.iter().map(f).sum::<f64>() / n;
    let prices = PriceTable::default();
    let mut imp = 0.0;
    for t in trajs {
        imp += impedance(t, params)?.impedance;
    }
    Ok(RunSummary {
        paradigm: name.to_string(),
        n_tasks: trajs.len(),
        accuracy: 100.0 * mean(&|t| if t.success() { 1.0 } else { 0.0 }),
        mean_steps: mean(&|t| t.aggregates.n_steps as f64),
        mean_tokens: mean(&|t| t.aggregates.c_total_tokens as f64),
        mean_plan_tokens: mean(&|t| t.aggregates.c_plan_tokens as f64),
        mean_exec_tokens: mean(&|t| t.aggregates.c_exec_tokens as f64),
        mean_cost_usd: mean(&|t| prices.dollars(t.aggregates.c_plan_tokens as f64, t.aggregates.c_exec_tokens as f64)),
        mean_impedance: imp / n,
    })
}

/// Runs every task under `plan`; task `i` uses seed `seed + i`.
pub fn run_tasks(r: &Resolved, rt: &Runtime, plan: &PlanConfiguration, tasks: &[Task]) -> Result<Vec<Trajectory>> {
    let spec = default_agent_spec();
    let engine = r.engine();
    let backends = rt.backends();
    let results: Vec<Result<Trajectory, EngineError>> = r.pool()?.install(|| {
        tasks
            .par_iter()
            .enumerate()
            .map(|(i, t)| run_episode(&t.query, Some(&t.gold), plan, &spec, backends, r.seed.wrapping_add(i as u64), &engine))
            .collect()
    });
    Ok(results.into_iter().collect::<Result<Vec<_>, _>>()?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn file_stem(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

pub fn cmd_run(args: &RunArgs, out: &mut dyn Write) -> Result<Option<RunSummary>> {
    let r = resolve(&args.common, args.paradigm.as_deref())?;
    let plan = r
        .plan
        .clone()
        .ok_or_else(|| PlanError::InvalidConfig("name a --paradigm or give a configuration with `paradigm` or `plan`".into()))?;
    let tasks = r.load_tasks()?;
    if args.common.dry_run {
        writeln!(out, "{}", serde_json::to_string_pretty(&plan)?)?;
        return Ok(None);
    }
    let rt = Runtime::build(&r, &tasks)?;
    let trajs = run_tasks(&r, &rt, &plan, &tasks)?;
    let summary = summarize(&plan.name, &trajs, &r.impedance)?;
    let dir = args.common.out.join("trajectories");
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    for (t, tr) in tasks.iter().zip(&trajs) {
        std::fs::write(dir.join(format!("{}.jsonl", file_stem(&t.id))), tr.to_log(EncodeMode::Full))?;
    }
    write_json(&args.common.out.join("summary.json"), &summary)?;
    writeln!(out, "{}", serde_json::to_string_pretty(&summary)?)?;
    Ok(Some(summary))
}

pub fn render_bench_table(rows: &[RunSummary]) -> String {
    let mut s = format!(
        "{:<20} {:>9} {:>7} {:>10} {:>10} {:>10} {:>12}\n",
        "paradigm", "accuracy", "steps", "plan_tok", "exec_tok", "cost_usd", "impedance"
    );
    for r in rows {
        s.push_str(&format!(
            "{:<20} {:>8.2}% {:>7.2} {:>10.1} {:>10.1} {:>10.6} {:>12.1}\n",
            r.paradigm, r.accuracy, r.mean_steps, r.mean_plan_tokens, r.mean_exec_tokens, r.mean_cost_usd, r.mean_impedance
        ));
    }
    s
}

pub fn cmd_bench(args: &BenchArgs, out: &mut dyn Write) -> Result<Vec<RunSummary>> {
    let r = resolve(&args.common, None)?;
    let names: Vec<String> = if args.paradigm.is_empty() {
        registry().iter().map(|e| e.name.to_string()).collect()
    } else {
        args.paradigm.clone()
    };
    let plans = names
        .iter()
        .map(|n| named_config(n).map(|p| r.with_budgets(p)))
        .collect::<Result<Vec<_>, _>>()?;
    for p in &plans {
        p.validate()?;
    }
    let tasks = r.load_tasks()?;
    if args.common.dry_run {
        writeln!(out, "{}", serde_json::to_string_pretty(&plans)?)?;
        return Ok(Vec::new());
    }
    let rt = Runtime::build(&r, &tasks)?;
    let mut rows = Vec::new();
    for p in &plans {
        let trajs = run_tasks(&r, &rt, p, &tasks)?;
        rows.push(summarize(&p.name, &trajs, &r.impedance)?);
    }
    std::fs::create_dir_all(&args.common.out)?;
    write_json(&args.common.out.join("bench.json"), &rows)?;
    write!(out, "{}", render_bench_table(&rows))?;
    Ok(rows)
}

/// `0.2` is an absolute gap, `10%` a fraction of the winner's impedance.
pub fn parse_delta(s: &str) -> Result<Delta> {
    let s = s.trim();
    let bad = || PlanError::InvalidConfig(format!("cannot parse delta `{s}`"));
    let d = match s.strip_suffix('%') {
        Some(p) => Delta::Relative(p.trim().parse::<f64>().map_err(|_| bad())? / 100.0),
        None => Delta::Absolute(s.parse::<f64>().map_err(|_| bad())?),
    };
    d.validate()?;
    Ok(d)
}

pub fn cmd_dataset(args: &DatasetArgs, out: &mut dyn Write) -> Result<Option<PipelineSummary>> {
    let r = resolve(&args.common, None)?;
    if args.k < 2 {
        return Err(PlanError::InvalidConfig(format!("dataset generation needs --k >= 2, got {}", args.k)).into());
    }
    let delta = args.delta.as_deref().map(parse_delta).transpose()?.unwrap_or_default();
    let tasks = r.load_tasks()?;
    let params = PipelineParams { k: args.k, delta, impedance: r.impedance, engine: r.engine(), seed: r.seed, ..Default::default() };
    if args.common.dry_run {
        writeln!(
            out,
            "{}",
            serde_json::to_string_pretty(&serde_json::json!({
                "mode": format!("{:?}", args.mode).to_lowercase(),
                "k": params.k,
                "delta": params.delta,
                "impedance": params.impedance,
                "n_tasks": tasks.len(),
                "backend": r.backend,
            }))?
        )?;
        return Ok(None);
    }
    let rt = Runtime::build(&r, &tasks)?;
    let pool = reference_pool();
    let result = r.pool()?.install(|| {
        run_pipeline(&tasks, &pool, &PromptPack::default(), rt.meta_planner.as_ref(), rt.backends(), &default_agent_spec(), &params)
    })?;
    std::fs::create_dir_all(&args.common.out)?;
    let (file, records): (&str, Vec<CorpusRecord>) = match args.mode {
        DatasetMode::Sft => ("sft.jsonl", result.sft.iter().cloned().map(CorpusRecord::Sft).collect()),
        DatasetMode::Igpo => ("igpo.jsonl", result.pairs.iter().cloned().map(CorpusRecord::Preference).collect()),
    };
    emit_corpus(&args.common.out.join(file), &records)?;
    write_json(&args.common.out.join("summary.json"), &result.summary)?;
    writeln!(out, "{}", serde_json::to_string_pretty(&result.summary)?)?;
    Ok(Some(result.summary))
}

pub fn cmd_verify_math(args: &VerifyArgs, out: &mut dyn Write) -> Result<()> {
    let reports = verify_suite(args.seed, args.instances);
    for r in &reports {
        writeln!(
            out,
            "{} {:<28} cases={:<6} max_err={:.3e} tol={:.1e} {}ms",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.cases,
            r.max_error,
            r.tolerance,
            r.elapsed_ms
        )?;
    }
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
    if !failed.is_empty() {
        bail!("math checks failed: {}", failed.join(", "));
    }
    Ok(())
}

/// Reads a graph from a trajectory log, a one-line trajectory or a graph record.
pub fn read_graph(path: &Path, initial: bool) -> Result<PlanGraph> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let traj = Trajectory::from_log(&text).or_else(|_| decode::<Trajectory>(&text));
    if let Ok(t) = traj {
        let g = if initial { t.initial_graph } else { t.final_graph.or(t.initial_graph) };
        return g.ok_or_else(|| PlanError::NotFound(format!("{} records no plan graph", path.display())).into());
    }
    decode::<PlanGraph>(&text)
        .map_err(|e| PlanError::Schema { entity: "graph input", message: format!("{}: {e}", path.display()) }.into())
}

pub fn cmd_export_dot(args: &ExportArgs, out: &mut dyn Write) -> Result<()> {
    let dot = to_dot(&read_graph(&args.input, args.initial)?);
    match &args.out {
        Some(p) => std::fs::write(p, dot).with_context(|| format!("writing {}", p.display()))?,
        None => write!(out, "{dot}")?,
    }
    Ok(())
}

pub fn cmd_impedance(args: &ImpedanceArgs, out: &mut dyn Write) -> Result<()> {
    let params = match &args.config {
        Some(p) => RunConfig::load(p)?.impedance,
        None => ImpedanceParams::default(),
    };
    let text = std::fs::read_to_string(&args.trajectory).with_context(|| format!("reading {}", args.trajectory.display()))?;
    let t = Trajectory::from_log(&text).or_else(|_| decode::<Trajectory>(&text))?;
    let b = impedance(&t, &params)?;
    let obj = objective(&t, &params).ok();
    writeln!(out, "{}", serde_json::to_string_pretty(&serde_json::json!({ "breakdown": b, "objective": obj }))?)?;
    Ok(())
}

pub fn cmd_registry(out: &mut dyn Write) -> Result<()> {
    writeln!(out, "{}", serde_json::to_string_pretty(&registry_matrix())?)?;
    Ok(())
}

pub fn cmd_suite(args: &SuiteArgs, out: &mut dyn Write) -> Result<()> {
    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("tasks.jsonl"), tasks_to_jsonl(suite_tasks()))?;
    std::fs::write(args.out.join("world.jsonl"), suite_world().to_jsonl())?;
    writeln!(out, "wrote {} tasks to {}", suite_tasks().len(), args.out.display())?;
    Ok(())
}

pub fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Run(a) => cmd_run(a, out).map(|_| ()),
        Command::Bench(a) => cmd_bench(a, out).map(|_| ()),
        Command::Dataset(a) => cmd_dataset(a, out).map(|_| ()),
        Command::VerifyMath(a) => cmd_verify_math(a, out),
        Command::ExportDot(a) => cmd_export_dot(a, out),
        Command::Registry => cmd_registry(out),
        Command::Impedance(a) => cmd_impedance(a, out),
        Command::Suite(a) => cmd_suite(a, out),
    }
}

fn backend_code(e: &BackendError) -> i32 {
    match e {
        BackendError::Config(_) => 1,
        _ => 2,
    }
}

/// 2 when a model backend failed, 1 for every other error.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(EngineError::Backend(b)) = cause.downcast_ref::<EngineError>() {
            return backend_code(b);
        }
        if let Some(b) = cause.downcast_ref::<BackendError>() {
            return backend_code(b);
        }
    }
    1
}
