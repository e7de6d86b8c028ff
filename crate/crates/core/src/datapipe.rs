//! Training-data generation: sample meta-planning contexts, synthesize
//! candidate configurations, execute them, keep the successes as supervised
//! targets and contrast candidates by impedance into preference pairs.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::error::{BackendError, PlanError, PlanResult};
use crate::executor::{run_episode, Backends, EngineError, EngineParams};
use crate::impedance::{impedance, ImpedanceBreakdown, ImpedanceParams};
use crate::markup::{fenced_blocks, parse_config_markup, render_config_markup, render_plan_markup};
use crate::navigation::NavigationKind;
use crate::paradigms::{meta_tool_docs, registry};
use crate::plan::{AgentSystemSpec, PlanConfiguration, Trajectory};
use crate::planner::{Completion, Planner, PlannerRequest};
use crate::suite::Task;

pub const REFERENCES_PER_CONTEXT: usize = 3;
pub const DEFAULT_K: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceExemplar {
    pub name: String,
    pub config: PlanConfiguration,
    pub description: String,
}

/// Every catalogued paradigm as an exemplar, in registry order.
pub fn reference_pool() -> Vec<ReferenceExemplar> {
    registry()
        .iter()
        .map(|e| ReferenceExemplar { name: e.name.to_string(), config: e.config.clone(), description: e.description.to_string() })
        .collect()
}

pub const META_SYSTEM: &str = "You design planning configurations for multi-agent systems. Study the \
reference systems, then integrate or modify their patterns into a configuration suited to the query. \
Reply with one fenced ```config block holding the configuration record.";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptPack {
    pub system_prompt: String,
}

impl Default for PromptPack {
    fn default() -> Self {
        PromptPack { system_prompt: META_SYSTEM.to_string() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaContext {
    pub query: String,
    pub system_prompt: String,
    pub tool_docs: String,
    pub references: Vec<ReferenceExemplar>,
    pub seed: u64,
}

impl MetaContext {
    /// The user-side text sent to a meta-planner.
    pub fn render(&self) -> String {
        let mut out = format!("mode: synthesize\nquery: {}\n\n{}\n", self.query, self.tool_docs);
        for (i, r) in self.references.iter().enumerate() {
            let _ = write!(out, "reference {}: {}\n{}\n{}\n", i + 1, r.name, r.description, render_config_markup(&r.config));
        }
        out
    }
}

/// Samples three distinct exemplars (kept in pool order) for `query`.
pub fn build_context(query: &str, pack: &PromptPack, pool: &[ReferenceExemplar], seed: u64) -> PlanResult<MetaContext> {
    if pool.len() < REFERENCES_PER_CONTEXT {
        return Err(PlanError::InvalidConfig(format!(
            "reference pool needs at least {REFERENCES_PER_CONTEXT} exemplars, got {}",
            pool.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, pool.len(), REFERENCES_PER_CONTEXT).into_vec();
    idx.sort_unstable();
    Ok(MetaContext {
        query: query.to_string(),
        system_prompt: pack.system_prompt.clone(),
        tool_docs: meta_tool_docs(),
        references: idx.into_iter().map(|i| pool[i].clone()).collect(),
        seed,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthesizedConfig {
    pub config: PlanConfiguration,
    /// The reply did not parse and a reference configuration stands in.
    pub fallback: bool,
    pub raw: String,
}

/// Draws `k` candidate configurations from independent planner calls.
pub fn exploratory_synthesis(
    ctx: &MetaContext,
    meta_planner: &dyn Planner,
    k: usize,
    temperature: f64,
) -> Result<Vec<SynthesizedConfig>, EngineError> {
    if k < 2 {
        return Err(PlanError::InvalidConfig(format!("exploratory synthesis needs k >= 2, got {k}")).into());
    }
    let text = ctx.render();
    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        let mut req = PlannerRequest::new(ctx.system_prompt.clone(), text.clone(), ctx.seed.wrapping_add(i as u64));
        req.temperature = temperature;
        let raw = meta_planner.complete(&req)?.text;
        match parse_config_markup(&raw).and_then(|c| c.validate().map(|_| c)) {
            Ok(config) => out.push(SynthesizedConfig { config, fallback: false, raw }),
            Err(_) => {
                let config = ctx.references[i % ctx.references.len()].config.clone();
                out.push(SynthesizedConfig { config, fallback: true, raw });
            }
        }
    }
    if out.iter().all(|s| s.fallback) {
        return Err(PlanError::Data(format!("all {k} synthesized configurations were unparseable")).into());
    }
    Ok(out)
}

/// A meta-planner for offline runs: picks one of the reference configs in
/// the context and perturbs its concurrency and budgets. The choice and the
/// perturbation depend only on the request seed.
pub struct ScriptedMetaPlanner;

impl ScriptedMetaPlanner {
    fn respond(req: &PlannerRequest) -> String {
        let refs: Vec<PlanConfiguration> = fenced_blocks(&req.context, "config")
            .into_iter()
            .filter_map(|b| serde_json::from_str(b).ok())
            .collect();
        if refs.is_empty() {
            return "No reference configurations were supplied.".into();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
        let mut c = refs[rng.gen_range(0..refs.len())].clone();
        if c.navigation.kind != NavigationKind::Sequential {
            c.navigation.max_concurrency = rng.gen_range(1..=4);
        }
        c.budgets.max_retries = rng.gen_range(1..=3);
        c.budgets.max_steps = rng.gen_range(12..=40);
        render_config_markup(&c)
    }
}

impl Planner for ScriptedMetaPlanner {
    fn complete(&self, req: &PlannerRequest) -> Result<Completion, BackendError> {
        Ok(Completion::synthetic(req, Self::respond(req)))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CandidateResult {
    pub context: MetaContext,
    pub config: PlanConfiguration,
    pub fallback: bool,
    pub trajectory: Trajectory,
    pub impedance: ImpedanceBreakdown,
}

impl CandidateResult {
    /// Scores `trajectory` under `params`.
    pub fn new(
        context: MetaContext,
        config: PlanConfiguration,
        fallback: bool,
        trajectory: Trajectory,
        params: &ImpedanceParams,
    ) -> PlanResult<Self> {
        let impedance = impedance(&trajectory, params)?;
        Ok(CandidateResult { context, config, fallback, trajectory, impedance })
    }

    pub fn success(&self) -> bool {
        self.trajectory.success()
    }
}

/// Keeps the candidates whose execution was judged successful, in order.
pub fn execution_judge_filter(candidates: &[CandidateResult]) -> Vec<&CandidateResult> {
    candidates.iter().filter(|c| c.success()).collect()
}

/// Minimum impedance gap for two successes to form a pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Delta {
    Absolute(f64),
    /// Fraction of the winner's impedance.
    Relative(f64),
}

impl Default for Delta {
    fn default() -> Self {
        Delta::Relative(0.1)
    }
}

impl Delta {
    pub fn resolve(self, winner_impedance: f64) -> f64 {
        match self {
            Delta::Absolute(d) => d,
            Delta::Relative(f) => f * winner_impedance,
        }
    }

    pub fn validate(self) -> PlanResult<()> {
        let v = match self {
            Delta::Absolute(d) | Delta::Relative(d) => d,
        };
        if !v.is_finite() || v < 0.0 {
            return Err(PlanError::InvalidConfig(format!("delta must be finite and >= 0, got {v}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreferenceRecord {
    pub context: MetaContext,
    pub winner: PlanConfiguration,
    pub loser: PlanConfiguration,
    pub winner_impedance: f64,
    pub loser_impedance: f64,
    pub winner_success: bool,
    pub loser_success: bool,
    /// The gap threshold in force when the pair was formed.
    pub delta: f64,
}

pub fn validate_preference(r: &PreferenceRecord) -> PlanResult<()> {
    let bad = |m: &str| Err(PlanError::Data(format!("invalid preference record: {m}")));
    if !r.winner_impedance.is_finite() || !r.loser_impedance.is_finite() {
        return bad("non-finite impedance");
    }
    if !r.winner_success {
        return bad("winner did not succeed");
    }
    if r.loser_success && r.loser_impedance - r.winner_impedance <= r.delta {
        return bad("two successes without a significant impedance gap");
    }
    Ok(())
}

/// Applies the pairing rules to every unordered pair of candidates.
///
/// A success beats a failure unconditionally, two failures never pair, and
/// two successes pair only when the gap exceeds `delta`, the lower
/// impedance winning.
pub fn build_preference_pairs(candidates: &[CandidateResult], delta: Delta) -> PlanResult<Vec<PreferenceRecord>> {
    delta.validate()?;
    if let Some(c) = candidates.iter().find(|c| !c.trajectory.is_judged()) {
        return Err(PlanError::State(format!("candidate for `{}` has not been judged", c.trajectory.query)));
    }
    let mut out = Vec::new();
    for (i, a) in candidates.iter().enumerate() {
        for b in &candidates[i + 1..] {
            let (w, l) = match (a.success(), b.success()) {
                (true, false) => (a, b),
                (false, true) => (b, a),
                (false, false) => continue,
                (true, true) => {
                    if a.impedance.impedance <= b.impedance.impedance {
                        (a, b)
                    } else {
                        (b, a)
                    }
                }
            };
            let d = delta.resolve(w.impedance.impedance);
            if l.success() && l.impedance.impedance - w.impedance.impedance <= d {
                continue;
            }
            out.push(PreferenceRecord {
                context: w.context.clone(),
                winner: w.config.clone(),
                loser: l.config.clone(),
                winner_impedance: w.impedance.impedance,
                loser_impedance: l.impedance.impedance,
                winner_success: w.success(),
                loser_success: l.success(),
                delta: d,
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SftRecord {
    pub context: MetaContext,
    /// Config markup followed by the plan markup the run started from.
    pub target: String,
    pub trajectory_success: bool,
}

/// The supervised target for a successful candidate, `None` otherwise.
pub fn sft_record(c: &CandidateResult) -> Option<SftRecord> {
    if !c.success() {
        return None;
    }
    let mut target = render_config_markup(&c.config);
    if let Some(g) = &c.trajectory.initial_graph {
        target.push('\n');
        target.push_str(&render_plan_markup(g.nodes.values(), g.edges.iter()));
    }
    Some(SftRecord { context: c.context.clone(), target, trajectory_success: true })
}

pub fn validate_sft(r: &SftRecord) -> PlanResult<()> {
    if !r.trajectory_success {
        return Err(PlanError::Data("invalid sft record: trajectory did not succeed".into()));
    }
    parse_config_markup(&r.target)
        .map_err(|e| PlanError::Data(format!("invalid sft record: {e}")))?
        .validate()
}

#[derive(Clone, Debug, PartialEq)]
pub enum CorpusRecord {
    Sft(SftRecord),
    Preference(PreferenceRecord),
}

impl CorpusRecord {
    fn type_name(&self) -> &'static str {
        match self {
            CorpusRecord::Sft(_) => "sft",
            CorpusRecord::Preference(_) => "preference",
        }
    }

    fn validate(&self) -> PlanResult<()> {
        match self {
            CorpusRecord::Sft(r) => validate_sft(r),
            CorpusRecord::Preference(r) => validate_preference(r),
        }
    }

    fn to_json(&self) -> String {
        match self {
            CorpusRecord::Sft(r) => serde_json::to_string(r),
            CorpusRecord::Preference(r) => serde_json::to_string(r),
        }
        .expect("corpus record serializes")
    }
}

/// Validates and writes one homogeneous corpus as JSON lines; returns the
/// number of records written.
pub fn emit_corpus(path: &Path, records: &[CorpusRecord]) -> PlanResult<usize> {
    if let Some(first) = records.first() {
        if let Some(other) = records.iter().find(|r| r.type_name() != first.type_name()) {
            return Err(PlanError::Data(format!(
                "mixed record types in one corpus: {} and {}",
                first.type_name(),
                other.type_name()
            )));
        }
    }
    for r in records {
        r.validate()?;
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        writeln!(f, "{}", r.to_json())?;
    }
    f.flush()?;
    Ok(records.len())
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path, entity: &'static str) -> PlanResult<Vec<T>> {
    std::fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| PlanError::Schema { entity, message: format!("line {}: {e}", i + 1) })
        })
        .collect()
}

pub fn read_sft_corpus(path: &Path) -> PlanResult<Vec<SftRecord>> {
    let v: Vec<SftRecord> = read_lines(path, "sft record")?;
    v.iter().try_for_each(validate_sft)?;
    Ok(v)
}

pub fn read_preference_corpus(path: &Path) -> PlanResult<Vec<PreferenceRecord>> {
    let v: Vec<PreferenceRecord> = read_lines(path, "preference record")?;
    v.iter().try_for_each(validate_preference)?;
    Ok(v)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineParams {
    pub k: usize,
    pub delta: Delta,
    pub impedance: ImpedanceParams,
    pub engine: EngineParams,
    pub seed: u64,
    pub synthesis_temperature: f64,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            k: DEFAULT_K,
            delta: Delta::default(),
            impedance: ImpedanceParams::default(),
            engine: EngineParams::default(),
            seed: 0,
            synthesis_temperature: 0.7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub n_tasks: usize,
    pub n_candidates: usize,
    pub n_sft: usize,
    pub n_pairs: usize,
    pub mean_impedance: f64,
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub candidates: Vec<CandidateResult>,
    pub sft: Vec<SftRecord>,
    pub pairs: Vec<PreferenceRecord>,
    pub summary: PipelineSummary,
}

fn task_seed(base: u64, index: usize) -> u64 {
    base.wrapping_add((index as u64).wrapping_mul(1_000_003))
}

/// Runs the whole generation loop over `tasks`. Candidate episodes run on
/// the rayon pool; results are assembled in task and candidate order so the
/// output does not depend on scheduling.
#[allow(clippy::too_many_arguments)]
pub fn run_pipeline(
    tasks: &[Task],
    pool: &[ReferenceExemplar],
    pack: &PromptPack,
    meta_planner: &dyn Planner,
    backends: Backends<'_>,
    spec: &AgentSystemSpec,
    params: &PipelineParams,
) -> Result<PipelineOutput, EngineError> {
    params.delta.validate()?;
    params.impedance.validate()?;
    let mut candidates = Vec::new();
    let mut sft = Vec::new();
    let mut pairs = Vec::new();
    for (i, task) in tasks.iter().enumerate() {
        let seed = task_seed(params.seed, i);
        let ctx = build_context(&task.query, pack, pool, seed)?;
        let synth = exploratory_synthesis(&ctx, meta_planner, params.k, params.synthesis_temperature)?;
        let results: Vec<Result<CandidateResult, EngineError>> = synth
            .par_iter()
            .enumerate()
            .map(|(j, s)| {
                let traj = run_episode(&task.query, Some(&task.gold), &s.config, spec, backends, seed.wrapping_add(j as u64), &params.engine)?;
                Ok(CandidateResult::new(ctx.clone(), s.config.clone(), s.fallback, traj, &params.impedance)?)
            })
            .collect();
        let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;
        sft.extend(results.iter().filter_map(sft_record));
        pairs.extend(build_preference_pairs(&results, params.delta)?);
        candidates.extend(results);
    }
    let mean_impedance = if candidates.is_empty() {
        0.0
    } else {
        candidates.iter().map(|c| c.impedance.impedance).sum::<f64>() / candidates.len() as f64
    };
    let summary = PipelineSummary {
        n_tasks: tasks.len(),
        n_candidates: candidates.len(),
        n_sft: sft.len(),
        n_pairs: pairs.len(),
        mean_impedance,
    };
    Ok(PipelineOutput { candidates, sft, pairs, summary })
}
