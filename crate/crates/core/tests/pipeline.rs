//! The data pipeline end to end on a slice of the suite.

use planfab_core::datapipe::{
    emit_corpus, read_preference_corpus, read_sft_corpus, reference_pool, run_pipeline, validate_preference, validate_sft,
    CorpusRecord, PipelineOutput, PipelineParams, PromptPack, ScriptedMetaPlanner,
};
use planfab_core::executor::{default_agent_spec, Backends, ScriptedAgent};
use planfab_core::suite::{suite_tasks, suite_world, SuitePlanner};

fn pipeline(n: usize, seed: u64) -> PipelineOutput {
    let tasks = &suite_tasks()[..n];
    let planner = SuitePlanner::new(tasks).unwrap();
    let world = suite_world();
    let b = Backends { planner: &planner, agent: &ScriptedAgent, world: &world, judge_chat: None };
    let params = PipelineParams { seed, ..Default::default() };
    run_pipeline(tasks, &reference_pool(), &PromptPack::default(), &ScriptedMetaPlanner, b, &default_agent_spec(), &params).unwrap()
}

#[test]
fn records_are_valid_and_counts_add_up() {
    let out = pipeline(12, 5);
    assert_eq!(out.summary.n_tasks, 12);
    assert_eq!(out.summary.n_candidates, 48);
    assert_eq!(out.summary.n_sft, out.candidates.iter().filter(|c| c.success()).count());
    assert_eq!(out.summary.n_pairs, out.pairs.len());
    assert!(out.summary.n_sft > 0 && out.summary.n_pairs > 0);
    out.sft.iter().for_each(|r| validate_sft(r).unwrap());
    out.pairs.iter().for_each(|r| validate_preference(r).unwrap());
    let mean = out.candidates.iter().map(|c| c.impedance.impedance).sum::<f64>() / 48.0;
    assert!((out.summary.mean_impedance - mean).abs() <= 1e-9 * mean);
}

#[test]
fn corpora_are_reproducible_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let write = |out: &PipelineOutput, tag: &str| {
        let s = dir.path().join(format!("sft-{tag}.jsonl"));
        let p = dir.path().join(format!("pairs-{tag}.jsonl"));
        emit_corpus(&s, &out.sft.iter().cloned().map(CorpusRecord::Sft).collect::<Vec<_>>()).unwrap();
        emit_corpus(&p, &out.pairs.iter().cloned().map(CorpusRecord::Preference).collect::<Vec<_>>()).unwrap();
        (s, p)
    };
    let a = pipeline(6, 11);
    let b = pipeline(6, 11);
    let (sa, pa) = write(&a, "a");
    let (sb, pb) = write(&b, "b");
    assert_eq!(std::fs::read(&sa).unwrap(), std::fs::read(&sb).unwrap());
    assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());
    assert_eq!(read_sft_corpus(&sa).unwrap(), a.sft);
    assert_eq!(read_preference_corpus(&pa).unwrap(), a.pairs);
}
