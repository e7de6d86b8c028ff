//! A deterministic fact store standing in for the web, plus a failure plan
//! that forces chosen dispatches to fail.
//!
//! File format: one JSON object per line. `{"entity", "relation", "value"}`
//! lines are facts; `{"step", "node_id"}` lines are failure-plan entries,
//! where `node_id` may be `*` to fail every dispatch at that step.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::error::{PlanError, PlanResult};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triple {
    pub entity: String,
    pub relation: String,
    pub value: String,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FailureEntry {
    pub step: u32,
    pub node_id: String,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Line {
    Failure(FailureEntry),
    Fact(Triple),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScriptedWorld {
    /// (relation, entity) -> values in insertion order.
    facts: BTreeMap<(String, String), Vec<String>>,
    failures: BTreeSet<FailureEntry>,
}

impl ScriptedWorld {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_fact(&mut self, entity: &str, relation: &str, value: &str) {
        self.facts
            .entry((relation.trim().to_string(), entity.trim().to_string()))
            .or_default()
            .push(value.trim().to_string());
    }

    pub fn add_failure(&mut self, step: u32, node_id: &str) {
        self.failures.insert(FailureEntry { step, node_id: node_id.to_string() });
    }

    pub fn clear_failures(&mut self) {
        self.failures.clear();
    }

    pub fn failures(&self) -> impl Iterator<Item = &FailureEntry> {
        self.failures.iter()
    }

    pub fn from_jsonl(text: &str) -> PlanResult<Self> {
        let mut w = ScriptedWorld::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(line).map_err(|e| PlanError::Schema {
                entity: "world",
                message: format!("line {}: {e}", i + 1),
            })?;
            match parsed {
                Line::Fact(t) => w.add_fact(&t.entity, &t.relation, &t.value),
                Line::Failure(f) => {
                    w.failures.insert(f);
                }
            }
        }
        Ok(w)
    }

    pub fn load(path: &Path) -> PlanResult<Self> {
        Self::from_jsonl(&std::fs::read_to_string(path)?)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for ((relation, entity), values) in &self.facts {
            for value in values {
                let t = Triple { entity: entity.clone(), relation: relation.clone(), value: value.clone() };
                out.push_str(&serde_json::to_string(&t).expect("triple serializes"));
                out.push('\n');
            }
        }
        for f in &self.failures {
            out.push_str(&serde_json::to_string(f).expect("failure serializes"));
            out.push('\n');
        }
        out
    }

    /// First value of `relation` for `entity`, trying the swapped argument
    /// order as a fallback.
    pub fn lookup(&self, relation: &str, entity: &str) -> Option<&str> {
        let get = |r: &str, e: &str| {
            self.facts
                .get(&(r.trim().to_string(), e.trim().to_string()))
                .and_then(|v| v.first())
                .map(String::as_str)
        };
        get(relation, entity).or_else(|| get(entity, relation))
    }

    /// All values recorded for `(relation, entity)`.
    pub fn candidates(&self, relation: &str, entity: &str) -> &[String] {
        self.facts
            .get(&(relation.trim().to_string(), entity.trim().to_string()))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn forced_failure(&self, step: u32, node: &str) -> bool {
        self.failures.iter().any(|f| f.step == step && (f.node_id == node || f.node_id == "*"))
    }

    pub fn fact_count(&self) -> usize {
        self.facts.values().map(Vec::len).sum()
    }
}
