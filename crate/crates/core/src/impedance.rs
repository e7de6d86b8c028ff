//! Cognitive impedance: total cost scaled exponentially by failures,
//! instability and the planning/execution cost ratio.
//!
//! `I = C_tot * exp(l1 * N_fail + l2 * (1 - S_stab) + l3 * ratio)` where
//! `ratio = min(C_plan / max(C_exec, eps), cap)`. The stability score is
//! defined here as revision-and-retry density; an alternative scorer based
//! on the longest failure-free run is available.

use serde::{Deserialize, Serialize};

use crate::error::{PlanError, PlanResult};
use crate::plan::{EventKind, Trajectory};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityScorer {
    /// `1 - (revisions + retries) / steps`, clamped to [0, 1].
    #[default]
    RevisionDensity,
    /// Longest run of dispatch steps without a failure or revision, over all steps.
    FailureFreeRun,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImpedanceParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    /// Floor on execution tokens in the ratio denominator.
    pub exec_epsilon: f64,
    pub ratio_cap: f64,
    /// Weight of impedance in the success-minus-cost objective.
    pub objective_lambda: f64,
    pub stability: StabilityScorer,
}

impl Default for ImpedanceParams {
    fn default() -> Self {
        ImpedanceParams {
            lambda1: 0.5,
            lambda2: 0.5,
            lambda3: 1.0,
            exec_epsilon: 1.0,
            ratio_cap: 10.0,
            objective_lambda: 0.1,
            stability: StabilityScorer::RevisionDensity,
        }
    }
}

impl ImpedanceParams {
    pub fn validate(&self) -> PlanResult<()> {
        let all = [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
            ("exec_epsilon", self.exec_epsilon),
            ("ratio_cap", self.ratio_cap),
            ("objective_lambda", self.objective_lambda),
        ];
        for (name, v) in all {
            if !v.is_finite() || v < 0.0 {
                return Err(PlanError::InvalidConfig(format!("impedance {name} must be finite and >= 0, got {v}")));
            }
        }
        if self.exec_epsilon <= 0.0 || self.ratio_cap <= 0.0 {
            return Err(PlanError::InvalidConfig("exec_epsilon and ratio_cap must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpedanceBreakdown {
    pub c_tot: f64,
    pub n_fail: f64,
    pub s_stab: f64,
    pub plan_exec_ratio: f64,
    pub exponent: f64,
    pub impedance: f64,
}

/// Revision-and-retry density score from the stored aggregates.
pub fn stability_score(traj: &Trajectory) -> f64 {
    let a = &traj.aggregates;
    let churn = (a.n_revisions + a.n_retries) as f64;
    (1.0 - churn / a.n_steps.max(1) as f64).clamp(0.0, 1.0)
}

/// Longest run of consecutive dispatch steps free of failure signals and
/// revisions, as a fraction of all dispatch steps.
pub fn failure_free_run_score(traj: &Trajectory) -> f64 {
    use std::collections::BTreeMap;
    let mut steps: BTreeMap<u32, bool> = BTreeMap::new();
    for e in &traj.events {
        match e.kind {
            EventKind::Dispatch => {
                steps.entry(e.step).or_insert(true);
            }
            EventKind::FailureSignal | EventKind::Revision => {
                if let Some(clean) = steps.get_mut(&e.step) {
                    *clean = false;
                }
            }
            _ => {}
        }
    }
    let (mut best, mut cur) = (0usize, 0usize);
    for clean in steps.values() {
        cur = if *clean { cur + 1 } else { 0 };
        best = best.max(cur);
    }
    best as f64 / steps.len().max(1) as f64
}

/// The metric from its ingredients, with the ratio already formed (it is
/// still capped here).
pub fn impedance_terms(c_tot: f64, n_fail: f64, s_stab: f64, ratio: f64, params: &ImpedanceParams) -> PlanResult<ImpedanceBreakdown> {
    for (name, v) in [("c_tot", c_tot), ("n_fail", n_fail), ("ratio", ratio)] {
        if !v.is_finite() || v < 0.0 {
            return Err(PlanError::Data(format!("{name} must be finite and >= 0, got {v}")));
        }
    }
    if !(0.0..=1.0).contains(&s_stab) {
        return Err(PlanError::Data(format!("s_stab must lie in [0, 1], got {s_stab}")));
    }
    let ratio = ratio.min(params.ratio_cap);
    let exponent = params.lambda1 * n_fail + params.lambda2 * (1.0 - s_stab) + params.lambda3 * ratio;
    Ok(ImpedanceBreakdown {
        c_tot,
        n_fail,
        s_stab,
        plan_exec_ratio: ratio,
        exponent,
        impedance: c_tot * exponent.exp(),
    })
}

/// The metric from split token counts.
pub fn impedance_from_parts(c_plan: f64, c_exec: f64, n_fail: f64, s_stab: f64, params: &ImpedanceParams) -> PlanResult<ImpedanceBreakdown> {
    for (name, v) in [("c_plan", c_plan), ("c_exec", c_exec)] {
        if !v.is_finite() || v < 0.0 {
            return Err(PlanError::Data(format!("{name} must be finite and >= 0, got {v}")));
        }
    }
    let ratio = c_plan / c_exec.max(params.exec_epsilon);
    impedance_terms(c_plan + c_exec, n_fail, s_stab, ratio, params)
}

pub fn impedance(traj: &Trajectory, params: &ImpedanceParams) -> PlanResult<ImpedanceBreakdown> {
    let a = &traj.aggregates;
    let s_stab = match params.stability {
        StabilityScorer::RevisionDensity => stability_score(traj),
        StabilityScorer::FailureFreeRun => failure_free_run_score(traj),
    };
    let mut b = impedance_from_parts(a.c_plan_tokens as f64, a.c_exec_tokens as f64, a.n_fail as f64, s_stab, params)?;
    b.c_tot = a.c_total_tokens as f64;
    b.impedance = b.c_tot * b.exponent.exp();
    Ok(b)
}

/// `R - lambda * I` with `R` the judged success.
pub fn objective(traj: &Trajectory, params: &ImpedanceParams) -> PlanResult<f64> {
    let verdict = traj
        .verdict
        .as_ref()
        .ok_or_else(|| PlanError::State("objective needs a judged trajectory".into()))?;
    let r = if verdict.success { 1.0 } else { 0.0 };
    Ok(r - params.objective_lambda * impedance(traj, params)?.impedance)
}

/// Per-million-token prices for a dollar view of token counts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriceTable {
    pub plan_per_mtok: f64,
    pub exec_per_mtok: f64,
}

impl Default for PriceTable {
    fn default() -> Self {
        PriceTable { plan_per_mtok: 3.0, exec_per_mtok: 1.0 }
    }
}

impl PriceTable {
    pub fn dollars(&self, c_plan: f64, c_exec: f64) -> f64 {
        (c_plan * self.plan_per_mtok + c_exec * self.exec_per_mtok) / 1e6
    }
}
