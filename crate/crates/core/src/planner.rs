//! Plan search: estimate every candidate HAC(λ) plan and pick the cheapest.

use serde::{Deserialize, Serialize};

use crate::costmodel::{cost_plan, GlobalParams, PlanEstimate, PurityModel, UserParams};
use crate::error::Result;
use crate::exec::Execution;
use crate::hac::{run_joint_with_matrix, JointOutput};
use crate::model::{Partition, ValueTable};
use crate::similarity::{SimilarityConfig, SimilarityMatrix};

/// Largest cap searched exhaustively by default; `n` itself is always added.
pub const DEFAULT_CAP_LIMIT: usize = 100;

/// `{1..=min(n, 100)} ∪ {n}`.
pub fn default_caps(n: usize) -> Vec<usize> {
    let mut caps: Vec<usize> = (1..=n.min(DEFAULT_CAP_LIMIT)).collect();
    if n > DEFAULT_CAP_LIMIT {
        caps.push(n);
    }
    caps
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    /// Ascending by estimated seconds, ties by cap.
    pub estimates: Vec<PlanEstimate>,
    pub selected: Option<usize>,
}

impl PlanReport {
    pub fn from_estimates(mut estimates: Vec<PlanEstimate>) -> Self {
        estimates.sort_by(|a, b| {
            a.estimated_seconds
                .total_cmp(&b.estimated_seconds)
                .then(a.cap.cmp(&b.cap))
        });
        let selected = estimates.first().map(|e| e.cap);
        Self { estimates, selected }
    }

    pub fn estimate(&self, cap: usize) -> Option<&PlanEstimate> {
        self.estimates.iter().find(|e| e.cap == cap)
    }
}

/// A finished search, keeping the clusterings so the selected plan can run.
#[derive(Clone, Debug)]
pub struct PlanSearch {
    pub report: PlanReport,
    pub joint: JointOutput,
}

impl PlanSearch {
    pub fn partition(&self, cap: usize) -> Option<&Partition> {
        self.joint.results.get(&cap).map(|o| &o.partition)
    }

    pub fn selected_partition(&self) -> Option<&Partition> {
        self.report.selected.and_then(|c| self.partition(c))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SearchInputs<'a> {
    pub similarity: &'a SimilarityConfig,
    pub purity: &'a PurityModel,
    pub user: &'a UserParams,
    pub global: &'a GlobalParams,
}

pub fn search_with_matrix(
    sim: &SimilarityMatrix,
    caps: &[usize],
    inputs: SearchInputs<'_>,
    exec: Execution,
) -> Result<PlanSearch> {
    let joint = run_joint_with_matrix(sim, inputs.similarity, caps, exec)?;
    let report = rank(&joint, inputs.purity, inputs.user, inputs.global, exec)?;
    Ok(PlanSearch { report, joint })
}

/// Estimates every clustering of a finished joint run; the machine part is
/// shared, so several users can be ranked against one run.
pub fn rank(
    joint: &JointOutput,
    purity: &PurityModel,
    user: &UserParams,
    global: &GlobalParams,
    exec: Execution,
) -> Result<PlanReport> {
    let outputs: Vec<(usize, &Partition)> = joint.results.iter().map(|(&c, o)| (c, &o.partition)).collect();
    let estimates = exec
        .map(&outputs, |(cap, p)| cost_plan(p, purity, *cap, user, global))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(PlanReport::from_estimates(estimates))
}

pub fn search(table: &ValueTable, caps: &[usize], inputs: SearchInputs<'_>, exec: Execution) -> Result<PlanSearch> {
    let sim = SimilarityMatrix::from_table(table, inputs.similarity, exec);
    search_with_matrix(&sim, caps, inputs, exec)
}
