//! End-to-end runs: calibrate, pick a plan, run the machine part, clean.
//!
//! [`Prepared`] holds everything that depends only on the data (the joint
//! HAC run and the calibration tasks), so Monte-Carlo users share it.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate_with_plan, plan_calibration, CalibrationPlan, CalibrationResult};
use crate::costmodel::{GlobalParams, PlanEstimate};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::hac::{run_joint_with_matrix, JointOutput};
use crate::model::{GoldPartition, Partition, ValueTable};
use crate::planner::{default_caps, rank, PlanReport};
use crate::similarity::{SimilarityConfig, SimilarityMatrix};
use crate::simulator::{generate_user, simulate_session, user_seeds, SimulationOptions, SimulationReport, SyntheticUser};

/// Which plan a run executes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum PlanChoice {
    /// Calibrate, then take the cheapest estimated plan.
    #[default]
    Auto,
    /// HAC(λ) for a fixed λ.
    Cap(usize),
    /// All singletons, λ = 1.
    Merge,
    /// Uncapped HAC, λ = n.
    Quack,
}

impl std::fmt::Display for PlanChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PlanChoice::Auto => f.write_str("auto"),
            PlanChoice::Merge => f.write_str("merge"),
            PlanChoice::Quack => f.write_str("quack"),
            PlanChoice::Cap(c) => write!(f, "{c}"),
        }
    }
}

impl From<PlanChoice> for String {
    fn from(p: PlanChoice) -> Self {
        p.to_string()
    }
}

impl TryFrom<String> for PlanChoice {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl std::str::FromStr for PlanChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(PlanChoice::Auto),
            "merge" => Ok(PlanChoice::Merge),
            "quack" => Ok(PlanChoice::Quack),
            other => other
                .parse::<usize>()
                .map(PlanChoice::Cap)
                .map_err(|_| Error::InvalidParameter(format!("plan must be auto, merge, quack or a cap, got {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub similarity: SimilarityConfig,
    pub global: GlobalParams,
    /// Candidate caps; defaults to `{1..=min(n, 100)} ∪ {n}`.
    pub caps: Option<Vec<usize>>,
    pub calibration_seed: u64,
    pub simulation: SimulationOptions,
    pub exec: Execution,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            similarity: SimilarityConfig::default(),
            global: GlobalParams::default(),
            caps: None,
            calibration_seed: 0,
            simulation: SimulationOptions {
                track_verification: false,
                strict_window: true,
            },
            exec: Execution::default(),
        }
    }
}

/// Data-only state shared by every user of a dataset.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub table: Arc<ValueTable>,
    pub joint: JointOutput,
    pub calibration: CalibrationPlan,
    pub config: PipelineConfig,
}

impl Prepared {
    pub fn new(table: Arc<ValueTable>, config: PipelineConfig) -> Result<Self> {
        let n = table.len();
        let mut caps = config.caps.clone().unwrap_or_else(|| default_caps(n));
        if n > 0 && !caps.contains(&n) {
            // Quack is always available for comparison.
            caps.push(n);
        }
        let sim = SimilarityMatrix::from_table(&table, &config.similarity, config.exec);
        let joint = run_joint_with_matrix(&sim, &config.similarity, &caps, config.exec)?;
        let calibration = plan_calibration(
            &table,
            &config.similarity,
            crate::costmodel::UserParams::default().stm_capacity,
            config.calibration_seed,
            config.exec,
        )?;
        Ok(Self {
            table,
            joint,
            calibration,
            config,
        })
    }

    pub fn caps(&self) -> Vec<usize> {
        self.joint.results.keys().copied().collect()
    }

    pub fn partition(&self, cap: usize) -> Result<&Partition> {
        self.joint
            .results
            .get(&cap)
            .map(|o| &o.partition)
            .ok_or_else(|| Error::InvalidParameter(format!("cap {cap} was not searched")))
    }

    /// The cap of a fixed plan; `None` for [`PlanChoice::Auto`].
    pub fn fixed_cap(&self, choice: PlanChoice) -> Option<usize> {
        match choice {
            PlanChoice::Merge => Some(1),
            PlanChoice::Quack => Some(self.table.len()),
            PlanChoice::Cap(c) => Some(c),
            PlanChoice::Auto => None,
        }
    }

    /// Calibrates `user` and ranks every searched plan with the fitted model.
    pub fn plan_for(&self, user: &SyntheticUser, gold: &GoldPartition) -> Result<(CalibrationResult, PlanReport)> {
        let cal = calibrate_with_plan(self.calibration.clone(), gold, &user.params)?;
        let report = rank(
            &self.joint,
            &cal.purity_model,
            &cal.user_params,
            &self.config.global,
            Execution::Sequential,
        )?;
        Ok((cal, report))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub cap: usize,
    pub estimate: Option<PlanEstimate>,
    pub calibration_seconds: f64,
    pub session: SimulationReport,
    /// Calibration plus cleaning.
    pub total_seconds: f64,
}

/// One synthetic user through one plan.
pub fn run_single(
    prepared: &Prepared,
    gold: &GoldPartition,
    user: &SyntheticUser,
    choice: PlanChoice,
) -> Result<RunReport> {
    let (cap, calibration_seconds, estimate) = match choice {
        PlanChoice::Auto => {
            let (cal, report) = prepared.plan_for(user, gold)?;
            let cap = report.selected.unwrap_or(1);
            (cap, cal.total_seconds, report.estimate(cap).cloned())
        }
        other => (prepared.fixed_cap(other).expect("fixed plan"), 0.0, None),
    };
    let input = if prepared.table.is_empty() {
        Partition::singletons(0)
    } else {
        prepared.partition(cap)?.clone()
    };
    let session = simulate_session(
        &prepared.table,
        &input,
        gold,
        user,
        &prepared.config.global,
        prepared.config.simulation,
    )?;
    Ok(RunReport {
        cap,
        estimate,
        calibration_seconds,
        total_seconds: calibration_seconds + session.total_seconds,
        session,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanRunSummary {
    pub choice: PlanChoice,
    pub users: usize,
    pub mean_seconds: f64,
    pub min_seconds: f64,
    pub max_seconds: f64,
    pub all_correct: bool,
    pub runs: Vec<RunReport>,
}

/// `n_users` generated users through one plan; deterministic in `seed`.
pub fn run_many(
    prepared: &Prepared,
    gold: &GoldPartition,
    choice: PlanChoice,
    n_users: usize,
    seed: u64,
) -> Result<PlanRunSummary> {
    if n_users == 0 {
        return Err(Error::InvalidParameter("n_users must be >= 1".into()));
    }
    let seeds = user_seeds(seed, n_users);
    let runs = prepared
        .config
        .exec
        .map(&seeds, |&s| run_single(prepared, gold, &generate_user(s), choice))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let totals: Vec<f64> = runs.iter().map(|r| r.total_seconds).collect();
    Ok(PlanRunSummary {
        choice,
        users: n_users,
        mean_seconds: totals.iter().sum::<f64>() / n_users as f64,
        min_seconds: totals.iter().copied().fold(f64::INFINITY, f64::min),
        max_seconds: totals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        all_correct: runs.iter().all(|r| r.session.is_correct()),
        runs,
    })
}
