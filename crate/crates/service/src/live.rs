//! Sessions driven one action at a time by real (or scripted) users.
//!
//! A [`LiveSession`] is a pure function of its [`SessionSpec`], its prepared
//! dataset and the accepted submissions, which is what makes log replay work.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use vnorm_core::calibration::{CalibrationKind, CalibrationObservation, CalibrationResult, CalibrationSession, CalibrationTask};
use vnorm_core::costmodel::{GlobalParams, PlanEstimate, PurityModel, UserParams};
use vnorm_core::metrics::{precision_recall, PrecisionRecall};
use vnorm_core::multiuser::{assign_clusters, average_params, average_purity, MultiUserMerge, SetMergeAnswer, SetMergeTask, Share};
use vnorm_core::pipeline::{PlanChoice, Prepared};
use vnorm_core::planner::rank;
use vnorm_core::procedures::{Action, PhaseSeconds, Session, SessionConfig, Task, TaskKind, Timing};
use vnorm_core::similarity::{Profiles, SimilarityConfig};
use vnorm_core::{Error as CoreError, Execution, GoldPartition, Partition, ValueId, ValueTable};

use crate::error::{ServiceError, ServiceResult};

/// Upper bound on cwinston user slots.
pub const MAX_USERS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Calibrate,
    Clean,
    Cwinston,
}

/// A cost model given directly instead of through calibration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub user: UserParams,
    pub purity: PurityModel,
}

impl From<&CalibrationResult> for ModelParams {
    fn from(c: &CalibrationResult) -> Self {
        Self {
            user: c.user_params,
            purity: c.purity_model,
        }
    }
}

/// Everything needed to rebuild a session; the first record of its log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionSpec {
    pub dataset: String,
    pub mode: Mode,
    pub users: usize,
    pub timing: Timing,
    pub plan: PlanChoice,
    pub params: Option<ModelParams>,
    pub calibration_seed: u64,
    pub global: GlobalParams,
    pub similarity: SimilarityConfig,
    pub caps: Option<Vec<usize>>,
}

/// One user's answer, tagged by the stage it answers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum Submission {
    Calibration(CalibrationObservation),
    Cleaning(Action),
    SetMerge(SetMergeAnswer),
}

impl Submission {
    pub fn task_id(&self) -> u64 {
        match self {
            Submission::Calibration(o) => o.index as u64,
            Submission::Cleaning(a) => a.task_id,
            Submission::SetMerge(a) => a.task_id,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Calibration,
    Cleaning,
    SetMerge,
    Done,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub id: ValueId,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub stage: Stage,
    /// Cleaning phase, when cleaning.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase: Option<String>,
    /// Clusters still to split, when cleaning.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clusters_remaining: Option<usize>,
    /// Calibration tasks answered, when calibrating.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub answered: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total: Option<usize>,
    /// Merge round, when merging across users.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub round: Option<usize>,
}

/// What the user sees: the strings to show, the ids to answer with and the
/// buttons available. Exactly one of the stage-specific task fields is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskView {
    pub task_id: u64,
    pub stage: Stage,
    pub kind: String,
    /// Every value the task shows, in display order.
    pub values: Vec<Item>,
    pub allowed_actions: Vec<String>,
    pub progress: Progress,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationTask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cleaning: Option<Task>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub set_merge: Option<SetMergeTask>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SlotStatus {
    Task(Box<TaskView>),
    /// Blocked at a barrier until the other users finish `stage`.
    Waiting { stage: Stage },
    Done,
}

/// What one accepted submission changed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Applied {
    pub task_id: u64,
    pub charged_seconds: f64,
    pub assertions: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultCluster {
    pub id: usize,
    pub canonical: String,
    pub values: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    pub mode: Mode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cap: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimate: Option<PlanEstimate>,
    /// Calibration plus cleaning; for several users, the sum of stage maxima.
    pub total_seconds: f64,
    pub per_user_seconds: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase_seconds: Option<PhaseSeconds>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub partition: Option<Partition>,
    pub clusters: Vec<ResultCluster>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<PrecisionRecall>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationResult>,
}

struct Cleaning {
    cap: usize,
    estimate: Option<PlanEstimate>,
    session: Session,
}

enum TeamStage {
    Calibrating(Vec<CalibrationSession>),
    Cleaning(Vec<Option<Session>>),
    Merging(Box<MultiUserMerge>),
    Done(Partition),
}

struct Team {
    prepared: Arc<Prepared>,
    stage: TeamStage,
    calibrations: Vec<CalibrationResult>,
    user_params: Vec<UserParams>,
    cap: Option<usize>,
    estimate: Option<PlanEstimate>,
    shares: Vec<Share>,
    stage_seconds: Vec<f64>,
    busy: Vec<f64>,
}

enum State {
    Calibrate(CalibrationSession),
    Clean(Box<Cleaning>),
    Team(Box<Team>),
}

pub struct LiveSession {
    spec: SessionSpec,
    table: Arc<ValueTable>,
    state: State,
    applied: u64,
}

fn session_config(spec: &SessionSpec, params: UserParams) -> SessionConfig {
    SessionConfig {
        params,
        global: spec.global,
        timing: spec.timing,
        strict_window: false,
        track_verification: true,
    }
}

fn resolve_cap(
    prepared: &Prepared,
    choice: PlanChoice,
    params: Option<&ModelParams>,
    global: &GlobalParams,
) -> ServiceResult<(usize, Option<PlanEstimate>)> {
    let n = prepared.table.len();
    if let Some(cap) = prepared.fixed_cap(choice) {
        if n > 0 && prepared.partition(cap).is_err() {
            return Err(ServiceError::BadRequest(format!("cap {cap} is not among the searched caps")));
        }
        return Ok((cap, None));
    }
    let p = params.ok_or(ServiceError::MissingCalibration)?;
    if n == 0 {
        return Ok((0, None));
    }
    let report = rank(&prepared.joint, &p.purity, &p.user, global, Execution::Parallel)?;
    let cap = report.selected.unwrap_or(1);
    Ok((cap, report.estimate(cap).cloned()))
}

impl LiveSession {
    pub fn new(spec: SessionSpec, prepared: Arc<Prepared>) -> ServiceResult<Self> {
        let table = Arc::clone(&prepared.table);
        if spec.users == 0 || spec.users > MAX_USERS {
            return Err(ServiceError::BadRequest(format!("users must be in 1..={MAX_USERS}")));
        }
        if spec.mode != Mode::Cwinston && spec.users != 1 {
            return Err(ServiceError::BadRequest("only cwinston sessions have several users".into()));
        }
        spec.global.validate()?;
        let base = spec.params.map(|p| p.user).unwrap_or_default();
        base.validate()?;
        let state = match spec.mode {
            Mode::Calibrate => State::Calibrate(CalibrationSession::new(prepared.calibration.clone(), base)),
            Mode::Clean => {
                let (cap, estimate) = resolve_cap(&prepared, spec.plan, spec.params.as_ref(), &spec.global)?;
                let input = if table.is_empty() {
                    Partition::singletons(0)
                } else {
                    prepared.partition(cap)?.clone()
                };
                let session = Session::new(Arc::clone(&table), input, session_config(&spec, base))?;
                State::Clean(Box::new(Cleaning { cap, estimate, session }))
            }
            Mode::Cwinston => {
                let k = spec.users;
                let mut team = Team {
                    prepared: Arc::clone(&prepared),
                    stage: TeamStage::Calibrating(Vec::new()),
                    calibrations: Vec::new(),
                    user_params: vec![base; k],
                    cap: None,
                    estimate: None,
                    shares: Vec::new(),
                    stage_seconds: Vec::new(),
                    busy: vec![0.0; k],
                };
                match spec.params {
                    Some(p) => {
                        team.stage_seconds.push(0.0);
                        team.start_cleaning(&spec, p)?;
                    }
                    None => {
                        team.stage = TeamStage::Calibrating(
                            (0..k).map(|_| CalibrationSession::new(prepared.calibration.clone(), base)).collect(),
                        );
                        team.advance(&spec)?;
                    }
                }
                State::Team(Box::new(team))
            }
        };
        Ok(Self {
            spec,
            table,
            state,
            applied: 0,
        })
    }

    pub fn spec(&self) -> &SessionSpec {
        &self.spec
    }

    pub fn table(&self) -> &Arc<ValueTable> {
        &self.table
    }

    /// Accepted submissions so far.
    pub fn applied(&self) -> u64 {
        self.applied
    }

    pub fn is_done(&self) -> bool {
        match &self.state {
            State::Calibrate(c) => c.is_done(),
            State::Clean(c) => c.session.is_done(),
            State::Team(t) => matches!(t.stage, TeamStage::Done(_)),
        }
    }

    pub fn stage(&self) -> Stage {
        match &self.state {
            State::Calibrate(c) if !c.is_done() => Stage::Calibration,
            State::Clean(c) if !c.session.is_done() => Stage::Cleaning,
            State::Team(t) => t.stage(),
            _ => Stage::Done,
        }
    }

    fn check_slot(&self, slot: usize) -> ServiceResult<()> {
        if slot >= self.spec.users {
            return Err(ServiceError::InvalidSlot {
                slot,
                users: self.spec.users,
            });
        }
        Ok(())
    }

    fn items(&self, ids: impl IntoIterator<Item = ValueId>) -> Vec<Item> {
        let mut seen = std::collections::HashSet::new();
        ids.into_iter()
            .filter(|v| seen.insert(*v))
            .map(|id| Item {
                id,
                text: self.table.get(id).to_string(),
            })
            .collect()
    }

    fn calibration_view(&self, c: &CalibrationSession, task: &CalibrationTask) -> TaskView {
        let actions: &[&str] = match task.kind {
            CalibrationKind::MatchPair => &["same", "different"],
            CalibrationKind::IsPureCluster => &["yes", "no"],
            _ => &["submit_dominating"],
        };
        TaskView {
            task_id: task.index as u64,
            stage: Stage::Calibration,
            kind: serde_json::to_value(task.kind)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default(),
            values: self.items(task.values.iter().copied()),
            allowed_actions: actions.iter().map(|s| s.to_string()).collect(),
            progress: Progress {
                stage: Stage::Calibration,
                phase: None,
                clusters_remaining: None,
                answered: Some(c.observations.len()),
                total: Some(c.plan.tasks.len()),
                round: None,
            },
            calibration: Some(task.clone()),
            cleaning: None,
            set_merge: None,
        }
    }

    fn cleaning_view(&self, session: &Session, task: Task) -> TaskView {
        let actions: &[&str] = match &task.kind {
            TaskKind::IsPureQuestion { .. } => &["yes", "no"],
            TaskKind::FindDomAndMark { .. } => &["mark_values", "clean_mixed_cluster"],
            TaskKind::MarkValues { .. } => &["create_clean_new_cluster", "create_new_cluster_clean_old"],
            TaskKind::LocalMergeScan { .. } => &["link", "done_local_merging"],
            TaskKind::GlobalMergeGrid { .. } => &["global_merge"],
        };
        TaskView {
            task_id: task.id,
            stage: Stage::Cleaning,
            kind: task.kind.name().to_string(),
            values: self.items(task.kind.shown()),
            allowed_actions: actions.iter().map(|s| s.to_string()).collect(),
            progress: Progress {
                stage: Stage::Cleaning,
                phase: serde_json::to_value(session.phase())
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_string)),
                clusters_remaining: Some(session.clusters_remaining()),
                answered: None,
                total: None,
                round: None,
            },
            calibration: None,
            cleaning: Some(task),
            set_merge: None,
        }
    }

    fn set_merge_view(&self, task: &SetMergeTask) -> TaskView {
        TaskView {
            task_id: task.id,
            stage: Stage::SetMerge,
            kind: "set_merge_grid".into(),
            values: self.items(task.columns.iter().chain(&task.rows).copied()),
            allowed_actions: vec!["global_merge".into()],
            progress: Progress {
                stage: Stage::SetMerge,
                phase: None,
                clusters_remaining: None,
                answered: None,
                total: None,
                round: Some(task.round),
            },
            calibration: None,
            cleaning: None,
            set_merge: Some(task.clone()),
        }
    }

    /// The slot's pending task; repeated calls return the same task until an
    /// action is accepted.
    pub fn status(&self, slot: usize) -> ServiceResult<SlotStatus> {
        self.check_slot(slot)?;
        let view = match &self.state {
            State::Calibrate(c) => c.next_task().map(|t| self.calibration_view(c, t)),
            State::Clean(c) => c.session.pending_task().map(|t| self.cleaning_view(&c.session, t.clone())),
            State::Team(team) => match &team.stage {
                TeamStage::Calibrating(sessions) => match sessions[slot].next_task() {
                    Some(t) => Some(self.calibration_view(&sessions[slot], t)),
                    None => return Ok(SlotStatus::Waiting { stage: Stage::Calibration }),
                },
                TeamStage::Cleaning(sessions) => {
                    match sessions[slot].as_ref().and_then(|s| s.pending_task().map(|t| (s, t))) {
                        Some((s, t)) => {
                            let ids = &team.shares[slot].ids;
                            let task = Task {
                                id: t.id,
                                kind: t.kind.map_ids(|v| ids[v]),
                                nested: t.nested,
                            };
                            Some(self.cleaning_view(s, task))
                        }
                        None => return Ok(SlotStatus::Waiting { stage: Stage::Cleaning }),
                    }
                }
                TeamStage::Merging(m) => match m.task(slot) {
                    Some(t) => Some(self.set_merge_view(t)),
                    None => return Ok(SlotStatus::Waiting { stage: Stage::SetMerge }),
                },
                TeamStage::Done(_) => None,
            },
        };
        Ok(match view {
            Some(v) => SlotStatus::Task(Box::new(v)),
            None => SlotStatus::Done,
        })
    }

    /// Applies one submission atomically: on error nothing changes.
    pub fn submit(&mut self, slot: usize, submission: Submission) -> ServiceResult<Applied> {
        self.check_slot(slot)?;
        if self.is_done() {
            return Err(CoreError::SessionDone.into());
        }
        let task_id = submission.task_id();
        let spec = &self.spec;
        let applied = match (&mut self.state, submission) {
            (State::Calibrate(c), Submission::Calibration(obs)) => {
                let elapsed = obs.elapsed;
                c.submit(obs)?;
                Applied {
                    task_id,
                    charged_seconds: elapsed,
                    assertions: 0,
                }
            }
            (State::Clean(c), Submission::Cleaning(action)) => {
                c.session.apply(action)?;
                last_event(&c.session, task_id)
            }
            (State::Team(team), submission) => team.submit(spec, slot, submission)?,
            (_, other) => {
                return Err(CoreError::ActionMismatch(format!(
                    "a {} submission does not fit the current {:?} stage",
                    stage_name(&other),
                    self.stage()
                ))
                .into())
            }
        };
        self.applied += 1;
        Ok(applied)
    }

    pub fn calibration(&self) -> ServiceResult<CalibrationResult> {
        match &self.state {
            State::Calibrate(c) => c.finish().map_err(|e| match e {
                CoreError::IncompleteSession => ServiceError::SessionNotDone,
                e => e.into(),
            }),
            _ => Err(ServiceError::BadRequest("only calibrate sessions export a calibration".into())),
        }
    }

    /// The finished session's output, scored against `gold` when given.
    pub fn result(&self, gold: Option<&GoldPartition>) -> ServiceResult<SessionResult> {
        if !self.is_done() {
            return Err(ServiceError::SessionNotDone);
        }
        let (partition, mut result) = match &self.state {
            State::Calibrate(c) => {
                let cal = c.finish()?;
                let r = SessionResult {
                    mode: Mode::Calibrate,
                    cap: None,
                    estimate: None,
                    total_seconds: cal.total_seconds,
                    per_user_seconds: vec![cal.total_seconds],
                    phase_seconds: None,
                    partition: None,
                    clusters: Vec::new(),
                    metrics: None,
                    calibration: Some(cal),
                };
                return Ok(r);
            }
            State::Clean(c) => {
                let outcome = c.session.finalize()?;
                let r = SessionResult {
                    mode: Mode::Clean,
                    cap: Some(c.cap),
                    estimate: c.estimate.clone(),
                    total_seconds: outcome.total_seconds,
                    per_user_seconds: vec![outcome.total_seconds],
                    phase_seconds: Some(outcome.phase_seconds),
                    partition: None,
                    clusters: Vec::new(),
                    metrics: None,
                    calibration: None,
                };
                (outcome.partition, r)
            }
            State::Team(t) => {
                let TeamStage::Done(p) = &t.stage else {
                    unreachable!("checked by is_done")
                };
                let r = SessionResult {
                    mode: Mode::Cwinston,
                    cap: t.cap,
                    estimate: t.estimate.clone(),
                    total_seconds: t.stage_seconds.iter().sum(),
                    per_user_seconds: t.busy.clone(),
                    phase_seconds: None,
                    partition: None,
                    clusters: Vec::new(),
                    metrics: None,
                    calibration: None,
                };
                (p.clone(), r)
            }
        };
        let canonical = partition.canonical(&self.table);
        result.clusters = partition
            .clusters()
            .iter()
            .zip(canonical)
            .map(|(c, canon)| ResultCluster {
                id: c.id,
                canonical: self.table.get(canon).to_string(),
                values: c.members.iter().map(|&v| self.table.get(v).to_string()).collect(),
            })
            .collect();
        if let Some(gold) = gold {
            result.metrics = Some(precision_recall(&partition, gold)?);
        }
        result.partition = Some(partition);
        Ok(result)
    }
}

fn stage_name(s: &Submission) -> &'static str {
    match s {
        Submission::Calibration(_) => "calibration",
        Submission::Cleaning(_) => "cleaning",
        Submission::SetMerge(_) => "set_merge",
    }
}

fn last_event(session: &Session, task_id: u64) -> Applied {
    let e = session.events().last().expect("an action was just applied");
    Applied {
        task_id,
        charged_seconds: e.seconds,
        assertions: e.assertions,
    }
}

impl Team {
    fn stage(&self) -> Stage {
        match self.stage {
            TeamStage::Calibrating(_) => Stage::Calibration,
            TeamStage::Cleaning(_) => Stage::Cleaning,
            TeamStage::Merging(_) => Stage::SetMerge,
            TeamStage::Done(_) => Stage::Done,
        }
    }

    fn start_cleaning(&mut self, spec: &SessionSpec, params: ModelParams) -> ServiceResult<()> {
        let prepared = Arc::clone(&self.prepared);
        let table = &prepared.table;
        if table.is_empty() {
            self.stage = TeamStage::Done(Partition::singletons(0));
            return Ok(());
        }
        let (cap, estimate) = resolve_cap(&prepared, spec.plan, Some(&params), &spec.global)?;
        let partition = prepared.partition(cap)?;
        let assignment = assign_clusters(partition, spec.users)?;
        self.shares = assignment
            .shares
            .iter()
            .map(|s| Share::new(table, partition, s))
            .collect();
        let sessions = self
            .shares
            .iter()
            .zip(&self.user_params)
            .map(|(share, &u)| {
                if share.ids.is_empty() {
                    return Ok(None);
                }
                Session::new(Arc::clone(&share.table), share.input.clone(), session_config(spec, u)).map(Some)
            })
            .collect::<Result<Vec<_>, _>>()?;
        self.cap = Some(cap);
        self.estimate = estimate;
        self.stage = TeamStage::Cleaning(sessions);
        self.advance(spec)
    }

    /// Moves past every stage whose users have all finished.
    fn advance(&mut self, spec: &SessionSpec) -> ServiceResult<()> {
        loop {
            match &self.stage {
                TeamStage::Calibrating(sessions) if sessions.iter().all(CalibrationSession::is_done) => {
                    let results = sessions.iter().map(CalibrationSession::finish).collect::<Result<Vec<_>, _>>()?;
                    self.stage_seconds.push(results.iter().map(|r| r.total_seconds).fold(0.0, f64::max));
                    self.user_params = results.iter().map(|r| r.user_params).collect();
                    let params = ModelParams {
                        user: average_params(&self.user_params)?,
                        purity: average_purity(&results.iter().map(|r| r.purity_model).collect::<Vec<_>>())?,
                    };
                    self.calibrations = results;
                    self.start_cleaning(spec, params)?;
                    return Ok(());
                }
                TeamStage::Cleaning(sessions) if sessions.iter().all(|s| s.as_ref().is_none_or(Session::is_done)) => {
                    let mut lists = Vec::with_capacity(sessions.len());
                    let mut seconds = Vec::with_capacity(sessions.len());
                    for (s, share) in sessions.iter().zip(&self.shares) {
                        match s {
                            Some(s) => {
                                let out = s.finalize()?;
                                seconds.push(out.total_seconds);
                                lists.push(share.lift(&out.partition));
                            }
                            None => {
                                seconds.push(0.0);
                                lists.push(Vec::new());
                            }
                        }
                    }
                    self.stage_seconds.push(seconds.iter().copied().fold(0.0, f64::max));
                    let table = &self.prepared.table;
                    if spec.users == 1 {
                        let clusters: Vec<Vec<ValueId>> = lists.into_iter().flatten().collect();
                        self.stage = TeamStage::Done(Partition::from_groups(table.len(), clusters)?);
                        continue;
                    }
                    let profiles = Profiles::build(table, &spec.similarity);
                    let mum = MultiUserMerge::new(table, profiles, lists, spec.users)?;
                    self.stage = TeamStage::Merging(Box::new(mum));
                }
                TeamStage::Merging(m) if m.is_done() => {
                    let TeamStage::Merging(m) = std::mem::replace(&mut self.stage, TeamStage::Done(Partition::singletons(0)))
                    else {
                        unreachable!()
                    };
                    self.stage_seconds.push(m.total_seconds());
                    let clusters = m.into_clusters()?;
                    self.stage = TeamStage::Done(Partition::from_groups(self.prepared.table.len(), clusters)?);
                }
                _ => return Ok(()),
            }
        }
    }

    fn submit(&mut self, spec: &SessionSpec, slot: usize, submission: Submission) -> ServiceResult<Applied> {
        let task_id = submission.task_id();
        let applied = match (&mut self.stage, submission) {
            (TeamStage::Calibrating(sessions), Submission::Calibration(obs)) => {
                if sessions[slot].is_done() {
                    return Err(ServiceError::SlotBlocked(slot));
                }
                let elapsed = obs.elapsed;
                sessions[slot].submit(obs)?;
                Applied {
                    task_id,
                    charged_seconds: elapsed,
                    assertions: 0,
                }
            }
            (TeamStage::Cleaning(sessions), Submission::Cleaning(action)) => {
                let Some(session) = sessions[slot].as_mut().filter(|s| !s.is_done()) else {
                    return Err(ServiceError::SlotBlocked(slot));
                };
                let share = &self.shares[slot];
                let payload = action
                    .payload
                    .try_map_ids(|v| share.local(v))
                    .ok_or_else(|| CoreError::ActionMismatch("the action names values outside this user's share".into()))?;
                session.apply(Action { payload, ..action })?;
                last_event(session, task_id)
            }
            (TeamStage::Merging(m), Submission::SetMerge(mut answer)) => {
                if m.task(slot).is_none() {
                    return Err(ServiceError::SlotBlocked(slot));
                }
                match spec.timing {
                    Timing::Model => answer.elapsed = None,
                    Timing::Observed if answer.elapsed.is_none() => {
                        return Err(CoreError::InvalidParameter("observed timing needs elapsed seconds".into()).into())
                    }
                    Timing::Observed => {}
                }
                let seconds = m.apply(slot, &answer, &self.user_params[slot])?;
                Applied {
                    task_id,
                    charged_seconds: seconds,
                    assertions: answer.checks.len(),
                }
            }
            (_, other) => {
                return Err(CoreError::ActionMismatch(format!(
                    "a {} submission does not fit the current {:?} stage",
                    stage_name(&other),
                    self.stage()
                ))
                .into())
            }
        };
        self.busy[slot] += applied.charged_seconds;
        self.advance(spec)?;
        Ok(applied)
    }
}
