//! Several users cleaning one dataset together.
//!
//! Users calibrate separately and share one averaged model for the plan
//! search. The machine clusters are split into balanced shares, each user
//! cleans a share on their own, and the per-user results are reconciled in
//! barrier-synchronized merge rounds: the longest remaining list is chunked
//! over the users, each user compares their chunk three values at a time
//! against snapshots of the other lists, and matches are resolved once every
//! user has finished the round.

use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::calibration::calibrate_with_plan;
use crate::costmodel::{cost_cwinston, cost_multi_user_merge, cost_plan_sizes, PurityModel, UserParams};
use crate::error::{Error, Result};
use crate::metrics::precision_recall;
use crate::model::{GoldPartition, Partition, ValueId, ValueTable};
use crate::pipeline::Prepared;
use crate::planner::rank;
use crate::procedures::OpCounts;
use crate::similarity::Profiles;
use crate::simulator::{simulate_session, SyntheticUser};

/// Fieldwise mean of the users' parameters.
pub fn average_params(users: &[UserParams]) -> Result<UserParams> {
    let first = users
        .first()
        .ok_or_else(|| Error::InvalidParameter("at least one user is required".into()))?;
    let k = users.len() as f64;
    let avg = |f: fn(&UserParams) -> f64| users.iter().map(f).sum::<f64>() / k;
    Ok(UserParams {
        rho_f: avg(|u| u.rho_f),
        rho_s: avg(|u| u.rho_s),
        rho_m: avg(|u| u.rho_m),
        rho_z: avg(|u| u.rho_z),
        rho_r: avg(|u| u.rho_r),
        gamma: avg(|u| u.gamma),
        gamma0: avg(|u| u.gamma0),
        eta1: avg(|u| u.eta1),
        eta2: avg(|u| u.eta2),
        eta3: avg(|u| u.eta3),
        mu: avg(|u| u.mu),
        ..*first
    })
}

/// Mean of the purity models in (a, b) space.
pub fn average_purity(models: &[PurityModel]) -> Result<PurityModel> {
    if models.is_empty() {
        return Err(Error::InvalidParameter("at least one purity model is required".into()));
    }
    let k = models.len() as f64;
    Ok(PurityModel {
        a: models.iter().map(|m| m.a).sum::<f64>() / k,
        b: models.iter().map(|m| m.b).sum::<f64>() / k,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    /// Cluster indices (into the partition) per user.
    pub shares: Vec<Vec<usize>>,
    /// Values per user.
    pub loads: Vec<usize>,
}

/// Largest clusters first, each to the least loaded user (lowest index on ties).
pub fn assign_clusters(partition: &Partition, k: usize) -> Result<Assignment> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    let mut order: Vec<usize> = (0..partition.len()).collect();
    let clusters = partition.clusters();
    order.sort_by(|&a, &b| clusters[b].len().cmp(&clusters[a].len()).then(a.cmp(&b)));
    let mut shares = vec![Vec::new(); k];
    let mut loads = vec![0usize; k];
    for c in order {
        let u = (0..k).min_by_key(|&u| (loads[u], u)).expect("k >= 1");
        shares[u].push(c);
        loads[u] += clusters[c].len();
    }
    Ok(Assignment { shares, loads })
}

/// One comparison: a group of column values against one other list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetMergeTask {
    /// Unique within the run; actions echo it.
    pub id: u64,
    pub round: usize,
    pub columns: Vec<ValueId>,
    /// Representatives of the other list, most similar to the columns first.
    pub rows: Vec<ValueId>,
    /// First task of its column group; the columns are memorized here.
    pub memorize: bool,
}

/// A user's answer to a [`SetMergeTask`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetMergeAnswer {
    pub task_id: u64,
    /// (column value, matching row) pairs.
    pub checks: Vec<(ValueId, ValueId)>,
    /// Rows read before stopping; all rows when absent.
    #[serde(default)]
    pub scanned: Option<usize>,
    #[serde(default)]
    pub elapsed: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeRoundReport {
    pub round: usize,
    pub longest_list: usize,
    pub chunk_sizes: Vec<usize>,
    pub user_seconds: Vec<f64>,
    /// Barrier time: the slowest user.
    pub seconds: f64,
    pub matches: usize,
}

/// State of the multi-user merge rounds.
#[derive(Clone, Debug)]
pub struct MultiUserMerge {
    k: usize,
    profiles: Profiles,
    next_id: u64,
    clusters: HashMap<ValueId, Vec<ValueId>>,
    /// Alive representatives per list.
    lists: Vec<Vec<ValueId>>,
    queues: Vec<VecDeque<SetMergeTask>>,
    matches: Vec<(ValueId, ValueId)>,
    star: Option<usize>,
    chunk_sizes: Vec<usize>,
    round_seconds: Vec<f64>,
    busy: Vec<f64>,
    rounds: Vec<MergeRoundReport>,
    output: Vec<Vec<ValueId>>,
    done: bool,
}

impl MultiUserMerge {
    /// `lists[i]` holds the clean clusters produced by user `i`.
    pub fn new(table: &ValueTable, profiles: Profiles, lists: Vec<Vec<Vec<ValueId>>>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("k must be >= 1".into()));
        }
        let mut clusters = HashMap::new();
        let mut reps = Vec::with_capacity(lists.len());
        for list in lists {
            let mut l = Vec::with_capacity(list.len());
            for members in list {
                let rep = table.longest(&members).expect("clusters are nonempty");
                l.push(rep);
                clusters.insert(rep, members);
            }
            table.sort_alphabetically(&mut l);
            reps.push(l);
        }
        let mut m = Self {
            k,
            profiles,
            next_id: 0,
            clusters,
            lists: reps,
            queues: vec![VecDeque::new(); k],
            matches: Vec::new(),
            star: None,
            chunk_sizes: Vec::new(),
            round_seconds: vec![0.0; k],
            busy: vec![0.0; k],
            rounds: Vec::new(),
            output: Vec::new(),
            done: false,
        };
        m.start_round();
        Ok(m)
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn round(&self) -> usize {
        self.rounds.len()
    }

    /// The user's next comparison; `None` while waiting at the barrier or when done.
    pub fn task(&self, user: usize) -> Option<&SetMergeTask> {
        self.queues.get(user).and_then(VecDeque::front)
    }

    pub fn rounds(&self) -> &[MergeRoundReport] {
        &self.rounds
    }

    pub fn busy_seconds(&self) -> &[f64] {
        &self.busy
    }

    pub fn total_seconds(&self) -> f64 {
        self.rounds.iter().map(|r| r.seconds).sum()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    fn start_round(&mut self) {
        let profiles = &self.profiles;
        self.lists.retain(|l| !l.is_empty());
        if self.lists.len() <= 1 {
            for rep in self.lists.drain(..).flatten() {
                self.output.push(self.clusters.remove(&rep).expect("alive representative"));
            }
            self.done = true;
            return;
        }
        let star = (0..self.lists.len())
            .max_by(|&a, &b| self.lists[a].len().cmp(&self.lists[b].len()).then(b.cmp(&a)))
            .expect("nonempty");
        let d_star = &self.lists[star];
        let round = self.rounds.len();
        let base = d_star.len() / self.k;
        let extra = d_star.len() % self.k;
        let mut start = 0;
        self.chunk_sizes.clear();
        for u in 0..self.k {
            let len = base + usize::from(u < extra);
            let chunk = &d_star[start..start + len];
            start += len;
            self.chunk_sizes.push(len);
            for group in chunk.chunks(3) {
                for (j, other) in self.lists.iter().enumerate() {
                    if j == star {
                        continue;
                    }
                    let mut rows = other.clone();
                    rows.sort_by(|&a, &b| {
                        profiles
                            .max_similarity(b, group)
                            .total_cmp(&profiles.max_similarity(a, group))
                            .then(a.cmp(&b))
                    });
                    let memorize = self.queues[u].back().is_none_or(|t: &SetMergeTask| t.columns != group);
                    self.queues[u].push_back(SetMergeTask {
                        id: self.next_id,
                        round,
                        columns: group.to_vec(),
                        rows,
                        memorize,
                    });
                    self.next_id += 1;
                }
            }
        }
        self.star = Some(star);
        self.round_seconds = vec![0.0; self.k];
        self.matches.clear();
    }

    /// Applies one user's answer to their pending comparison.
    ///
    /// `scanned` is how many rows the user read before stopping; all rows when
    /// `None`. The charge is `elapsed` when given, else the model time under
    /// `params`. Returns the seconds charged.
    pub fn apply(&mut self, user: usize, answer: &SetMergeAnswer, params: &UserParams) -> Result<f64> {
        if user >= self.k {
            return Err(Error::InvalidParameter(format!("no user {user}")));
        }
        let task = match self.task(user) {
            Some(t) => t,
            None if self.done => return Err(Error::SessionDone),
            None => return Err(Error::InvalidParameter(format!("user {user} is waiting for the round to end"))),
        };
        if answer.task_id != task.id {
            return Err(Error::StaleTask {
                expected: task.id,
                got: answer.task_id,
            });
        }
        let checks = &answer.checks;
        let mut seen = HashSet::new();
        for &(b, v) in checks {
            if !task.columns.contains(&b) || !task.rows.contains(&v) {
                return Err(Error::ActionMismatch(format!("check ({b}, {v}) is not in the grid")));
            }
            if !seen.insert(v) {
                return Err(Error::BoxConflict(v));
            }
        }
        let scanned = answer.scanned.unwrap_or(task.rows.len()).min(task.rows.len());
        let mut ops = OpCounts::clicks(1 + checks.len() as u64);
        ops.recall = scanned as u64;
        if task.memorize {
            ops.memorize = task.columns.len() as u64;
        }
        let seconds = match answer.elapsed {
            Some(t) if t.is_finite() && t > 0.0 && t < crate::procedures::MAX_OBSERVED_SECONDS => t,
            Some(t) => return Err(Error::InvalidParameter(format!("elapsed {t} outside (0, 600) seconds"))),
            None => ops.seconds(params),
        };
        self.queues[user].pop_front();
        self.matches.extend_from_slice(checks);
        self.round_seconds[user] += seconds;
        self.busy[user] += seconds;
        if self.queues.iter().all(VecDeque::is_empty) {
            self.resolve()?;
            self.start_round();
        }
        Ok(seconds)
    }

    fn resolve(&mut self) -> Result<()> {
        let star = self.star.take().expect("a round is running");
        let mut claimed: HashMap<ValueId, ValueId> = HashMap::new();
        for &(b, v) in &self.matches {
            if let Some(&other) = claimed.get(&v) {
                if other != b {
                    return Err(Error::ConflictingEvidence(b, v));
                }
                continue;
            }
            claimed.insert(v, b);
            let moved = self.clusters.remove(&v).expect("alive representative");
            self.clusters.get_mut(&b).expect("column representative").extend(moved);
        }
        for (j, list) in self.lists.iter_mut().enumerate() {
            if j != star {
                list.retain(|v| !claimed.contains_key(v));
            }
        }
        for rep in std::mem::take(&mut self.lists[star]) {
            self.output.push(self.clusters.remove(&rep).expect("alive representative"));
        }
        self.rounds.push(MergeRoundReport {
            round: self.rounds.len(),
            longest_list: self.chunk_sizes.iter().sum(),
            chunk_sizes: self.chunk_sizes.clone(),
            user_seconds: self.round_seconds.clone(),
            seconds: self.round_seconds.iter().copied().fold(0.0, f64::max),
            matches: claimed.len(),
        });
        Ok(())
    }

    pub fn into_clusters(self) -> Result<Vec<Vec<ValueId>>> {
        if !self.done {
            return Err(Error::IncompleteSession);
        }
        Ok(self.output)
    }
}

/// A correct user's answer to a comparison: check every row of a column's
/// entity, stop reading once every column is matched.
pub fn truthful_set_merge(task: &SetMergeTask, gold: &GoldPartition) -> SetMergeAnswer {
    let (checks, scanned) = truthful_checks(task, gold);
    SetMergeAnswer {
        task_id: task.id,
        checks,
        scanned: Some(scanned),
        elapsed: None,
    }
}

fn truthful_checks(task: &SetMergeTask, gold: &GoldPartition) -> (Vec<(ValueId, ValueId)>, usize) {
    let mut checks = Vec::new();
    let mut matched = HashSet::new();
    for (i, &v) in task.rows.iter().enumerate() {
        let e = gold.entity_of(v);
        if let Some(&b) = task.columns.iter().find(|&&b| gold.entity_of(b) == e) {
            checks.push((b, v));
            matched.insert(b);
            if matched.len() == task.columns.len() {
                return (checks, i + 1);
            }
        }
    }
    (checks, task.rows.len())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CWinstonReport {
    pub k: usize,
    pub cap: usize,
    /// Slowest user's calibration.
    pub calibration_seconds: f64,
    /// Slowest user's Split+Merge on their share.
    pub split_merge_seconds: f64,
    pub multi_user_merge_seconds: f64,
    /// Sum of the stage maxima.
    pub wall_seconds: f64,
    pub per_user_busy_seconds: Vec<f64>,
    pub rounds: Vec<MergeRoundReport>,
    /// Model estimate of the cleaning stages (calibration excluded).
    pub estimated_seconds: f64,
    pub precision: f64,
    pub recall: f64,
    pub partition: Partition,
}

/// The part of a dataset one user cleans: some whole clusters, renumbered.
#[derive(Clone, Debug)]
pub struct Share {
    pub table: Arc<ValueTable>,
    pub input: Partition,
    /// Parent id of each local id, increasing.
    pub ids: Vec<ValueId>,
}

impl Share {
    pub fn new(table: &ValueTable, partition: &Partition, clusters: &[usize]) -> Self {
        let mut ids: Vec<ValueId> = clusters
            .iter()
            .flat_map(|&c| partition.clusters()[c].members.iter().copied())
            .collect();
        ids.sort_unstable();
        let local: HashMap<ValueId, usize> = ids.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let sub = ValueTable::new(ids.iter().map(|&v| table.get(v)));
        let groups = clusters
            .iter()
            .map(|&c| partition.clusters()[c].members.iter().map(|v| local[v]).collect::<Vec<_>>());
        let input = Partition::from_groups(ids.len(), groups).expect("shares are disjoint clusters");
        Self {
            table: Arc::new(sub),
            input,
            ids,
        }
    }

    /// Local id of a parent id, if it is in the share.
    pub fn local(&self, parent: ValueId) -> Option<ValueId> {
        self.ids.binary_search(&parent).ok()
    }

    pub fn gold(&self, gold: &GoldPartition) -> GoldPartition {
        let labels: Vec<usize> = self.ids.iter().map(|&v| gold.entity_of(v)).collect();
        GoldPartition::from_labels(&labels)
    }

    /// Clusters of a local partition in parent ids.
    pub fn lift(&self, partition: &Partition) -> Vec<Vec<ValueId>> {
        partition
            .clusters()
            .iter()
            .map(|c| c.members.iter().map(|&v| self.ids[v]).collect())
            .collect()
    }
}

/// Simulates the whole multi-user pipeline with `users.len()` synthetic users.
pub fn run_cwinston(prepared: &Prepared, gold: &GoldPartition, users: &[SyntheticUser]) -> Result<CWinstonReport> {
    let k = users.len();
    if k == 0 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    let exec = prepared.config.exec;
    let table = &prepared.table;
    let g = &prepared.config.global;
    if table.is_empty() {
        return Ok(CWinstonReport {
            k,
            cap: 0,
            calibration_seconds: 0.0,
            split_merge_seconds: 0.0,
            multi_user_merge_seconds: 0.0,
            wall_seconds: 0.0,
            per_user_busy_seconds: vec![0.0; k],
            rounds: Vec::new(),
            estimated_seconds: 0.0,
            precision: 1.0,
            recall: 1.0,
            partition: Partition::singletons(0),
        });
    }

    let calibrations = exec
        .map(users, |u| calibrate_with_plan(prepared.calibration.clone(), gold, &u.params))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let params = average_params(&calibrations.iter().map(|c| c.user_params).collect::<Vec<_>>())?;
    let purity = average_purity(&calibrations.iter().map(|c| c.purity_model).collect::<Vec<_>>())?;
    let report = rank(&prepared.joint, &purity, &params, g, exec)?;
    let cap = report.selected.unwrap_or(1);
    let partition = prepared.partition(cap)?;
    let mut busy: Vec<f64> = calibrations.iter().map(|c| c.total_seconds).collect();
    let calibration_seconds = busy.iter().copied().fold(0.0, f64::max);

    let opts = prepared.config.simulation;
    let assignment = assign_clusters(partition, k)?;
    let per_user: Vec<usize> = (0..k).collect();
    let sessions = exec
        .map(&per_user, |&i| -> Result<(f64, Vec<Vec<ValueId>>)> {
            if k == 1 {
                let r = simulate_session(table, partition, gold, &users[i], g, opts)?;
                let out = r.partition.clusters().iter().map(|c| c.members.clone()).collect();
                return Ok((r.total_seconds, out));
            }
            let share = Share::new(table, partition, &assignment.shares[i]);
            if share.ids.is_empty() {
                return Ok((0.0, Vec::new()));
            }
            let r = simulate_session(&share.table, &share.input, &share.gold(gold), &users[i], g, opts)?;
            Ok((r.total_seconds, share.lift(&r.partition)))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    for (b, (s, _)) in busy.iter_mut().zip(&sessions) {
        *b += s;
    }
    let split_merge_seconds = sessions.iter().map(|s| s.0).fold(0.0, f64::max);

    let share_estimates: Vec<f64> = (0..k)
        .map(|i| {
            let sizes: Vec<usize> = assignment.shares[i].iter().map(|&c| partition.clusters()[c].len()).collect();
            cost_plan_sizes(&sizes, purity.purity(cap), cap, &calibrations[i].user_params, g).map(|e| e.estimated_seconds)
        })
        .collect::<Result<_>>()?;
    let list_sizes: Vec<f64> = sessions.iter().map(|s| s.1.len() as f64).collect();
    let user_params: Vec<UserParams> = calibrations.iter().map(|c| c.user_params).collect();
    let estimated_seconds = cost_cwinston(&share_estimates, cost_multi_user_merge(&list_sizes, &user_params, g, params.mu));

    let (clusters, rounds, merge_seconds) = if k == 1 {
        (sessions.into_iter().flat_map(|s| s.1).collect::<Vec<_>>(), Vec::new(), 0.0)
    } else {
        let profiles = Profiles::build(table, &prepared.config.similarity);
        let lists = sessions.into_iter().map(|s| s.1).collect();
        let mut mum = MultiUserMerge::new(table, profiles, lists, k)?;
        while !mum.is_done() {
            for (u, user) in users.iter().enumerate() {
                while let Some(task) = mum.task(u) {
                    let round = task.round;
                    let answer = truthful_set_merge(task, gold);
                    mum.apply(u, &answer, &user.params)?;
                    if mum.round() != round {
                        break;
                    }
                }
            }
        }
        for (b, s) in busy.iter_mut().zip(mum.busy_seconds()) {
            *b += s;
        }
        let rounds = mum.rounds().to_vec();
        let seconds = mum.total_seconds();
        (mum.into_clusters()?, rounds, seconds)
    };
    let partition = Partition::from_groups(table.len(), clusters)?;
    let pr = precision_recall(&partition, gold)?;
    Ok(CWinstonReport {
        k,
        cap,
        calibration_seconds,
        split_merge_seconds,
        multi_user_merge_seconds: merge_seconds,
        wall_seconds: calibration_seconds + split_merge_seconds + merge_seconds,
        per_user_busy_seconds: busy,
        rounds,
        estimated_seconds,
        precision: pr.precision,
        recall: pr.recall,
        partition,
    })
}
