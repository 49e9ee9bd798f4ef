//! Deterministic synthetic users that drive cleaning sessions against gold.

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::costmodel::{GlobalParams, UserParams};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::metrics::precision_recall;
use crate::model::{GoldPartition, Partition, ValueId, ValueTable};
use crate::procedures::{
    Action, ActionPayload, FindDomChoice, PhaseSeconds, Session, SessionConfig, SplitButton, Task, TaskKind, Timing,
};
use crate::verification::is_gold_sequence;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticUser {
    pub params: UserParams,
    pub seed: u64,
}

/// Samples a user: ρ_m ∈ [0.8, 1.2], ρ_r ∈ [0.3, 0.5], γ ∈ [0.1, 0.4],
/// γ₀ ∈ [0.3, 1], η₁ ∈ [0.2, 0.4]; ρ_z = ρ_r, η₂ = η₁/(|STM|·100),
/// η₃ = 0.99·η₁·|STM|.
pub fn generate_user(seed: u64) -> SyntheticUser {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = UserParams::default();
    let stm = base.stm_capacity as f64;
    let rho_m = rng.gen_range(0.8..=1.2);
    let rho_r = rng.gen_range(0.3..=0.5);
    let gamma = rng.gen_range(0.1..=0.4);
    let gamma0 = rng.gen_range(0.3..=1.0);
    let eta1 = rng.gen_range(0.2..=0.4);
    SyntheticUser {
        params: UserParams {
            rho_f: 0.5,
            rho_s: 0.5,
            rho_m,
            rho_z: rho_r,
            rho_r,
            gamma,
            gamma0,
            eta1,
            eta2: eta1 / (stm * 100.0),
            eta3: 0.99 * eta1 * stm,
            ..base
        },
        seed,
    }
}

/// Independent user seeds derived from one master seed.
pub fn user_seeds(seed: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.next_u64()).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StmOutcome {
    /// The entity was held; the user links to the value that was held.
    Linked(ValueId),
    /// The entity was new; the oldest pair was evicted if memory was full.
    Inserted { evicted: Option<ValueId> },
}

/// Short-term memory of (entity, value) pairs, oldest first.
#[derive(Clone, Debug)]
pub struct Stm {
    capacity: usize,
    slots: VecDeque<(usize, ValueId)>,
}

impl Stm {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            slots: VecDeque::with_capacity(capacity),
        }
    }

    /// Memorizes `value`: replaces the pair of its entity if held, otherwise
    /// inserts it and evicts the oldest pair when full.
    pub fn step(&mut self, value: ValueId, entity: usize) -> StmOutcome {
        if let Some(pos) = self.slots.iter().position(|&(e, _)| e == entity) {
            let (_, held) = self.slots.remove(pos).expect("position is in range");
            self.slots.push_back((entity, value));
            return StmOutcome::Linked(held);
        }
        let evicted = if self.slots.len() == self.capacity {
            self.slots.pop_front().map(|(_, v)| v)
        } else {
            None
        };
        self.slots.push_back((entity, value));
        StmOutcome::Inserted { evicted }
    }

    pub fn slots(&self) -> impl Iterator<Item = (usize, ValueId)> + '_ {
        self.slots.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }
}

/// Answers every task correctly from the gold partition.
#[derive(Clone, Debug)]
pub struct TruthfulPolicy<'a> {
    gold: &'a GoldPartition,
    global: GlobalParams,
    stm_capacity: usize,
    rng: ChaCha8Rng,
    dominating: Option<usize>,
}

impl<'a> TruthfulPolicy<'a> {
    pub fn new(gold: &'a GoldPartition, global: GlobalParams, stm_capacity: usize, seed: u64) -> Self {
        Self {
            gold,
            global,
            stm_capacity,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0fd0),
            dominating: None,
        }
    }

    pub fn answer(&mut self, task: &Task) -> ActionPayload {
        match &task.kind {
            TaskKind::IsPureQuestion { cluster } => self.is_pure(cluster),
            TaskKind::FindDomAndMark { cluster } => self.find_dom(cluster),
            TaskKind::MarkValues { cluster } => self.mark(cluster),
            TaskKind::LocalMergeScan { list } => self.local_merge(list),
            TaskKind::GlobalMergeGrid { columns, rows } => self.global_merge(columns, rows),
        }
    }

    fn entity(&self, v: ValueId) -> usize {
        self.gold.entity_of(v)
    }

    fn is_pure(&self, cluster: &[ValueId]) -> ActionPayload {
        let first = self.entity(cluster[0]);
        match cluster.iter().position(|&v| self.entity(v) != first) {
            None => ActionPayload::IsPure {
                pure: true,
                scanned: Some(cluster.len()),
            },
            Some(i) => ActionPayload::IsPure {
                pure: false,
                scanned: Some(i),
            },
        }
    }

    /// Dominating entity and its count; ties broken at random.
    fn dominating(&mut self, cluster: &[ValueId]) -> (usize, usize) {
        let mut counts: HashMap<usize, usize> = HashMap::new();
        for &v in cluster {
            *counts.entry(self.entity(v)).or_default() += 1;
        }
        let best = counts.values().copied().max().unwrap_or(0);
        let mut tied: Vec<usize> = counts.iter().filter(|&(_, &c)| c == best).map(|(&e, _)| e).collect();
        tied.sort_unstable();
        let pick = tied[self.rng.gen_range(0..tied.len())];
        (pick, best)
    }

    fn find_dom(&mut self, cluster: &[ValueId]) -> ActionPayload {
        let (entity, count) = self.dominating(cluster);
        let alpha = count as f64 / cluster.len() as f64;
        let choice = if alpha < self.global.mixed_threshold {
            self.dominating = None;
            FindDomChoice::CleanMixed
        } else {
            self.dominating = Some(entity);
            FindDomChoice::MarkValues
        };
        ActionPayload::FindDom { choice }
    }

    fn mark(&mut self, cluster: &[ValueId]) -> ActionPayload {
        let entity = match self.dominating.take() {
            Some(e) => e,
            None => self.dominating(cluster).0,
        };
        let (dom, other): (Vec<ValueId>, Vec<ValueId>) = cluster.iter().partition(|&&v| self.entity(v) == entity);
        let alpha = dom.len() as f64 / cluster.len() as f64;
        if alpha >= self.global.majority_threshold {
            ActionPayload::Mark {
                marked: other,
                button: SplitButton::CreateCleanNew,
            }
        } else {
            ActionPayload::Mark {
                marked: dom,
                button: SplitButton::CreateNewCleanOld,
            }
        }
    }

    fn local_merge(&self, list: &[ValueId]) -> ActionPayload {
        let mut stm = Stm::new(self.stm_capacity);
        let mut links = Vec::new();
        for &v in list {
            if let StmOutcome::Linked(earlier) = stm.step(v, self.entity(v)) {
                links.push((v, earlier));
            }
        }
        ActionPayload::LocalMerge { links }
    }

    /// Each later value is checked under the first column of its entity.
    fn global_merge(&self, columns: &[ValueId], rows: &[ValueId]) -> ActionPayload {
        let mut checks = Vec::new();
        let shown: Vec<ValueId> = columns.iter().chain(rows).copied().collect();
        for (j, &target) in shown.iter().enumerate().skip(1) {
            let e = self.entity(target);
            if let Some(&col) = columns[..j.min(columns.len())].iter().find(|&&c| self.entity(c) == e) {
                checks.push((col, target));
            }
        }
        ActionPayload::GlobalMerge { checks }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationOptions {
    /// Build the verification set and check the gold-sequence property.
    pub track_verification: bool,
    /// Enforce the short-term memory window on local-merge links.
    pub strict_window: bool,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            track_verification: true,
            strict_window: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub total_seconds: f64,
    pub phase_seconds: PhaseSeconds,
    pub event_count: usize,
    pub precision: f64,
    pub recall: f64,
    /// `None` when verification tracking was off.
    pub gold_sequence: Option<bool>,
    pub partition: Partition,
}

impl SimulationReport {
    pub fn is_correct(&self) -> bool {
        self.precision == 1.0 && self.recall == 1.0 && self.gold_sequence != Some(false)
    }
}

pub(crate) fn check_gold(table: &ValueTable, gold: &GoldPartition) -> Result<()> {
    if gold.value_count() >= table.len() {
        return Ok(());
    }
    let missing = table.values()[gold.value_count()..].to_vec();
    Err(Error::GoldCoverage(missing))
}

/// Runs a full session with a truthful synthetic user.
pub fn simulate_session(
    table: &Arc<ValueTable>,
    input: &Partition,
    gold: &GoldPartition,
    user: &SyntheticUser,
    global: &GlobalParams,
    opts: SimulationOptions,
) -> Result<SimulationReport> {
    let (session, _) = drive(table, input, gold, user, global, opts)?;
    report(&session, gold)
}

/// Runs a session and also returns the actions the user submitted.
pub fn drive(
    table: &Arc<ValueTable>,
    input: &Partition,
    gold: &GoldPartition,
    user: &SyntheticUser,
    global: &GlobalParams,
    opts: SimulationOptions,
) -> Result<(Session, Vec<Action>)> {
    check_gold(table, gold)?;
    let config = SessionConfig {
        params: user.params,
        global: *global,
        timing: Timing::Model,
        strict_window: opts.strict_window,
        track_verification: opts.track_verification,
    };
    let mut session = Session::new(Arc::clone(table), input.clone(), config)?;
    let mut policy = TruthfulPolicy::new(gold, *global, user.params.stm_capacity, user.seed);
    let mut actions = Vec::new();
    while let Some(task) = session.pending_task() {
        let action = Action {
            task_id: task.id,
            payload: policy.answer(task),
            elapsed: None,
        };
        session.apply(action.clone())?;
        actions.push(action);
    }
    Ok((session, actions))
}

/// Summarizes a finished session against gold.
pub fn report(session: &Session, gold: &GoldPartition) -> Result<SimulationReport> {
    let outcome = session.finalize()?;
    let pr = precision_recall(&outcome.partition, gold)?;
    Ok(SimulationReport {
        total_seconds: outcome.total_seconds,
        phase_seconds: outcome.phase_seconds,
        event_count: outcome.event_count,
        precision: pr.precision,
        recall: pr.recall,
        gold_sequence: outcome.verification.as_ref().map(|vs| is_gold_sequence(vs, gold)),
        partition: outcome.partition,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub users: usize,
    pub mean_seconds: f64,
    pub min_seconds: f64,
    pub max_seconds: f64,
    pub all_correct: bool,
    pub per_user_seconds: Vec<f64>,
}

impl MonteCarloSummary {
    pub fn from_reports(reports: &[SimulationReport]) -> Self {
        let per_user_seconds: Vec<f64> = reports.iter().map(|r| r.total_seconds).collect();
        let n = per_user_seconds.len();
        Self {
            users: n,
            mean_seconds: if n == 0 { 0.0 } else { per_user_seconds.iter().sum::<f64>() / n as f64 },
            min_seconds: per_user_seconds.iter().copied().fold(f64::INFINITY, f64::min),
            max_seconds: per_user_seconds.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            all_correct: reports.iter().all(SimulationReport::is_correct),
            per_user_seconds,
        }
    }
}

/// Simulates `n_users` generated users on the same input; deterministic in `seed`.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo(
    table: &Arc<ValueTable>,
    input: &Partition,
    gold: &GoldPartition,
    n_users: usize,
    seed: u64,
    global: &GlobalParams,
    opts: SimulationOptions,
    exec: Execution,
) -> Result<MonteCarloSummary> {
    if n_users == 0 {
        return Err(Error::InvalidParameter("n_users must be >= 1".into()));
    }
    let seeds = user_seeds(seed, n_users);
    let reports = exec
        .map(&seeds, |&s| simulate_session(table, input, gold, &generate_user(s), global, opts))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(MonteCarloSummary::from_reports(&reports))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(values: &[&str], labels: &[usize]) -> (Arc<ValueTable>, GoldPartition) {
        (Arc::new(ValueTable::new(values.iter().copied())), GoldPartition::from_labels(labels))
    }

    #[test]
    fn users_are_deterministic_and_in_range() {
        assert_eq!(generate_user(7), generate_user(7));
        for s in 0..200 {
            let u = generate_user(s).params;
            assert!((0.8..=1.2).contains(&u.rho_m));
            assert!((0.3..=0.5).contains(&u.rho_r));
            assert_eq!(u.rho_z, u.rho_r);
            assert!((0.1..=0.4).contains(&u.gamma));
            assert!((0.3..=1.0).contains(&u.gamma0));
            assert!((0.2..=0.4).contains(&u.eta1));
            assert!((u.eta2 * 700.0 - u.eta1).abs() < 1e-12);
        }
    }

    #[test]
    fn stm_walkthrough() {
        let mut stm = Stm::new(3);
        // Big Blue(e0), GE(e1), Gamevice(e2): fill.
        assert_eq!(stm.step(0, 0), StmOutcome::Inserted { evicted: None });
        assert_eq!(stm.step(1, 1), StmOutcome::Inserted { evicted: None });
        assert_eq!(stm.step(2, 2), StmOutcome::Inserted { evicted: None });
        // Garmin evicts Big Blue.
        assert_eq!(stm.step(3, 3), StmOutcome::Inserted { evicted: Some(0) });
        // Ge links to GE and takes its place.
        assert_eq!(stm.step(4, 1), StmOutcome::Linked(1));
        assert!(stm.slots().any(|(e, v)| e == 1 && v == 4));
        // IBM evicts Gamevice, the oldest pair now.
        assert_eq!(stm.step(5, 0), StmOutcome::Inserted { evicted: Some(2) });
    }

    #[test]
    fn figure_four_end_to_end() {
        let values = [
            "Sony Corp", "Sony", "LG", "Lg", "Dell", "SONY Corp", "Sonny", "Apple", "LG Corp",
        ];
        let labels = [0, 0, 1, 1, 2, 0, 0, 3, 1];
        let (table, gold) = fixture(&values, &labels);
        let input = Partition::from_groups(9, vec![vec![0, 1, 2, 3], vec![4, 5, 6, 7, 8]]).unwrap();
        let r = simulate_session(
            &table,
            &input,
            &gold,
            &generate_user(1),
            &GlobalParams::default(),
            SimulationOptions::default(),
        )
        .unwrap();
        assert!(r.is_correct(), "{r:?}");
        assert_eq!(r.partition, *gold.partition());
        assert_eq!(r.gold_sequence, Some(true));
    }

    #[test]
    fn input_equal_to_gold() {
        let (table, gold) = fixture(&["a x", "a y", "b x", "c"], &[0, 0, 1, 2]);
        let r = simulate_session(
            &table,
            gold.partition(),
            &gold,
            &generate_user(3),
            &GlobalParams::default(),
            SimulationOptions::default(),
        )
        .unwrap();
        assert!(r.is_correct());
    }

    #[test]
    fn mixed_clusters_use_the_nested_merge() {
        // 11 values, every entity distinct: purity 1/11 < 0.1.
        let values: Vec<String> = (0..11).map(|i| format!("v{i:02}")).collect();
        let refs: Vec<&str> = values.iter().map(String::as_str).collect();
        let (table, gold) = fixture(&refs, &(0..11).collect::<Vec<_>>());
        let input = Partition::from_groups(11, vec![(0..11).collect()]).unwrap();
        let (session, actions) = drive(
            &table,
            &input,
            &gold,
            &generate_user(5),
            &GlobalParams::default(),
            SimulationOptions::default(),
        )
        .unwrap();
        assert!(actions
            .iter()
            .any(|a| a.payload == ActionPayload::FindDom { choice: FindDomChoice::CleanMixed }));
        assert!(report(&session, &gold).unwrap().is_correct());
    }

    #[test]
    fn missing_gold_is_reported() {
        let table = Arc::new(ValueTable::new(["a", "b", "c"]));
        let gold = GoldPartition::from_labels(&[0, 1]);
        let err = simulate_session(
            &table,
            &Partition::singletons(3),
            &gold,
            &generate_user(0),
            &GlobalParams::default(),
            SimulationOptions::default(),
        )
        .unwrap_err();
        assert_eq!(err, Error::GoldCoverage(vec!["c".into()]));
    }

    #[test]
    fn monte_carlo_is_deterministic() {
        let (table, gold) = fixture(&["ab", "abc", "b", "bc", "cde"], &[0, 0, 1, 1, 2]);
        let input = Partition::from_groups(5, vec![vec![0, 1, 2, 3], vec![4]]).unwrap();
        let g = GlobalParams::default();
        let opts = SimulationOptions::default();
        let a = monte_carlo(&table, &input, &gold, 8, 42, &g, opts, Execution::Parallel).unwrap();
        let b = monte_carlo(&table, &input, &gold, 8, 42, &g, opts, Execution::Sequential).unwrap();
        assert_eq!(a, b);
        assert!(a.all_correct);
        let one = monte_carlo(&table, &input, &gold, 1, 42, &g, opts, Execution::Sequential).unwrap();
        let single = simulate_session(&table, &input, &gold, &generate_user(user_seeds(42, 1)[0]), &g, opts).unwrap();
        assert_eq!(one.mean_seconds, single.total_seconds);
    }
}
