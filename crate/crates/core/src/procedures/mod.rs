//! The human part as an event-sourced state machine.
//!
//! A [`Session`] hands out one [`Task`] at a time and consumes the matching
//! [`Action`]. Split runs cluster by cluster (recursing on the remainder of
//! each split); its pure outputs then go through one local merge scan and a
//! series of global merge grids. Every action is charged in seconds and
//! logged as an [`Event`]; replaying the actions rebuilds the session.

mod events;
mod merge;
mod task;

use std::collections::{HashSet, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::costmodel::{GlobalParams, UserParams};
use crate::error::{Error, Result};
use crate::model::{Partition, ValueId, ValueTable};
use crate::verification::VerificationSet;

pub use events::{Event, OpCounts, Phase};
pub use task::{Action, ActionPayload, FindDomChoice, SplitButton, Task, TaskId, TaskKind};

use merge::{AssertionSink, MergeRun};

/// Upper bound accepted for a client-reported task time.
pub const MAX_OBSERVED_SECONDS: f64 = 600.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Timing {
    /// Charge the cost model's time for the operations performed.
    #[default]
    Model,
    /// Charge the elapsed time the client reports.
    Observed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub params: UserParams,
    pub global: GlobalParams,
    pub timing: Timing,
    /// Reject local-merge links a memory-bounded user could not have made.
    pub strict_window: bool,
    /// Keep the full verification set (quadratic in the worst case).
    pub track_verification: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            params: UserParams::default(),
            global: GlobalParams::default(),
            timing: Timing::Model,
            strict_window: false,
            track_verification: true,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseSeconds {
    pub split: f64,
    pub local_merge: f64,
    pub global_merge: f64,
}

impl PhaseSeconds {
    pub fn total(&self) -> f64 {
        self.split + self.local_merge + self.global_merge
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum SplitStage {
    IsPure,
    FindDom,
    Mark,
}

#[derive(Clone, Debug)]
struct SplitWork {
    /// Alphabetical, as displayed.
    members: Vec<ValueId>,
    stage: SplitStage,
}

/// The finished result of a session.
#[derive(Clone, Debug, PartialEq)]
pub struct SessionOutcome {
    pub partition: Partition,
    pub total_seconds: f64,
    pub phase_seconds: PhaseSeconds,
    pub verification: Option<VerificationSet>,
    pub event_count: usize,
}

#[derive(Clone, Debug)]
pub struct Session {
    table: Arc<ValueTable>,
    input: Partition,
    config: SessionConfig,
    phase: Phase,
    queue: VecDeque<Vec<ValueId>>,
    current: Option<SplitWork>,
    nested: Option<MergeRun>,
    pure: Vec<Vec<ValueId>>,
    merge: Option<MergeRun>,
    verification: Option<VerificationSet>,
    events: Vec<Event>,
    pending: Option<Task>,
    next_task: TaskId,
    seconds: PhaseSeconds,
    result: Option<Partition>,
}

impl Session {
    pub fn new(table: Arc<ValueTable>, input: Partition, config: SessionConfig) -> Result<Self> {
        if input.value_count() != table.len() {
            return Err(Error::ValueTableMismatch(format!(
                "partition covers {} values, table has {}",
                input.value_count(),
                table.len()
            )));
        }
        config.params.validate()?;
        config.global.validate()?;
        let queue = input.clusters().iter().map(|c| c.members.clone()).collect();
        let mut session = Self {
            table,
            input,
            config,
            phase: Phase::Splitting,
            queue,
            current: None,
            nested: None,
            pure: Vec::new(),
            merge: None,
            verification: config.track_verification.then(VerificationSet::new),
            events: Vec::new(),
            pending: None,
            next_task: 0,
            seconds: PhaseSeconds::default(),
            result: None,
        };
        session.advance();
        Ok(session)
    }

    /// Rebuilds a session by applying `actions` in order.
    pub fn replay<'a, I>(table: Arc<ValueTable>, input: Partition, config: SessionConfig, actions: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Action>,
    {
        let mut s = Self::new(table, input, config)?;
        for a in actions {
            s.apply(a.clone())?;
        }
        Ok(s)
    }

    pub fn table(&self) -> &Arc<ValueTable> {
        &self.table
    }

    pub fn input(&self) -> &Partition {
        &self.input
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn is_done(&self) -> bool {
        self.phase == Phase::Done
    }

    pub fn pending_task(&self) -> Option<&Task> {
        self.pending.as_ref()
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn total_seconds(&self) -> f64 {
        self.seconds.total()
    }

    pub fn phase_seconds(&self) -> PhaseSeconds {
        self.seconds
    }

    pub fn verification(&self) -> Option<&VerificationSet> {
        self.verification.as_ref()
    }

    /// Clusters still queued for splitting, the one in progress included.
    pub fn clusters_remaining(&self) -> usize {
        self.queue.len() + usize::from(self.current.is_some() || self.nested.is_some())
    }

    /// Applies one action to the pending task and returns the next task, if any.
    pub fn apply(&mut self, action: Action) -> Result<Option<&Task>> {
        let task = self.pending.clone().ok_or(Error::SessionDone)?;
        if action.task_id != task.id {
            return Err(Error::StaleTask {
                expected: task.id,
                got: action.task_id,
            });
        }
        if self.config.timing == Timing::Observed {
            match action.elapsed {
                Some(t) if t > 0.0 && t < MAX_OBSERVED_SECONDS => {}
                other => {
                    return Err(Error::InvalidParameter(format!(
                        "observed timing needs elapsed seconds in (0, {MAX_OBSERVED_SECONDS}), got {other:?}"
                    )))
                }
            }
        }
        let track = self.verification.is_some();
        let mut sink = AssertionSink::new(track);
        let phase = self.phase;
        let ops = match (&task.kind, &action.payload) {
            (TaskKind::IsPureQuestion { .. }, ActionPayload::IsPure { pure, scanned }) => {
                self.apply_is_pure(*pure, *scanned, &mut sink)?
            }
            (TaskKind::FindDomAndMark { .. }, ActionPayload::FindDom { choice }) => self.apply_find_dom(*choice)?,
            (TaskKind::MarkValues { .. }, ActionPayload::Mark { marked, button }) => {
                self.apply_mark(marked, *button, &mut sink)?
            }
            (TaskKind::LocalMergeScan { .. }, ActionPayload::LocalMerge { links }) => {
                let window = self.config.strict_window.then_some(self.config.params.stm_capacity);
                self.apply_merge(task.nested, &mut sink, |run, sink, table| {
                    run.apply_local(links, window, sink, table)
                })?
            }
            (TaskKind::GlobalMergeGrid { .. }, ActionPayload::GlobalMerge { checks }) => {
                let columns = self.config.params.columns;
                self.apply_merge(task.nested, &mut sink, |run, sink, table| {
                    run.apply_global(checks, columns, sink, table)
                })?
            }
            (kind, payload) => {
                return Err(Error::ActionMismatch(format!(
                    "task {} cannot take a {} action",
                    kind.name(),
                    payload.name()
                )))
            }
        };

        let seconds = match self.config.timing {
            Timing::Model => ops.seconds(&self.config.params),
            Timing::Observed => action.elapsed.unwrap_or_default(),
        };
        match (&task.kind, task.nested) {
            (_, true) | (TaskKind::IsPureQuestion { .. } | TaskKind::FindDomAndMark { .. } | TaskKind::MarkValues { .. }, _) => {
                self.seconds.split += seconds
            }
            (TaskKind::LocalMergeScan { .. }, false) => self.seconds.local_merge += seconds,
            (TaskKind::GlobalMergeGrid { .. }, false) => self.seconds.global_merge += seconds,
        }
        if let Some(vs) = self.verification.as_mut() {
            vs.extend(sink.list).expect("batch checked before commit");
        }
        self.events.push(Event {
            seq: self.events.len() as u64,
            task_id: task.id,
            task: task.kind.name().to_string(),
            phase,
            action: action.payload,
            ops,
            seconds,
            assertions: sink.count,
        });
        self.advance();
        Ok(self.pending.as_ref())
    }

    fn check(&self, sink: &AssertionSink) -> Result<()> {
        match &self.verification {
            Some(vs) => sink.check(vs),
            None => Ok(()),
        }
    }

    fn current_mut(&mut self) -> &mut SplitWork {
        self.current.as_mut().expect("a split task is pending")
    }

    fn apply_is_pure(&mut self, pure: bool, scanned: Option<usize>, sink: &mut AssertionSink) -> Result<OpCounts> {
        let members = self.current_mut().members.clone();
        let psi = members.len();
        let scanned = scanned.unwrap_or(psi);
        if scanned > psi {
            return Err(Error::ActionMismatch(format!("scanned {scanned} of {psi} values")));
        }
        if pure {
            sink.clique(&members);
            self.check(sink)?;
            self.pure.push(members);
            self.current = None;
        } else {
            self.current_mut().stage = SplitStage::FindDom;
        }
        let mut ops = OpCounts::clicks(1);
        ops.is_pure = Some(scanned as u64);
        Ok(ops)
    }

    fn apply_find_dom(&mut self, choice: FindDomChoice) -> Result<OpCounts> {
        let work = self.current_mut();
        let psi = work.members.len();
        match choice {
            FindDomChoice::MarkValues => work.stage = SplitStage::Mark,
            FindDomChoice::CleanMixed => {
                let members = std::mem::take(&mut work.members);
                self.current = None;
                let items = members.into_iter().map(|v| vec![v]).collect();
                self.nested = Some(MergeRun::new(items, &self.table));
            }
        }
        let mut ops = OpCounts::clicks(1);
        ops.find_dom = Some(psi as u64);
        Ok(ops)
    }

    fn apply_mark(&mut self, marked: &[ValueId], button: SplitButton, sink: &mut AssertionSink) -> Result<OpCounts> {
        let members = self.current_mut().members.clone();
        let in_cluster: HashSet<ValueId> = members.iter().copied().collect();
        let mut is_marked = HashSet::with_capacity(marked.len());
        for &v in marked {
            if !in_cluster.contains(&v) {
                return Err(Error::ActionMismatch(format!("value {v} is not in the cluster")));
            }
            if !is_marked.insert(v) {
                return Err(Error::ActionMismatch(format!("value {v} marked twice")));
            }
        }
        if is_marked.is_empty() || is_marked.len() == members.len() {
            return Err(Error::ActionMismatch(
                "a split must mark at least one value and leave at least one".into(),
            ));
        }
        let (chosen, rest): (Vec<ValueId>, Vec<ValueId>) = members.iter().partition(|v| is_marked.contains(v));
        let (clean, remainder) = match button {
            SplitButton::CreateCleanNew => (rest, chosen),
            SplitButton::CreateNewCleanOld => (chosen, rest),
        };
        sink.clique(&clean);
        sink.cross(&clean, &remainder);
        self.check(sink)?;
        self.pure.push(clean);
        if remainder.len() == 1 {
            self.pure.push(remainder);
            self.current = None;
        } else {
            self.current = Some(SplitWork {
                members: remainder,
                stage: SplitStage::IsPure,
            });
        }
        let psi = members.len() as u64;
        let mut ops = OpCounts::clicks(1);
        ops.focus += psi;
        ops.matched = psi;
        ops.select += marked.len() as u64;
        Ok(ops)
    }

    fn apply_merge<F>(&mut self, nested: bool, sink: &mut AssertionSink, f: F) -> Result<OpCounts>
    where
        F: FnOnce(&mut MergeRun, &mut AssertionSink, &ValueTable) -> Result<OpCounts>,
    {
        let table = Arc::clone(&self.table);
        let tracking = self.verification.is_some();
        let slot = if nested { &mut self.nested } else { &mut self.merge };
        let run = slot.as_mut().expect("a merge task is pending");
        if !tracking {
            // Validation failures leave the run untouched.
            return f(run, sink, &table);
        }
        let mut trial = run.clone();
        let ops = f(&mut trial, sink, &table)?;
        self.check(sink)?;
        let slot = if nested { &mut self.nested } else { &mut self.merge };
        *slot = Some(trial);
        Ok(ops)
    }

    fn issue(&mut self, kind: TaskKind, nested: bool) {
        let id = self.next_task;
        self.next_task += 1;
        self.pending = Some(Task { id, kind, nested });
    }

    /// Moves to the next task, or to completion.
    fn advance(&mut self) {
        let columns = self.config.params.columns;
        loop {
            if let Some(run) = self.nested.as_mut() {
                if run.is_done() {
                    let out = run.take_output();
                    self.pure.extend(out);
                    self.nested = None;
                    continue;
                }
                let kind = run.task(columns).expect("unfinished run has a task");
                self.issue(kind, true);
                return;
            }
            if let Some(work) = &self.current {
                let cluster = work.members.clone();
                let kind = match work.stage {
                    SplitStage::IsPure => TaskKind::IsPureQuestion { cluster },
                    SplitStage::FindDom => TaskKind::FindDomAndMark { cluster },
                    SplitStage::Mark => TaskKind::MarkValues { cluster },
                };
                self.issue(kind, false);
                return;
            }
            if self.phase == Phase::Splitting {
                match self.queue.pop_front() {
                    Some(members) if members.len() == 1 => self.pure.push(members),
                    Some(mut members) => {
                        self.table.sort_alphabetically(&mut members);
                        self.current = Some(SplitWork {
                            members,
                            stage: SplitStage::IsPure,
                        });
                    }
                    None => {
                        let pure = std::mem::take(&mut self.pure);
                        self.merge = Some(MergeRun::new(pure, &self.table));
                        self.phase = Phase::LocalMerge;
                    }
                }
                continue;
            }
            let run = self.merge.as_mut().expect("merge stage has a run");
            if run.is_done() {
                let groups = run.take_output();
                let n = self.table.len();
                self.result = Some(Partition::from_groups(n, groups).expect("merging preserves a partition"));
                self.phase = Phase::Done;
                self.pending = None;
                return;
            }
            self.phase = if run.in_global() { Phase::GlobalMerge } else { Phase::LocalMerge };
            let kind = run.task(columns).expect("unfinished run has a task");
            self.issue(kind, false);
            return;
        }
    }

    pub fn result(&self) -> Option<&Partition> {
        self.result.as_ref()
    }

    pub fn finalize(&self) -> Result<SessionOutcome> {
        let partition = self.result.clone().ok_or(Error::IncompleteSession)?;
        Ok(SessionOutcome {
            partition,
            total_seconds: self.seconds.total(),
            phase_seconds: self.seconds,
            verification: self.verification.clone(),
            event_count: self.events.len(),
        })
    }
}
