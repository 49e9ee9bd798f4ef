//! Local and global merging over a list of pure clusters.

use std::collections::{HashMap, HashSet};

use crate::dsu::UnionFind;
use crate::error::{Error, Result};
use crate::model::{ValueId, ValueTable};
use crate::verification::{PairAssertion, Polarity, VerificationSet};

use super::events::OpCounts;
use super::task::TaskKind;

/// Assertions implied by one action. The count is always exact; the
/// assertions themselves are materialized only when tracking is on.
#[derive(Debug, Default)]
pub(crate) struct AssertionSink {
    track: bool,
    pub(crate) list: Vec<PairAssertion>,
    pub(crate) count: usize,
}

impl AssertionSink {
    pub(crate) fn new(track: bool) -> Self {
        Self {
            track,
            ..Default::default()
        }
    }

    pub(crate) fn pair(&mut self, a: ValueId, b: ValueId, polarity: Polarity) {
        if let Some(p) = PairAssertion::new(a, b, polarity) {
            self.count += 1;
            if self.track {
                self.list.push(p);
            }
        }
    }

    pub(crate) fn clique(&mut self, members: &[ValueId]) {
        let k = members.len();
        if self.track {
            for (i, &a) in members.iter().enumerate() {
                for &b in &members[i + 1..] {
                    self.list.push(PairAssertion::matching(a, b));
                }
            }
        }
        self.count += k * k.saturating_sub(1) / 2;
    }

    pub(crate) fn cross(&mut self, left: &[ValueId], right: &[ValueId]) {
        if self.track {
            for &a in left {
                for &b in right {
                    self.list.push(PairAssertion::non_matching(a, b));
                }
            }
        }
        self.count += left.len() * right.len();
    }

    /// Rejects the batch if any pair contradicts `vs` or another pair in the batch.
    pub(crate) fn check(&self, vs: &VerificationSet) -> Result<()> {
        let mut seen: HashMap<(ValueId, ValueId), Polarity> = HashMap::new();
        for p in &self.list {
            if let Some(existing) = vs.get(p.a, p.b) {
                if existing != p.polarity {
                    return Err(Error::ConflictingEvidence(p.a, p.b));
                }
            }
            if *seen.entry((p.a, p.b)).or_insert(p.polarity) != p.polarity {
                return Err(Error::ConflictingEvidence(p.a, p.b));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Stage {
    Local,
    Global,
    Done,
}

/// State of one Merge(L) call: local merging once, then global grids
/// until at most one value is left.
#[derive(Clone, Debug)]
pub(crate) struct MergeRun {
    /// Cluster members keyed by their current representative value.
    clusters: HashMap<ValueId, Vec<ValueId>>,
    /// Representatives still to merge, alphabetical.
    list: Vec<ValueId>,
    stage: Stage,
    output: Vec<Vec<ValueId>>,
}

impl MergeRun {
    pub(crate) fn new(items: Vec<Vec<ValueId>>, table: &ValueTable) -> Self {
        let mut clusters = HashMap::with_capacity(items.len());
        let mut list = Vec::with_capacity(items.len());
        for members in items {
            let rep = table.longest(&members).expect("clusters are nonempty");
            list.push(rep);
            clusters.insert(rep, members);
        }
        table.sort_alphabetically(&mut list);
        let stage = if list.is_empty() { Stage::Done } else { Stage::Local };
        Self {
            clusters,
            list,
            stage,
            output: Vec::new(),
        }
    }

    pub(crate) fn is_done(&self) -> bool {
        self.stage == Stage::Done
    }

    pub(crate) fn in_global(&self) -> bool {
        self.stage == Stage::Global
    }

    pub(crate) fn take_output(&mut self) -> Vec<Vec<ValueId>> {
        std::mem::take(&mut self.output)
    }

    pub(crate) fn task(&self, columns: usize) -> Option<TaskKind> {
        match self.stage {
            Stage::Local => Some(TaskKind::LocalMergeScan { list: self.list.clone() }),
            Stage::Global => {
                let c = columns.min(self.list.len());
                Some(TaskKind::GlobalMergeGrid {
                    columns: self.list[..c].to_vec(),
                    rows: self.list[c..].to_vec(),
                })
            }
            Stage::Done => None,
        }
    }

    /// Stops global merging once the list is down to one value.
    fn settle(&mut self) {
        if self.list.len() <= 1 {
            for rep in self.list.drain(..) {
                self.output.push(self.clusters.remove(&rep).expect("listed representative"));
            }
            self.stage = Stage::Done;
        } else {
            self.stage = Stage::Global;
        }
    }

    /// Joins the clusters behind `reps` and returns the new representative.
    fn join(&mut self, reps: &[ValueId], table: &ValueTable) -> ValueId {
        let rep = table.longest(reps).expect("nonempty group");
        let mut members = Vec::new();
        for r in reps {
            members.extend(self.clusters.remove(r).expect("listed representative"));
        }
        self.clusters.insert(rep, members);
        rep
    }

    /// Validates a local-merge action and returns its charge; mutates only on success.
    ///
    /// `window` is the short-term memory capacity to enforce, if any.
    pub(crate) fn apply_local(
        &mut self,
        links: &[(ValueId, ValueId)],
        window: Option<usize>,
        sink: &mut AssertionSink,
        table: &ValueTable,
    ) -> Result<OpCounts> {
        let pos: HashMap<ValueId, usize> = self.list.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut uf = UnionFind::new(self.list.len());
        for &(cur, earlier) in links {
            let (Some(&i), Some(&j)) = (pos.get(&cur), pos.get(&earlier)) else {
                return Err(Error::ActionMismatch(format!(
                    "link ({cur}, {earlier}) references a value not in the list"
                )));
            };
            if i == j {
                return Err(Error::ActionMismatch(format!("value {cur} linked to itself")));
            }
            uf.union(i, j);
        }
        if let Some(capacity) = window {
            check_window(&self.list, links, &pos, &mut uf.clone(), capacity)?;
        }
        for &(cur, earlier) in links {
            sink.pair(cur, earlier, Polarity::Match);
        }
        let groups = uf.groups();
        let mut list = Vec::with_capacity(groups.len());
        for g in groups {
            let reps: Vec<ValueId> = g.iter().map(|&i| self.list[i]).collect();
            list.push(if reps.len() == 1 { reps[0] } else { self.join(&reps, table) });
        }
        table.sort_alphabetically(&mut list);
        self.list = list;
        self.settle();

        let n = links.len() as u64;
        let mut ops = OpCounts::clicks(1);
        ops.memorize = pos.len() as u64;
        ops.focus += 2 * n;
        ops.select += 3 * n;
        Ok(ops)
    }

    pub(crate) fn apply_global(
        &mut self,
        checks: &[(ValueId, ValueId)],
        columns: usize,
        sink: &mut AssertionSink,
        table: &ValueTable,
    ) -> Result<OpCounts> {
        let c = columns.min(self.list.len());
        let pos: HashMap<ValueId, usize> = self.list.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut uf = UnionFind::new(self.list.len());
        let mut claimed: HashSet<usize> = HashSet::new();
        for &(col, other) in checks {
            let (Some(&i), Some(&j)) = (pos.get(&col), pos.get(&other)) else {
                return Err(Error::ActionMismatch(format!(
                    "check ({col}, {other}) references a value not in the grid"
                )));
            };
            if i >= c {
                return Err(Error::ActionMismatch(format!("value {col} is not a column")));
            }
            if j <= i {
                return Err(Error::ActionMismatch(format!(
                    "value {other} must be a row or a later column than {col}"
                )));
            }
            if !claimed.insert(j) {
                return Err(Error::BoxConflict(other));
            }
            uf.union(i, j);
        }
        for &(col, other) in checks {
            sink.pair(col, other, Polarity::Match);
        }
        for i in 0..c {
            for j in 0..self.list.len() {
                if j != i && !(j < c && j < i) && !uf.same(i, j) {
                    sink.pair(self.list[i], self.list[j], Polarity::NonMatch);
                }
            }
        }

        let groups = uf.groups();
        let mut rest = Vec::with_capacity(self.list.len());
        for g in groups {
            let reps: Vec<ValueId> = g.iter().map(|&i| self.list[i]).collect();
            if g[0] < c {
                let rep = if reps.len() == 1 { reps[0] } else { self.join(&reps, table) };
                self.output.push(self.clusters.remove(&rep).expect("joined cluster"));
            } else {
                rest.extend(reps);
            }
        }
        table.sort_alphabetically(&mut rest);
        self.list = rest;
        self.settle();

        let mut ops = OpCounts::clicks(1 + checks.len() as u64);
        ops.memorize = c as u64;
        ops.recall = (pos.len() - c) as u64;
        Ok(ops)
    }
}

/// Replays short-term memory over the list and checks that every link is a
/// memory hit on the value currently held for its group.
fn check_window(
    list: &[ValueId],
    links: &[(ValueId, ValueId)],
    pos: &HashMap<ValueId, usize>,
    uf: &mut UnionFind,
    capacity: usize,
) -> Result<()> {
    let mut link_of: HashMap<usize, usize> = HashMap::new();
    for &(cur, earlier) in links {
        let (i, j) = (pos[&cur], pos[&earlier]);
        if j >= i || link_of.insert(i, j).is_some() {
            return Err(Error::LinkOutOfWindow { current: cur, earlier });
        }
    }
    // (group root, position of the value held), oldest first.
    let mut stm: Vec<(usize, usize)> = Vec::with_capacity(capacity);
    for i in 0..list.len() {
        let g = uf.find(i);
        let held = stm.iter().position(|&(root, _)| root == g);
        match (held, link_of.get(&i)) {
            (Some(slot), Some(&j)) if stm[slot].1 == j => {
                stm.remove(slot);
            }
            (Some(slot), _) => {
                let j = link_of.get(&i).copied().unwrap_or(stm[slot].1);
                return Err(Error::LinkOutOfWindow {
                    current: list[i],
                    earlier: list[j],
                });
            }
            (None, Some(&j)) => {
                return Err(Error::LinkOutOfWindow {
                    current: list[i],
                    earlier: list[j],
                });
            }
            (None, None) => {
                if stm.len() == capacity {
                    stm.remove(0);
                }
            }
        }
        stm.push((g, i));
    }
    Ok(())
}
