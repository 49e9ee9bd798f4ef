use serde::{Deserialize, Serialize};

use crate::model::ValueId;

pub type TaskId = u64;

/// What the user is asked to do next.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskKind {
    /// Answer yes/no: does every value in the cluster refer to one entity?
    IsPureQuestion { cluster: Vec<ValueId> },
    /// Find the dominating entity, then press "mark values" or "clean mixed cluster".
    FindDomAndMark { cluster: Vec<ValueId> },
    /// Select values, then press one of the two split buttons.
    MarkValues { cluster: Vec<ValueId> },
    /// Link each value to an earlier one still held in memory.
    LocalMergeScan { list: Vec<ValueId> },
    /// Check the rows (or later columns) matching each column value.
    GlobalMergeGrid { columns: Vec<ValueId>, rows: Vec<ValueId> },
}

impl TaskKind {
    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::IsPureQuestion { .. } => "is_pure_question",
            TaskKind::FindDomAndMark { .. } => "find_dom_and_mark",
            TaskKind::MarkValues { .. } => "mark_values",
            TaskKind::LocalMergeScan { .. } => "local_merge_scan",
            TaskKind::GlobalMergeGrid { .. } => "global_merge_grid",
        }
    }

    /// Every value shown by the task.
    pub fn shown(&self) -> Vec<ValueId> {
        match self {
            TaskKind::IsPureQuestion { cluster }
            | TaskKind::FindDomAndMark { cluster }
            | TaskKind::MarkValues { cluster } => cluster.clone(),
            TaskKind::LocalMergeScan { list } => list.clone(),
            TaskKind::GlobalMergeGrid { columns, rows } => columns.iter().chain(rows).copied().collect(),
        }
    }

    /// Renames every value id, e.g. between a sub-table and its parent.
    pub fn map_ids(&self, f: impl Fn(ValueId) -> ValueId) -> Self {
        let m = |v: &Vec<ValueId>| v.iter().map(|&x| f(x)).collect();
        match self {
            TaskKind::IsPureQuestion { cluster } => TaskKind::IsPureQuestion { cluster: m(cluster) },
            TaskKind::FindDomAndMark { cluster } => TaskKind::FindDomAndMark { cluster: m(cluster) },
            TaskKind::MarkValues { cluster } => TaskKind::MarkValues { cluster: m(cluster) },
            TaskKind::LocalMergeScan { list } => TaskKind::LocalMergeScan { list: m(list) },
            TaskKind::GlobalMergeGrid { columns, rows } => TaskKind::GlobalMergeGrid {
                columns: m(columns),
                rows: m(rows),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub id: TaskId,
    #[serde(flatten)]
    pub kind: TaskKind,
    /// True while the task belongs to a merge run nested inside the split
    /// stage (the "clean mixed cluster" branch).
    pub nested: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FindDomChoice {
    MarkValues,
    CleanMixed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitButton {
    /// Marked values are the non-dominating ones; the rest is clean.
    CreateCleanNew,
    /// Marked values are the dominating ones and form a clean cluster.
    CreateNewCleanOld,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ActionPayload {
    IsPure {
        pure: bool,
        /// Values read before the first one not matching the first value's
        /// entity; the whole cluster when pure.
        #[serde(default)]
        scanned: Option<usize>,
    },
    FindDom {
        choice: FindDomChoice,
    },
    Mark {
        marked: Vec<ValueId>,
        button: SplitButton,
    },
    LocalMerge {
        /// (current value, earlier value) pairs.
        links: Vec<(ValueId, ValueId)>,
    },
    GlobalMerge {
        /// (column value, matching row or later column value) pairs.
        checks: Vec<(ValueId, ValueId)>,
    },
}

impl ActionPayload {
    pub fn name(&self) -> &'static str {
        match self {
            ActionPayload::IsPure { .. } => "is_pure",
            ActionPayload::FindDom { .. } => "find_dom",
            ActionPayload::Mark { .. } => "mark",
            ActionPayload::LocalMerge { .. } => "local_merge",
            ActionPayload::GlobalMerge { .. } => "global_merge",
        }
    }

    /// Renames every value id; `None` from `f` rejects the payload.
    pub fn try_map_ids(&self, f: impl Fn(ValueId) -> Option<ValueId>) -> Option<Self> {
        let pairs = |v: &Vec<(ValueId, ValueId)>| v.iter().map(|&(a, b)| Some((f(a)?, f(b)?))).collect::<Option<Vec<_>>>();
        Some(match self {
            ActionPayload::Mark { marked, button } => ActionPayload::Mark {
                marked: marked.iter().map(|&v| f(v)).collect::<Option<_>>()?,
                button: *button,
            },
            ActionPayload::LocalMerge { links } => ActionPayload::LocalMerge { links: pairs(links)? },
            ActionPayload::GlobalMerge { checks } => ActionPayload::GlobalMerge { checks: pairs(checks)? },
            other => other.clone(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub task_id: TaskId,
    #[serde(flatten)]
    pub payload: ActionPayload,
    /// Client-measured seconds, used when the session runs on observed time.
    #[serde(default)]
    pub elapsed: Option<f64>,
}
