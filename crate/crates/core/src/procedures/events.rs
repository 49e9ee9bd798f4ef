use serde::{Deserialize, Serialize};

use crate::costmodel::UserParams;

use super::task::{ActionPayload, TaskId};

/// Primitive operations charged for one action.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    pub focus: u64,
    pub select: u64,
    #[serde(rename = "match")]
    pub matched: u64,
    pub memorize: u64,
    pub recall: u64,
    /// Values examined by one isPure, if performed.
    pub is_pure: Option<u64>,
    /// Cluster size of one findDom, if performed.
    pub find_dom: Option<u64>,
}

impl OpCounts {
    pub fn clicks(n: u64) -> Self {
        Self {
            focus: n,
            select: n,
            ..Default::default()
        }
    }

    /// Model time for these operations.
    pub fn seconds(&self, u: &UserParams) -> f64 {
        let mut t = self.focus as f64 * u.rho_f
            + self.select as f64 * u.rho_s
            + self.matched as f64 * u.rho_m
            + self.memorize as f64 * u.rho_z
            + self.recall as f64 * u.rho_r;
        if let Some(scanned) = self.is_pure {
            t += u.is_pure_scanned(scanned as f64);
        }
        if let Some(psi) = self.find_dom {
            t += u.find_dom(psi as f64);
        }
        t
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Splitting,
    LocalMerge,
    GlobalMerge,
    Done,
}

/// One applied action, as recorded in the session log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub task_id: TaskId,
    pub task: String,
    pub phase: Phase,
    pub action: ActionPayload,
    pub ops: OpCounts,
    pub seconds: f64,
    /// New assertions this action added to the verification set.
    pub assertions: usize,
}
