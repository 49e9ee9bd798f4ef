//! A synthetic user that answers served tasks, for driving the service from
//! scripts and tests exactly as the in-process simulator would.

use vnorm_core::calibration::{synthetic_observation, CalibrationPlan, CalibrationSession};
use vnorm_core::costmodel::GlobalParams;
use vnorm_core::multiuser::truthful_set_merge;
use vnorm_core::procedures::Action;
use vnorm_core::simulator::{SyntheticUser, TruthfulPolicy};
use vnorm_core::{Error, GoldPartition, Result};

use crate::live::{Submission, TaskView};

pub struct ScriptedUser<'a> {
    gold: &'a GoldPartition,
    user: SyntheticUser,
    policy: TruthfulPolicy<'a>,
    /// Mirror of the server-side calibration, for the fitted purity the
    /// synthetic isPure timing depends on.
    calibration: CalibrationSession,
}

impl<'a> ScriptedUser<'a> {
    pub fn new(gold: &'a GoldPartition, user: SyntheticUser, global: GlobalParams) -> Self {
        let plan = CalibrationPlan {
            seed: 0,
            tasks: Vec::new(),
            diagnostics: Vec::new(),
        };
        Self {
            gold,
            policy: TruthfulPolicy::new(gold, global, user.params.stm_capacity, user.seed),
            calibration: CalibrationSession::new(plan, user.params),
            user,
        }
    }

    /// The answer to `view`. Cleaning answers carry no elapsed time, so the
    /// session should charge model time.
    pub fn answer(&mut self, view: &TaskView) -> Result<Submission> {
        if let Some(task) = &view.calibration {
            if task.index != self.calibration.plan.tasks.len() {
                return Err(Error::ActionMismatch(format!("calibration task {} out of order", task.index)));
            }
            self.calibration.plan.tasks.push(task.clone());
            let obs = synthetic_observation(&self.calibration, task, self.gold, &self.user.params)?;
            self.calibration.submit(obs.clone())?;
            return Ok(Submission::Calibration(obs));
        }
        if let Some(task) = &view.cleaning {
            return Ok(Submission::Cleaning(Action {
                task_id: task.id,
                payload: self.policy.answer(task),
                elapsed: None,
            }));
        }
        if let Some(task) = &view.set_merge {
            return Ok(Submission::SetMerge(truthful_set_merge(task, self.gold)));
        }
        Err(Error::ActionMismatch(format!("task {} carries no stage payload", view.task_id)))
    }
}
