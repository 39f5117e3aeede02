//! Reach planning and the traded-control episode runner.
//!
//! An episode is a sequence of three pick phases. In each phase the user
//! demonstrates a reach, the intent classifier and commitment gate pick a
//! goal, and the robot plans and executes a reach to it. `Early` mode plans
//! as soon as the gate commits, overlapping the rest of the demonstration;
//! `Late` mode waits for the demonstration to finish.

mod episode;
mod experiment;
mod plan;

pub use episode::{run_episode, EpisodeLog, GraspRecord};
pub use experiment::{read_summary_csv, run_experiment, write_summary_csv, ExperimentSpec, SummaryRow, UserLog};
pub use plan::{gripper_goal, plan_reach, Plan, ROBOT_HOME};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Early,
    Late,
}

impl Mode {
    pub const ALL: [Mode; 2] = [Mode::Early, Mode::Late];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Early => "early",
            Mode::Late => "late",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "early" => Some(Mode::Early),
            "late" => Some(Mode::Late),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimingParams {
    /// Simulated planner runtime per plan, seconds.
    pub planning_budget: f64,
    /// End-effector speed during execution, m/s.
    pub execution_speed: f64,
    /// Idle time between the end of one execution and the next phase, seconds.
    pub inter_grasp_pause: f64,
    /// Clock advance per hand sample, seconds.
    pub sim_tick: f64,
}

impl Default for TimingParams {
    fn default() -> Self {
        TimingParams { planning_budget: 1.67, execution_speed: 0.15, inter_grasp_pause: 0.5, sim_tick: 1.0 / 180.0 }
    }
}

impl TimingParams {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.planning_budget, self.execution_speed, self.inter_grasp_pause, self.sim_tick]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite());
        if !ok {
            return Err(Error::invalid("timing parameters must all be positive and finite"));
        }
        Ok(())
    }
}
