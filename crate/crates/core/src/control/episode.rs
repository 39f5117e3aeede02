use super::plan::{gripper_goal, plan_reach, ROBOT_HOME};
use super::{Mode, TimingParams};
use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::intent::{predict, GateConfig, GateState, LabeledTrajectory, MlpParams, Prediction, NUM_OBJECTS};
use crate::scene::SceneConfig;
use crate::simuser::grasp_point;

/// Knots per reach plan.
const PLAN_KNOTS: usize = 12;

/// Timeline and outcome of one pick phase. Times are seconds on the episode
/// clock.
#[derive(Clone, Debug, PartialEq)]
pub struct GraspRecord {
    pub target: Prediction,
    pub committed: Prediction,
    /// 1-based sample index at which the gate committed.
    pub commit_step: usize,
    /// The gate never committed and the last-sample argmax was used.
    pub fallback: bool,
    pub phase_start: f64,
    pub commit_time: f64,
    pub demo_end: f64,
    pub planning_start: f64,
    pub execution_start: f64,
    pub execution_end: f64,
    pub time_until_execution: f64,
    pub object_correct: bool,
    pub direction_correct: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeLog {
    pub mode: Mode,
    pub grasps: Vec<GraspRecord>,
    pub episode_duration: f64,
}

impl EpisodeLog {
    pub fn total_time_until_execution(&self) -> f64 {
        self.grasps.iter().map(|g| g.time_until_execution).sum()
    }

    pub fn object_accuracy(&self) -> f64 {
        self.grasps.iter().filter(|g| g.object_correct).count() as f64 / self.grasps.len().max(1) as f64
    }

    pub fn direction_accuracy(&self) -> f64 {
        self.grasps.iter().filter(|g| g.direction_correct).count() as f64 / self.grasps.len().max(1) as f64
    }
}

/// Simulates one three-pick episode. Deterministic in its inputs.
///
/// Objects the robot has already picked are removed from the candidate set
/// of later phases.
pub fn run_episode(
    mode: Mode,
    scene: &SceneConfig,
    demonstrations: &[LabeledTrajectory],
    params: &MlpParams,
    gate: &GateConfig,
    timing: &TimingParams,
) -> Result<EpisodeLog> {
    timing.validate()?;
    if demonstrations.len() != NUM_OBJECTS || scene.num_objects() != NUM_OBJECTS {
        return Err(Error::invalid(format!("an episode needs {NUM_OBJECTS} objects and {NUM_OBJECTS} demonstrations")));
    }
    let mut targets: Vec<usize> = demonstrations.iter().map(|d| d.target_object).collect();
    targets.sort_unstable();
    targets.dedup();
    if targets.len() != NUM_OBJECTS {
        return Err(Error::invalid("demonstrations must target distinct objects"));
    }

    let mut available = [true; NUM_OBJECTS];
    let mut robot = Pose::from_translation(ROBOT_HOME);
    let mut clock = 0.0;
    let mut grasps = Vec::with_capacity(NUM_OBJECTS);
    for (phase, demo) in demonstrations.iter().enumerate() {
        demo.validate()?;
        let phase_start = clock;
        let features = demo.features()?;
        let mut state = GateState::new(*gate);
        let mut commit = None;
        let mut last = None;
        for (i, f) in features.iter().enumerate() {
            let p = predict(params, f, Some(&available))?;
            last = Some(p);
            if let Some(c) = state.observe(p) {
                commit = Some((c.prediction, c.step, false));
                break;
            }
            debug_assert_eq!(state.step, i + 1);
        }
        let (committed, commit_step, fallback) =
            commit.unwrap_or_else(|| (last.expect("trajectory has samples"), features.len(), true));
        let demo_end = phase_start + features.len() as f64 * timing.sim_tick;
        let commit_time = phase_start + commit_step as f64 * timing.sim_tick;

        let goal = gripper_goal(grasp_point(scene, committed.object, committed.direction)?, committed.direction);
        let plan = plan_reach(&robot, &goal, PLAN_KNOTS, timing)?;
        let (planning_start, execution_start) = match mode {
            Mode::Early => (commit_time, (commit_time + plan.planning_time).max(demo_end)),
            Mode::Late => (demo_end, demo_end + plan.planning_time),
        };
        let execution_end = execution_start + plan.path_length() / timing.execution_speed;
        grasps.push(GraspRecord {
            target: Prediction { object: demo.target_object, direction: demo.grasp_direction },
            committed,
            commit_step,
            fallback,
            phase_start,
            commit_time,
            demo_end,
            planning_start,
            execution_start,
            execution_end,
            time_until_execution: execution_start - phase_start,
            object_correct: committed.object == demo.target_object,
            direction_correct: committed.direction == demo.grasp_direction,
        });
        available[committed.object] = false;
        robot = goal;
        clock = execution_end;
        if phase + 1 < demonstrations.len() {
            clock += timing.inter_grasp_pause;
        }
    }
    Ok(EpisodeLog { mode, grasps, episode_duration: clock })
}
