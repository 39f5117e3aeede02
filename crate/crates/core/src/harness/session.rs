//! Live teleoperation session: one virtual episode driven by streamed hand
//! samples. The wire format is one JSON object per line; see
//! `docs/protocol.md`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::control::{gripper_goal, plan_reach, Mode, TimingParams, ROBOT_HOME};
use crate::error::{Error, Result};
use crate::geometry::{Pose, Vec3};
use crate::intent::{extract_features, mlp_forward, softmax, GateConfig, GateState, HandState, MlpParams, Prediction, NUM_OBJECTS};
use crate::scene::{GraspDirection, SceneConfig};
use crate::simuser::grasp_point;

const PLAN_KNOTS: usize = 12;

/// Immutable data shared by every session of a server.
#[derive(Clone, Debug)]
pub struct SessionContext {
    pub scene: SceneConfig,
    pub params: MlpParams,
    pub gate: GateConfig,
    pub timing: TimingParams,
}

impl SessionContext {
    pub fn new(scene: SceneConfig, params: MlpParams, gate: GateConfig, timing: TimingParams) -> Result<Self> {
        if scene.num_objects() != NUM_OBJECTS {
            return Err(Error::invalid(format!("session scene must hold {NUM_OBJECTS} objects")));
        }
        params.validate()?;
        timing.validate()?;
        if gate.consecutive_required == 0 {
            return Err(Error::invalid("gate consecutive_required must be >= 1"));
        }
        Ok(SessionContext { scene, params, gate, timing })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClientMessage {
    HandSample {
        position: [f64; 3],
        direction: [f64; 3],
        palm_normal: [f64; 3],
        y_rotation: f64,
        /// Client timestamp, seconds. When present the sample is held for
        /// every gate tick elapsed since the previous one.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        t: Option<f64>,
        /// Marks the last sample of the current demonstration.
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        end: bool,
    },
    Reset,
    ModeSet {
        mode: Mode,
    },
    Hello,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectInfo {
    pub index: usize,
    pub label: String,
    pub position: [f64; 3],
    pub retrieved: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ServerMessage {
    Scene {
        step: u64,
        objects: Vec<ObjectInfo>,
        bounds_min: [f64; 3],
        bounds_max: [f64; 3],
        mode: Mode,
        gate_rate: f64,
        consecutive_required: usize,
        warmup_steps: usize,
    },
    Prediction {
        step: u64,
        phase_step: usize,
        object: usize,
        object_label: String,
        direction: GraspDirection,
        object_confidence: f64,
        direction_confidence: f64,
        object_probabilities: Vec<f64>,
        direction_probabilities: Vec<f64>,
    },
    GateProgress {
        step: u64,
        phase_step: usize,
        run_length: usize,
        required: usize,
        progress: f64,
        warmup_remaining: usize,
    },
    Commit {
        step: u64,
        phase_step: usize,
        object: usize,
        object_label: String,
        direction: GraspDirection,
        fallback: bool,
        time: f64,
    },
    PlanStarted {
        step: u64,
        time: f64,
        /// `[t, x, y, z, qw, qx, qy, qz]`, `t` relative to execution start.
        waypoints: Vec<[f64; 8]>,
    },
    ExecutionStarted {
        step: u64,
        time: f64,
    },
    Done {
        step: u64,
        time: f64,
        object: usize,
        grasp_index: usize,
        time_until_execution: f64,
        episode_complete: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        episode_duration: Option<f64>,
    },
    Reset {
        step: u64,
    },
    ModeSet {
        step: u64,
        mode: Mode,
    },
    Error {
        step: u64,
        message: String,
    },
}

impl ServerMessage {
    pub fn step(&self) -> u64 {
        match self {
            ServerMessage::Scene { step, .. }
            | ServerMessage::Prediction { step, .. }
            | ServerMessage::GateProgress { step, .. }
            | ServerMessage::Commit { step, .. }
            | ServerMessage::PlanStarted { step, .. }
            | ServerMessage::ExecutionStarted { step, .. }
            | ServerMessage::Done { step, .. }
            | ServerMessage::Reset { step }
            | ServerMessage::ModeSet { step, .. }
            | ServerMessage::Error { step, .. } => *step,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ServerMessage::Scene { .. } => "scene",
            ServerMessage::Prediction { .. } => "prediction",
            ServerMessage::GateProgress { .. } => "gate_progress",
            ServerMessage::Commit { .. } => "commit",
            ServerMessage::PlanStarted { .. } => "plan_started",
            ServerMessage::ExecutionStarted { .. } => "execution_started",
            ServerMessage::Done { .. } => "done",
            ServerMessage::Reset { .. } => "reset",
            ServerMessage::ModeSet { .. } => "mode_set",
            ServerMessage::Error { .. } => "error",
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("server messages always serialise")
    }
}

#[derive(Clone, Copy, Debug)]
struct PhaseCommit {
    prediction: Prediction,
    time: f64,
    /// Mode latched at commit; a later mode switch applies to the next grasp.
    mode: Mode,
}

/// Per-connection session state.
#[derive(Clone, Debug)]
pub struct Session {
    ctx: Arc<SessionContext>,
    mode: Mode,
    /// Incremented on every received message; never reset.
    step: u64,
    gate: GateState,
    phase_start: f64,
    phase_ticks: usize,
    first_t: Option<f64>,
    last_prediction: Option<Prediction>,
    commit: Option<PhaseCommit>,
    robot: Pose,
    retrieved: [bool; NUM_OBJECTS],
    grasps_done: usize,
}

fn unit(v: [f64; 3], name: &str) -> Result<Vec3> {
    let v = Vec3::from(v);
    let n = v.norm();
    if !n.is_finite() || n < 1e-9 {
        return Err(Error::invalid(format!("{name} must be a finite non-zero vector")));
    }
    Ok(v / n)
}

impl Session {
    pub fn new(ctx: Arc<SessionContext>) -> Self {
        let gate = GateState::new(ctx.gate);
        Session {
            ctx,
            mode: Mode::Early,
            step: 0,
            gate,
            phase_start: 0.0,
            phase_ticks: 0,
            first_t: None,
            last_prediction: None,
            commit: None,
            robot: Pose::from_translation(ROBOT_HOME),
            retrieved: [false; NUM_OBJECTS],
            grasps_done: 0,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn gate(&self) -> &GateState {
        &self.gate
    }

    /// Scene snapshot sent when a connection opens.
    pub fn greeting(&self) -> ServerMessage {
        let positions = self.ctx.scene.object_positions();
        let objects: Vec<ObjectInfo> = self
            .ctx
            .scene
            .objects
            .iter()
            .zip(&positions)
            .enumerate()
            .map(|(i, (o, p))| ObjectInfo { index: i, label: o.model.label.clone(), position: [p.x, p.y, p.z], retrieved: self.retrieved[i] })
            .collect();
        let lo = positions.iter().fold(Vec3::repeat(f64::INFINITY), |a, p| a.inf(p));
        let hi = positions.iter().fold(Vec3::repeat(f64::NEG_INFINITY), |a, p| a.sup(p));
        ServerMessage::Scene {
            step: self.step,
            objects,
            bounds_min: [lo.x - 0.15, (lo.y - 0.3).min(-0.05), 0.0],
            bounds_max: [hi.x + 0.15, hi.y + 0.1, 0.4],
            mode: self.mode,
            gate_rate: 1.0 / self.ctx.timing.sim_tick,
            consecutive_required: self.ctx.gate.consecutive_required,
            warmup_steps: self.ctx.gate.warmup_steps,
        }
    }

    /// Parses one line and handles it. Malformed input yields an error
    /// reply and leaves the session untouched.
    pub fn handle_line(&mut self, line: &str) -> Vec<ServerMessage> {
        match serde_json::from_str::<ClientMessage>(line) {
            Ok(msg) => self.handle(msg),
            Err(e) => {
                self.step += 1;
                vec![ServerMessage::Error { step: self.step, message: format!("malformed message: {e}") }]
            }
        }
    }

    pub fn handle(&mut self, msg: ClientMessage) -> Vec<ServerMessage> {
        self.step += 1;
        let step = self.step;
        match msg {
            ClientMessage::Hello => vec![self.greeting()],
            ClientMessage::Reset => {
                self.reset_episode();
                vec![ServerMessage::Reset { step }, self.progress_message()]
            }
            ClientMessage::ModeSet { mode } => {
                self.mode = mode;
                vec![ServerMessage::ModeSet { step, mode }]
            }
            ClientMessage::HandSample { position, direction, palm_normal, y_rotation, t, end } => {
                match self.hand_sample(position, direction, palm_normal, y_rotation, t, end) {
                    Ok(out) => out,
                    Err(e) => vec![ServerMessage::Error { step, message: e.to_string() }],
                }
            }
        }
    }

    fn reset_episode(&mut self) {
        let (ctx, mode, step) = (Arc::clone(&self.ctx), self.mode, self.step);
        *self = Session::new(ctx);
        self.mode = mode;
        self.step = step;
    }

    fn start_phase(&mut self, at: f64) {
        self.gate = GateState::new(self.ctx.gate);
        self.phase_start = at;
        self.phase_ticks = 0;
        self.first_t = None;
        self.last_prediction = None;
        self.commit = None;
    }

    fn progress_message(&self) -> ServerMessage {
        ServerMessage::GateProgress {
            step: self.step,
            phase_step: self.phase_ticks,
            run_length: self.gate.run_length,
            required: self.gate.config.consecutive_required,
            progress: self.gate.progress(),
            warmup_remaining: self.gate.config.warmup_steps.saturating_sub(self.gate.step),
        }
    }

    fn now(&self) -> f64 {
        self.phase_start + self.phase_ticks as f64 * self.ctx.timing.sim_tick
    }

    fn label(&self, object: usize) -> String {
        self.ctx.scene.objects[object].model.label.clone()
    }

    fn hand_sample(&mut self, position: [f64; 3], direction: [f64; 3], palm: [f64; 3], y_rotation: f64, t: Option<f64>, end: bool) -> Result<Vec<ServerMessage>> {
        let hand = HandState {
            position: Vec3::from(position),
            direction: unit(direction, "direction")?,
            palm_normal: unit(palm, "palm_normal")?,
            y_rotation,
            timestamp: t.unwrap_or(0.0),
        };
        hand.validate()?;
        let tick = self.ctx.timing.sim_tick;
        let ticks = match (t, self.first_t) {
            (None, _) => 1,
            (Some(t), None) => {
                self.first_t = Some(t);
                1
            }
            (Some(t), Some(t0)) => {
                if t < t0 {
                    return Err(Error::invalid("sample time precedes the start of the demonstration"));
                }
                let target = ((t - t0) / tick + 1e-9).floor() as usize + 1;
                target.saturating_sub(self.phase_ticks)
            }
        };

        let features = extract_features(&hand, &self.ctx.scene.object_positions())?;
        let (obj_scores, dir_scores) = mlp_forward(&self.ctx.params, &features)?;
        let mut masked: Vec<f64> = obj_scores.iter().copied().collect();
        for (s, r) in masked.iter_mut().zip(&self.retrieved) {
            if *r {
                *s = f64::NEG_INFINITY;
            }
        }
        let obj_p = softmax(&masked);
        let dir_p = softmax(dir_scores.as_slice());
        let first_max = |p: &[f64]| p.iter().enumerate().fold(0, |b, (i, v)| if *v > p[b] { i } else { b });
        let prediction = Prediction {
            object: first_max(&obj_p),
            direction: GraspDirection::from_index(first_max(&dir_p)).ok_or_else(|| Error::invalid("model has too many direction outputs"))?,
        };
        self.last_prediction = Some(prediction);

        let step = self.step;
        let mut out = vec![ServerMessage::Prediction {
            step,
            phase_step: 0,
            object: prediction.object,
            object_label: self.label(prediction.object),
            direction: prediction.direction,
            object_confidence: obj_p[prediction.object],
            direction_confidence: dir_p[prediction.direction.index()],
            object_probabilities: obj_p.clone(),
            direction_probabilities: dir_p,
        }];
        let mut committed_now = None;
        for _ in 0..ticks {
            self.phase_ticks += 1;
            if self.commit.is_none() {
                if let Some(c) = self.gate.observe(prediction) {
                    committed_now = Some((c, self.now()));
                }
            }
        }
        if let ServerMessage::Prediction { phase_step, .. } = &mut out[0] {
            // Reported after the held ticks are applied.
            *phase_step = self.phase_ticks;
        }
        out.push(self.progress_message());
        if let Some((c, time)) = committed_now {
            out.extend(self.commit_to(c.prediction, c.step, time, false)?);
        }
        if end {
            out.extend(self.finish_demonstration()?);
        }
        Ok(out)
    }

    fn commit_to(&mut self, prediction: Prediction, phase_step: usize, time: f64, fallback: bool) -> Result<Vec<ServerMessage>> {
        let step = self.step;
        let mut out = vec![ServerMessage::Commit {
            step,
            phase_step,
            object: prediction.object,
            object_label: self.label(prediction.object),
            direction: prediction.direction,
            fallback,
            time,
        }];
        self.commit = Some(PhaseCommit { prediction, time, mode: self.mode });
        if self.mode == Mode::Early {
            out.push(self.plan_message(prediction, time)?);
        }
        Ok(out)
    }

    fn plan_message(&self, prediction: Prediction, time: f64) -> Result<ServerMessage> {
        let goal = gripper_goal(grasp_point(&self.ctx.scene, prediction.object, prediction.direction)?, prediction.direction);
        let plan = plan_reach(&self.robot, &goal, PLAN_KNOTS, &self.ctx.timing)?;
        let waypoints = plan
            .waypoints
            .iter()
            .map(|(t, p)| {
                let a = p.to_array7();
                [*t, a[4], a[5], a[6], a[0], a[1], a[2], a[3]]
            })
            .collect();
        Ok(ServerMessage::PlanStarted { step: self.step, time, waypoints })
    }

    /// End of the user's demonstration: schedules planning and execution
    /// for the committed goal (committing to the latest prediction if the
    /// gate never fired) and moves on to the next grasp.
    fn finish_demonstration(&mut self) -> Result<Vec<ServerMessage>> {
        let step = self.step;
        let demo_end = self.now();
        let mut out = Vec::new();
        if self.commit.is_none() {
            let p = self.last_prediction.ok_or_else(|| Error::invalid("demonstration ended before any sample"))?;
            out.extend(self.commit_to(p, self.phase_ticks, demo_end, true)?);
        }
        let c = self.commit.expect("committed above");
        let budget = self.ctx.timing.planning_budget;
        let execution_start = match c.mode {
            Mode::Early => (c.time + budget).max(demo_end),
            Mode::Late => {
                out.push(self.plan_message(c.prediction, demo_end)?);
                demo_end + budget
            }
        };
        let goal = gripper_goal(grasp_point(&self.ctx.scene, c.prediction.object, c.prediction.direction)?, c.prediction.direction);
        let plan = plan_reach(&self.robot, &goal, PLAN_KNOTS, &self.ctx.timing)?;
        let execution_end = execution_start + plan.path_length() / self.ctx.timing.execution_speed;
        out.push(ServerMessage::ExecutionStarted { step, time: execution_start });
        self.retrieved[c.prediction.object] = true;
        self.robot = goal;
        self.grasps_done += 1;
        let grasp_index = self.grasps_done - 1;
        let time_until_execution = execution_start - self.phase_start;
        let episode_complete = self.grasps_done == NUM_OBJECTS || self.retrieved.iter().all(|r| *r);
        out.push(ServerMessage::Done {
            step,
            time: execution_end,
            object: c.prediction.object,
            grasp_index,
            time_until_execution,
            episode_complete,
            episode_duration: episode_complete.then_some(execution_end),
        });
        if episode_complete {
            self.reset_episode();
        } else {
            self.start_phase(execution_end + self.ctx.timing.inter_grasp_pause);
        }
        Ok(out)
    }
}
