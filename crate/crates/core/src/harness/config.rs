//! TOML experiment configuration with one section per module.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::control::{ExperimentSpec, TimingParams};
use crate::error::{Error, Result};
use crate::intent::{GateConfig, MlpArchitecture, TrainConfig};
use crate::registration::CpdParams;
use crate::scene::{SceneConfig, SegmentationOracle};
use crate::simuser::{ReachOptions, UserKind};
use crate::tracker::TrackerConfig;

pub const ENV_OUTPUT_DIR: &str = "TELEOP_OUTPUT_DIR";
pub const ENV_BIND: &str = "TELEOP_BIND";
pub const DEFAULT_BIND: &str = "127.0.0.1:7878";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegistrationSection {
    pub outlier_weight: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub init_sigma2: f64,
    pub max_reference_points: usize,
}

impl Default for RegistrationSection {
    fn default() -> Self {
        let p = CpdParams::default();
        RegistrationSection {
            outlier_weight: p.outlier_weight,
            max_iterations: p.max_iterations,
            tolerance: p.tolerance,
            init_sigma2: p.init_sigma2,
            max_reference_points: p.max_reference_points,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerSection {
    pub num_particles: usize,
    pub diffusion_trans: f64,
    pub diffusion_rot_deg: f64,
    pub likelihood_sigma: f64,
    pub resample_threshold: f64,
    pub max_model_points: usize,
    pub max_observed_points: usize,
    /// Frames per second fed to the tracker.
    pub rate_hz: f64,
    pub camera_culling: bool,
}

impl Default for TrackerSection {
    fn default() -> Self {
        let t = TrackerConfig::default();
        TrackerSection {
            num_particles: t.num_particles,
            diffusion_trans: t.diffusion_trans,
            diffusion_rot_deg: t.diffusion_rot.to_degrees(),
            likelihood_sigma: t.likelihood_sigma,
            resample_threshold: t.resample_threshold,
            max_model_points: t.max_model_points,
            max_observed_points: t.max_observed_points,
            rate_hz: 10.0,
            camera_culling: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationSection {
    pub detection_rate: f64,
    pub label_error_rate: f64,
    pub boundary_bleed: f64,
    pub bleed_margin: f64,
}

impl Default for SegmentationSection {
    fn default() -> Self {
        let s = SegmentationOracle::default();
        SegmentationSection {
            detection_rate: s.detection_rate,
            label_error_rate: s.label_error_rate,
            boundary_bleed: 0.15,
            bleed_margin: s.bleed_margin,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub runs: usize,
    /// Objects are yawed uniformly within ±yaw_range/2 per run, radians.
    pub yaw_range: f64,
    /// Report times after tracker start, seconds.
    pub report_at: Vec<f64>,
}

impl Default for PipelineSection {
    fn default() -> Self {
        PipelineSection { runs: 50, yaw_range: 1.5, report_at: vec![1.0, 3.0] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub sample_stride: usize,
    pub hidden: Vec<usize>,
    pub activation: String,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainingSection {
            learning_rate: t.learning_rate,
            momentum: t.momentum,
            epochs: 10,
            batch_size: t.batch_size,
            sample_stride: t.sample_stride,
            hidden: t.architecture.hidden.clone(),
            activation: t.architecture.activation.as_str().to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UsersSection {
    pub noise_sigma: f64,
    pub bias_sigma: f64,
    /// Hand sample rate, Hz.
    pub rate: f64,
    pub perturbation_amplitude: f64,
    /// Duration bounds for the training dataset, seconds.
    pub dataset_duration: [f64; 2],
    /// Duration bounds for episode demonstrations, seconds.
    pub episode_duration: [f64; 2],
}

impl Default for UsersSection {
    fn default() -> Self {
        UsersSection {
            noise_sigma: 0.01,
            bias_sigma: 0.02,
            rate: 180.0,
            perturbation_amplitude: 0.01,
            dataset_duration: [2.0, 5.0],
            episode_duration: [3.5, 5.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateSection {
    pub consecutive_required: usize,
    pub warmup_steps: usize,
}

impl Default for GateSection {
    fn default() -> Self {
        let g = GateConfig::default();
        GateSection { consecutive_required: g.consecutive_required, warmup_steps: g.warmup_steps }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingSection {
    pub planning_budget: f64,
    pub execution_speed: f64,
    pub inter_grasp_pause: f64,
    pub sim_tick: f64,
}

impl Default for TimingSection {
    fn default() -> Self {
        let t = TimingParams::default();
        TimingSection {
            planning_budget: t.planning_budget,
            execution_speed: t.execution_speed,
            inter_grasp_pause: t.inter_grasp_pause,
            sim_tick: t.sim_tick,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub users: Vec<String>,
    pub modes: Vec<String>,
    pub episodes: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            users: vec!["normal".into(), "noisy".into(), "biased".into()],
            modes: vec!["early".into(), "late".into()],
            episodes: 12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeSection {
    pub bind: String,
}

impl Default for ServeSection {
    fn default() -> Self {
        ServeSection { bind: DEFAULT_BIND.to_string() }
    }
}

/// Everything a CLI run can be parameterised with. Missing keys take the
/// defaults shown by `ExperimentConfig::default()`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Scene file, or `builtin:desk` / `builtin:benchmark`.
    pub scene: Option<String>,
    pub output_dir: Option<PathBuf>,
    pub registration: RegistrationSection,
    pub tracker: TrackerSection,
    pub segmentation: SegmentationSection,
    pub pipeline: PipelineSection,
    pub training: TrainingSection,
    pub users: UsersSection,
    pub gate: GateSection,
    pub timing: TimingSection,
    pub experiment: ExperimentSection,
    pub serve: ServeSection,
}

fn config_err(source: &str, message: impl Into<String>) -> Error {
    Error::Config { source_name: source.to_string(), message: message.into() }
}

impl ExperimentConfig {
    /// Parses and validates. Relative scene paths resolve against `base_dir`.
    pub fn from_toml_str(text: &str, source_name: &str, base_dir: Option<&Path>) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| config_err(source_name, e.to_string()))?;
        if let (Some(scene), Some(base)) = (&cfg.scene, base_dir) {
            if !scene.starts_with("builtin:") && Path::new(scene).is_relative() {
                cfg.scene = Some(base.join(scene).display().to_string());
            }
        }
        cfg.validate().map_err(|e| config_err(source_name, e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, &path.display().to_string(), path.parent())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serialisable")
    }

    /// Checks every section by building the module parameter structs.
    pub fn validate(&self) -> Result<()> {
        self.cpd_params().validate()?;
        self.tracker_config(None).validate()?;
        if !(self.tracker.rate_hz > 0.0) {
            return Err(Error::invalid("tracker.rate_hz must be positive"));
        }
        self.segmentation_oracle().validate()?;
        if self.pipeline.runs == 0 || self.pipeline.report_at.is_empty() || self.pipeline.report_at.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::invalid("pipeline needs runs >= 1 and positive report times"));
        }
        self.train_config()?.validate()?;
        self.dataset_reach().validate()?;
        self.experiment_spec()?.validate()?;
        if let Some(scene) = &self.scene {
            if !scene.starts_with("builtin:") && !Path::new(scene).exists() {
                return Err(Error::invalid(format!("scene file {scene} does not exist")));
            }
        }
        Ok(())
    }

    /// Applies the environment overrides for output directory and bind
    /// address.
    pub fn apply_env(&mut self) {
        self.apply_overrides(std::env::var(ENV_OUTPUT_DIR).ok(), std::env::var(ENV_BIND).ok());
    }

    pub fn apply_overrides(&mut self, output_dir: Option<String>, bind: Option<String>) {
        if let Some(d) = output_dir.filter(|d| !d.is_empty()) {
            self.output_dir = Some(PathBuf::from(d));
        }
        if let Some(b) = bind.filter(|b| !b.is_empty()) {
            self.serve.bind = b;
        }
    }

    /// Resolves an output path against the output directory, if any.
    pub fn output_path(&self, path: impl AsRef<Path>) -> PathBuf {
        let path = path.as_ref();
        match &self.output_dir {
            Some(dir) if path.is_relative() => dir.join(path),
            _ => path.to_path_buf(),
        }
    }

    pub fn cpd_params(&self) -> CpdParams {
        let r = &self.registration;
        CpdParams {
            outlier_weight: r.outlier_weight,
            max_iterations: r.max_iterations,
            tolerance: r.tolerance,
            init_sigma2: r.init_sigma2,
            max_reference_points: r.max_reference_points,
            seed: self.seed,
        }
    }

    pub fn tracker_config(&self, camera: Option<crate::scene::CameraModel>) -> TrackerConfig {
        let t = &self.tracker;
        TrackerConfig {
            num_particles: t.num_particles,
            diffusion_trans: t.diffusion_trans,
            diffusion_rot: t.diffusion_rot_deg.to_radians(),
            likelihood_sigma: t.likelihood_sigma,
            resample_threshold: t.resample_threshold,
            max_model_points: t.max_model_points,
            max_observed_points: t.max_observed_points,
            camera: if t.camera_culling { camera } else { None },
            seed: self.seed,
        }
    }

    pub fn segmentation_oracle(&self) -> SegmentationOracle {
        let s = &self.segmentation;
        SegmentationOracle {
            detection_rate: s.detection_rate,
            label_error_rate: s.label_error_rate,
            boundary_bleed: s.boundary_bleed,
            bleed_margin: s.bleed_margin,
            ..SegmentationOracle::default()
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let t = &self.training;
        let activation = crate::intent::Activation::parse(&t.activation)
            .ok_or_else(|| Error::invalid(format!("unknown activation '{}'", t.activation)))?;
        Ok(TrainConfig {
            learning_rate: t.learning_rate,
            momentum: t.momentum,
            epochs: t.epochs,
            batch_size: t.batch_size,
            seed: self.seed,
            sample_stride: t.sample_stride,
            architecture: MlpArchitecture { hidden: t.hidden.clone(), activation, ..MlpArchitecture::default() },
        })
    }

    fn reach(&self, bounds: [f64; 2]) -> ReachOptions {
        ReachOptions {
            perturbation_amplitude: self.users.perturbation_amplitude,
            duration_range: (bounds[0], bounds[1]),
            ..ReachOptions::default()
        }
    }

    pub fn dataset_reach(&self) -> ReachOptions {
        self.reach(self.users.dataset_duration)
    }

    pub fn gate_config(&self) -> GateConfig {
        GateConfig { consecutive_required: self.gate.consecutive_required, warmup_steps: self.gate.warmup_steps }
    }

    pub fn timing(&self) -> TimingParams {
        let t = &self.timing;
        TimingParams {
            planning_budget: t.planning_budget,
            execution_speed: t.execution_speed,
            inter_grasp_pause: t.inter_grasp_pause,
            sim_tick: t.sim_tick,
        }
    }

    pub fn experiment_spec(&self) -> Result<ExperimentSpec> {
        let users = self
            .experiment
            .users
            .iter()
            .map(|u| UserKind::parse(u).ok_or_else(|| Error::invalid(format!("unknown user model '{u}'"))))
            .collect::<Result<Vec<_>>>()?;
        let modes = self
            .experiment
            .modes
            .iter()
            .map(|m| crate::control::Mode::parse(m).ok_or_else(|| Error::invalid(format!("unknown mode '{m}'"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(ExperimentSpec {
            users,
            modes,
            episodes: self.experiment.episodes,
            seed: self.seed,
            noise_sigma: self.users.noise_sigma,
            bias_sigma: self.users.bias_sigma,
            rate: self.users.rate,
            reach: self.reach(self.users.episode_duration),
            gate: self.gate_config(),
            timing: self.timing(),
        })
    }
}

/// Loads a scene from a file path or a `builtin:` name.
pub fn load_scene(spec: &str, seed: u64) -> Result<SceneConfig> {
    match spec {
        "builtin:desk" => Ok(SceneConfig::desk(seed)),
        "builtin:benchmark" => Ok(SceneConfig::benchmark(seed)),
        s if s.starts_with("builtin:") => Err(Error::invalid(format!("unknown built-in scene '{s}'"))),
        path => SceneConfig::load(path),
    }
}
