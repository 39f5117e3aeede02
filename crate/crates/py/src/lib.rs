//! Python bindings for `teleop-core`.
//!
//! Points and vectors cross the boundary as `[x, y, z]` lists and poses as
//! `[qw, qx, qy, qz, tx, ty, tz]`.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use teleop_core::control::{self, Mode, TimingParams};
use teleop_core::harness::{Session as CoreSession, SessionContext};
use teleop_core::intent::{self, GateConfig, GateState, HandState, MlpParams, TrainConfig};
use teleop_core::registration::{self, CpdParams, MASK_Z_OFFSET};
use teleop_core::simuser::{self, ReachOptions, UserKind};
use teleop_core::tracker::{self, ParticleSet, TrackerConfig};
use teleop_core::{metrics, scene, Error, GraspDirection, ObjectModel, Point, PointCloud, Pose, SceneConfig, Vec3};

type Pose7 = [f64; 7];

fn err(e: Error) -> PyErr {
    match e {
        Error::InvalidArgument(_) | Error::DegenerateGeometry(_) | Error::Config { .. } | Error::Parse { .. } => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn cloud(points: &[[f64; 3]]) -> PyResult<PointCloud> {
    PointCloud::new(points.iter().map(|p| Point::new(p[0], p[1], p[2])).collect()).map_err(err)
}

fn cloud_out(c: &PointCloud) -> Vec<[f64; 3]> {
    c.points().iter().map(|p| [p.x, p.y, p.z]).collect()
}

fn pose(v: Pose7) -> PyResult<Pose> {
    Pose::from_array7(v).map_err(err)
}

fn vec3(v: [f64; 3]) -> Vec3 {
    Vec3::new(v[0], v[1], v[2])
}

fn direction(s: &str) -> PyResult<GraspDirection> {
    GraspDirection::parse(s).ok_or_else(|| PyValueError::new_err(format!("unknown grasp direction '{s}'")))
}

fn io(path: &str, e: std::io::Error) -> PyErr {
    err(Error::Io { path: path.to_string(), source: e })
}

#[pyclass(module = "teleop", frozen)]
struct Scene {
    inner: SceneConfig,
}

impl Scene {
    fn object(&self, index: usize) -> PyResult<&ObjectModel> {
        self.inner
            .objects
            .get(index)
            .map(|o| &o.model)
            .ok_or_else(|| PyValueError::new_err(format!("object index {index} out of range")))
    }
}

#[pymethods]
impl Scene {
    #[staticmethod]
    #[pyo3(signature = (seed = 0))]
    fn desk(seed: u64) -> Self {
        Scene { inner: SceneConfig::desk(seed) }
    }

    #[staticmethod]
    #[pyo3(signature = (seed = 0))]
    fn benchmark(seed: u64) -> Self {
        Scene { inner: SceneConfig::benchmark(seed) }
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Scene { inner: SceneConfig::load(path).map_err(err)? })
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Scene { inner: SceneConfig::from_toml_str(text, "<python>").map_err(err)? })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml_string()
    }

    #[getter]
    fn num_objects(&self) -> usize {
        self.inner.num_objects()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    fn labels(&self) -> Vec<String> {
        self.inner.labels().into_iter().map(str::to_string).collect()
    }

    fn positions(&self) -> Vec<[f64; 3]> {
        self.inner.object_positions().iter().map(|p| [p.x, p.y, p.z]).collect()
    }

    fn poses(&self) -> Vec<Pose7> {
        self.inner.objects.iter().map(|o| o.pose.to_array7()).collect()
    }

    fn with_poses(&self, poses: Vec<Pose7>) -> PyResult<Self> {
        let poses = poses.into_iter().map(pose).collect::<PyResult<Vec<_>>>()?;
        Ok(Scene { inner: self.inner.with_poses(&poses).map_err(err)? })
    }

    fn model_points(&self, index: usize) -> PyResult<Vec<[f64; 3]>> {
        Ok(cloud_out(&self.object(index)?.reference_points))
    }

    /// Noisy per-object depth points visible from the scene camera.
    fn render(&self, seed: u64) -> PyResult<Vec<(usize, Vec<[f64; 3]>)>> {
        let obs = scene::render_observation(&self.inner, seed).map_err(err)?;
        Ok(obs.iter().map(|(i, c)| (*i, cloud_out(c))).collect())
    }

    fn mask_pose(&self, points: Vec<[f64; 3]>) -> PyResult<Pose7> {
        let p = registration::mask_pose(&cloud(&points)?, &self.inner.camera, MASK_Z_OFFSET).map_err(err)?;
        Ok(p.to_array7())
    }

    /// Returns `(pose, iterations, converged)`.
    #[pyo3(signature = (index, points, seed = 0))]
    fn mesh_pose(&self, index: usize, points: Vec<[f64; 3]>, seed: u64) -> PyResult<(Pose7, usize, bool)> {
        let params = CpdParams { seed, ..CpdParams::default() };
        let r = registration::mesh_pose(self.object(index)?, &cloud(&points)?, &self.inner.camera, &params).map_err(err)?;
        Ok((r.pose.to_array7(), r.iterations_used, r.converged))
    }

    fn __repr__(&self) -> String {
        format!("Scene(objects={:?}, seed={})", self.inner.labels(), self.inner.seed)
    }
}

#[pyfunction]
fn add_s(model_points: Vec<[f64; 3]>, gt: Pose7, est: Pose7) -> PyResult<f64> {
    metrics::add_s(&cloud(&model_points)?, &pose(gt)?, &pose(est)?).map_err(err)
}

#[pyfunction]
fn auc(errors: Vec<f64>) -> PyResult<f64> {
    metrics::auc(&errors).map_err(err)
}

#[pyfunction]
fn pct_below(errors: Vec<f64>, threshold: f64) -> PyResult<f64> {
    metrics::pct_below(&errors, threshold).map_err(err)
}

/// Rigid CPD of `reference` onto `observed`. Returns `(pose, iterations, converged)`.
#[pyfunction]
#[pyo3(signature = (reference, observed, init = None, seed = 0))]
fn cpd_rigid(reference: Vec<[f64; 3]>, observed: Vec<[f64; 3]>, init: Option<Pose7>, seed: u64) -> PyResult<(Pose7, usize, bool)> {
    let init = match init {
        Some(p) => pose(p)?,
        None => Pose::identity(),
    };
    let params = CpdParams { seed, ..CpdParams::default() };
    let r = registration::cpd_rigid(&cloud(&reference)?, &cloud(&observed)?, &init, &params).map_err(err)?;
    Ok((r.pose.to_array7(), r.iterations_used, r.converged))
}

#[pyclass(module = "teleop")]
struct Tracker {
    model: ObjectModel,
    state: ParticleSet,
}

#[pymethods]
impl Tracker {
    #[new]
    #[pyo3(signature = (scene, index, init, num_particles = 200, seed = 0, camera_culling = true))]
    fn new(scene: &Scene, index: usize, init: Pose7, num_particles: usize, seed: u64, camera_culling: bool) -> PyResult<Self> {
        let config = TrackerConfig {
            num_particles,
            seed,
            camera: camera_culling.then_some(scene.inner.camera),
            ..TrackerConfig::default()
        };
        let state = tracker::init_tracker(&pose(init)?, config).map_err(err)?;
        Ok(Tracker { model: scene.object(index)?.clone(), state })
    }

    fn step(&mut self, points: Vec<[f64; 3]>) -> PyResult<Pose7> {
        self.state = tracker::track_step(&self.state, &self.model, &cloud(&points)?).map_err(err)?;
        Ok(self.state.estimate().to_array7())
    }

    fn estimate(&self) -> Pose7 {
        self.state.estimate().to_array7()
    }

    #[getter]
    fn steps(&self) -> usize {
        self.state.step_count()
    }
}

#[pyfunction]
fn extract_features(
    position: [f64; 3],
    direction: [f64; 3],
    palm_normal: [f64; 3],
    y_rotation: f64,
    object_positions: Vec<[f64; 3]>,
) -> PyResult<Vec<f64>> {
    let hand = HandState {
        position: vec3(position),
        direction: vec3(direction),
        palm_normal: vec3(palm_normal),
        y_rotation,
        timestamp: 0.0,
    };
    let objects: Vec<Vec3> = object_positions.into_iter().map(vec3).collect();
    Ok(intent::extract_features(&hand, &objects).map_err(err)?.values().to_vec())
}

fn feature_vector(v: &[f64]) -> PyResult<intent::FeatureVector> {
    let arr: [f64; intent::NUM_FEATURES] = v
        .try_into()
        .map_err(|_| PyValueError::new_err(format!("expected {} features, got {}", intent::NUM_FEATURES, v.len())))?;
    Ok(intent::FeatureVector(arr))
}

fn read_dataset(path: &str) -> PyResult<Vec<intent::LabeledTrajectory>> {
    let f = File::open(path).map_err(|e| io(path, e))?;
    intent::read_dataset(BufReader::new(f), path).map_err(err)
}

#[pyclass(module = "teleop", frozen)]
struct Model {
    inner: MlpParams,
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Model { inner: MlpParams::read_file(path).map_err(err)? })
    }

    #[staticmethod]
    #[pyo3(signature = (dataset_path, epochs = 10, seed = 0))]
    fn train(py: Python<'_>, dataset_path: &str, epochs: usize, seed: u64) -> PyResult<Self> {
        let data = read_dataset(dataset_path)?;
        let cfg = TrainConfig { epochs, seed, ..TrainConfig::default() };
        let inner = py.detach(|| intent::train(&data, &cfg)).map_err(err)?;
        Ok(Model { inner })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.write_file(path).map_err(err)
    }

    #[getter]
    fn num_parameters(&self) -> usize {
        self.inner.num_parameters()
    }

    #[getter]
    fn final_loss(&self) -> Option<f64> {
        self.inner.metadata.final_loss
    }

    /// Returns `(object_probabilities, direction_probabilities)`.
    fn forward(&self, features: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let (o, d) = intent::mlp_forward(&self.inner, &feature_vector(&features)?).map_err(err)?;
        Ok((intent::softmax(o.as_slice()), intent::softmax(d.as_slice())))
    }

    /// Returns `(object, direction)`; `available` masks retrieved objects.
    #[pyo3(signature = (features, available = None))]
    fn predict(&self, features: Vec<f64>, available: Option<Vec<bool>>) -> PyResult<(usize, String)> {
        let p = intent::predict(&self.inner, &feature_vector(&features)?, available.as_deref()).map_err(err)?;
        Ok((p.object, p.direction.as_str().to_string()))
    }

    /// Mean per-trajectory `(object, direction)` accuracy over the progress range.
    #[pyo3(signature = (dataset_path, start = 0.7, end = 1.0))]
    fn accuracy(&self, dataset_path: &str, start: f64, end: f64) -> PyResult<(f64, f64)> {
        let data = read_dataset(dataset_path)?;
        intent::accuracy_in_progress_range(&self.inner, &data, start, end).map_err(err)
    }
}

#[pyclass(module = "teleop")]
struct Gate {
    inner: GateState,
}

#[pymethods]
impl Gate {
    #[new]
    #[pyo3(signature = (consecutive_required = 80, warmup_steps = 300))]
    fn new(consecutive_required: usize, warmup_steps: usize) -> PyResult<Self> {
        if consecutive_required == 0 {
            return Err(PyValueError::new_err("consecutive_required must be at least 1"));
        }
        Ok(Gate { inner: GateState::new(GateConfig { consecutive_required, warmup_steps }) })
    }

    /// Feeds one prediction; returns the commit step when this call commits.
    fn observe(&mut self, object: usize, direction: &str) -> PyResult<Option<usize>> {
        let prediction = intent::Prediction { object, direction: self::direction(direction)? };
        Ok(self.inner.observe(prediction).map(|c| c.step))
    }

    /// `(object, direction, step)` once committed.
    #[getter]
    fn committed(&self) -> Option<(usize, String, usize)> {
        self.inner.committed.map(|c| (c.prediction.object, c.prediction.direction.as_str().to_string(), c.step))
    }

    #[getter]
    fn step(&self) -> usize {
        self.inner.step
    }

    #[getter]
    fn run_length(&self) -> usize {
        self.inner.run_length
    }

    #[getter]
    fn progress(&self) -> f64 {
        self.inner.progress()
    }
}

/// Writes `count` synthetic reach trajectories as JSON lines.
#[pyfunction]
#[pyo3(signature = (scene, count, path, seed = 0, rate = simuser::DEFAULT_RATE))]
fn generate_dataset(py: Python<'_>, scene: &Scene, count: usize, path: &str, seed: u64, rate: f64) -> PyResult<usize> {
    let data = py
        .detach(|| simuser::generate_dataset(&scene.inner, count, rate, &ReachOptions::default(), seed))
        .map_err(err)?;
    let f = File::create(path).map_err(|e| io(path, e))?;
    intent::write_dataset(&data, BufWriter::new(f)).map_err(err)?;
    Ok(data.len())
}

fn parse_list<T>(names: Option<Vec<String>>, all: &[T], parse: impl Fn(&str) -> Option<T>) -> PyResult<Vec<T>>
where
    T: Copy,
{
    match names {
        None => Ok(all.to_vec()),
        Some(v) => v
            .iter()
            .map(|s| parse(s).ok_or_else(|| PyValueError::new_err(format!("unknown name '{s}'"))))
            .collect(),
    }
}

/// Early/Late traded-control grid; one dict per (user, mode).
#[pyfunction]
#[pyo3(signature = (scene, model, episodes = 12, seed = 0, users = None, modes = None))]
fn run_experiment<'py>(
    py: Python<'py>,
    scene: &Scene,
    model: &Model,
    episodes: usize,
    seed: u64,
    users: Option<Vec<String>>,
    modes: Option<Vec<String>>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let spec = control::ExperimentSpec {
        users: parse_list(users, &UserKind::ALL, UserKind::parse)?,
        modes: parse_list(modes, &Mode::ALL, Mode::parse)?,
        episodes,
        seed,
        ..control::ExperimentSpec::default()
    };
    let (rows, _) = py.detach(|| control::run_experiment(&spec, &scene.inner, &model.inner)).map_err(err)?;
    rows.iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("user", r.user.as_str())?;
            d.set_item("mode", r.mode.as_str())?;
            d.set_item("episodes", r.episodes)?;
            d.set_item("time_until_execution", r.time_until_execution)?;
            d.set_item("episode_duration", r.episode_duration)?;
            d.set_item("object_accuracy", r.object_accuracy)?;
            d.set_item("direction_accuracy", r.direction_accuracy)?;
            d.set_item("fallback_commits", r.fallback_commits)?;
            Ok(d)
        })
        .collect()
}

/// In-process live session speaking the JSON-lines protocol.
#[pyclass(module = "teleop")]
struct Session {
    inner: CoreSession,
}

#[pymethods]
impl Session {
    #[new]
    fn new(scene: &Scene, model: &Model) -> PyResult<Self> {
        let ctx = SessionContext::new(scene.inner.clone(), model.inner.clone(), GateConfig::default(), TimingParams::default())
            .map_err(err)?;
        Ok(Session { inner: CoreSession::new(Arc::new(ctx)) })
    }

    fn greeting(&self) -> String {
        self.inner.greeting().to_line()
    }

    fn handle_line(&mut self, line: &str) -> Vec<String> {
        self.inner.handle_line(line).iter().map(|m| m.to_line()).collect()
    }
}

#[pymodule]
fn teleop(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Scene>()?;
    m.add_class::<Tracker>()?;
    m.add_class::<Model>()?;
    m.add_class::<Gate>()?;
    m.add_class::<Session>()?;
    m.add_function(wrap_pyfunction!(add_s, m)?)?;
    m.add_function(wrap_pyfunction!(auc, m)?)?;
    m.add_function(wrap_pyfunction!(pct_below, m)?)?;
    m.add_function(wrap_pyfunction!(cpd_rigid, m)?)?;
    m.add_function(wrap_pyfunction!(extract_features, m)?)?;
    m.add_function(wrap_pyfunction!(generate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
