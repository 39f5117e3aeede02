//! Pose initialization, tracking, and the benchmark that compares them.

use std::io::Write;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::metrics::{accuracy_curve, pct_below, ErrorSample, AUC_MAX_THRESHOLD, AUC_STEPS, GRASP_TOLERANCE};
use crate::registration::{mask_pose, mesh_pose, CpdParams, RegistrationResult, MASK_Z_OFFSET};
use crate::rng;
use crate::scene::{render_observation, yawed, SceneConfig, SegmentationOracle};
use crate::tracker::{init_tracker, track_step, ParticleSet, TrackerConfig};

/// Initial estimates for one detected object.
#[derive(Clone, Debug)]
pub struct PoseInit {
    /// Ground-truth index of the detected object (for evaluation only).
    pub object_index: usize,
    /// Label reported by segmentation; selects the model that was fitted.
    pub label: String,
    pub model_index: usize,
    pub mask: Pose,
    pub mesh: RegistrationResult,
}

fn frame_seed(seed: u64, run: u64, frame: u64) -> u64 {
    rng::derive_seed(seed, "frame", (run << 20) | frame)
}

/// Segments one rendered frame and computes `mask_pose` and `mesh_pose`
/// for every detection. Detections too degenerate to register are skipped.
pub fn initialize_poses(scene: &SceneConfig, oracle: &SegmentationOracle, cpd: &CpdParams, seed: u64, run: u64) -> Result<Vec<PoseInit>> {
    let obs = render_observation(scene, frame_seed(seed, run, 0))?;
    let detections = oracle.segment(scene, &obs, rng::derive_seed(seed, "segment", run))?;
    let mut out = Vec::with_capacity(detections.len());
    for det in detections {
        let model_index = scene
            .objects
            .iter()
            .position(|o| o.model.label == det.label)
            .ok_or_else(|| Error::invalid(format!("detector reported unknown label {}", det.label)))?;
        let model = &scene.objects[model_index].model;
        let mask = mask_pose(&det.cloud, &scene.camera, MASK_Z_OFFSET)?;
        let mesh = match mesh_pose(model, &det.cloud, &scene.camera, cpd) {
            Ok(m) => m,
            Err(Error::DegenerateGeometry(msg)) => {
                log::warn!("skipping {}: {msg}", det.label);
                continue;
            }
            Err(e) => return Err(e),
        };
        out.push(PoseInit { object_index: det.object_index, label: det.label, model_index, mask, mesh });
    }
    Ok(out)
}

/// Tracker estimate of one object at a report time.
#[derive(Clone, Debug)]
pub struct TrackReport {
    pub object_index: usize,
    pub model_index: usize,
    pub time: f64,
    pub frame: usize,
    pub estimate: Pose,
}

/// Runs one particle filter per initialization over `frames` frames at
/// `rate` Hz, reporting estimates at the given times (seconds).
pub fn track_objects(
    scene: &SceneConfig,
    inits: &[PoseInit],
    config: &TrackerConfig,
    rate: f64,
    report_at: &[f64],
    seed: u64,
    run: u64,
) -> Result<Vec<TrackReport>> {
    if !(rate > 0.0) {
        return Err(Error::invalid("tracker rate must be positive"));
    }
    let report_frames: Vec<usize> = report_at.iter().map(|t| (t * rate).round().max(1.0) as usize).collect();
    let frames = report_frames.iter().copied().max().unwrap_or(0);
    let mut states: Vec<ParticleSet> = inits
        .iter()
        .map(|init| {
            let cfg = TrackerConfig { seed: rng::derive_seed(seed, "tracker", (run << 8) | init.object_index as u64), ..config.clone() };
            init_tracker(&init.mesh.pose, cfg)
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for frame in 1..=frames {
        let obs = render_observation(scene, frame_seed(seed, run, frame as u64))?;
        for (init, state) in inits.iter().zip(states.iter_mut()) {
            let Some((_, cloud)) = obs.iter().find(|(i, _)| *i == init.object_index) else {
                continue;
            };
            let model = &scene.objects[init.model_index].model;
            *state = match track_step(state, model, cloud) {
                Ok(s) => s,
                Err(Error::TrackerDiverged { last_estimate, .. }) => {
                    log::warn!("tracker for {} diverged at frame {frame}; restarting", init.label);
                    init_tracker(&last_estimate, state.config().clone())?
                }
                Err(e) => return Err(e),
            };
        }
        for (k, &rf) in report_frames.iter().enumerate() {
            if rf == frame {
                for (init, state) in inits.iter().zip(&states) {
                    out.push(TrackReport {
                        object_index: init.object_index,
                        model_index: init.model_index,
                        time: report_at[k],
                        frame,
                        estimate: state.estimate(),
                    });
                }
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineSettings {
    pub runs: usize,
    pub yaw_range: f64,
    pub report_at: Vec<f64>,
    pub tracker_rate: f64,
    pub segmentation: SegmentationOracle,
    pub cpd: CpdParams,
    pub tracker: TrackerConfig,
    /// Restrict tracker likelihoods to model points facing the scene camera.
    pub camera_culling: bool,
    pub seed: u64,
}

impl PipelineSettings {
    /// Benchmark settings: every object detected with its true label and
    /// masks that bleed into the support surface.
    pub fn benchmark(seed: u64, runs: usize) -> Self {
        PipelineSettings {
            runs,
            yaw_range: 1.5,
            report_at: vec![1.0, 3.0],
            tracker_rate: 10.0,
            segmentation: SegmentationOracle { detection_rate: 1.0, label_error_rate: 0.0, boundary_bleed: 0.15, ..SegmentationOracle::default() },
            cpd: CpdParams::default(),
            tracker: TrackerConfig::default(),
            camera_culling: true,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineRecord {
    pub run: usize,
    pub method: String,
    pub error: ErrorSample,
}

/// One row of the method × object table.
#[derive(Clone, Debug, PartialEq)]
pub struct MethodSummary {
    pub method: String,
    /// Object label, or `mean` for the average over objects.
    pub object: String,
    pub samples: usize,
    pub auc: f64,
    pub below_2cm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineReport {
    pub records: Vec<PipelineRecord>,
    pub summary: Vec<MethodSummary>,
}

impl PipelineReport {
    pub fn mean(&self, method: &str) -> Option<&MethodSummary> {
        self.summary.iter().find(|s| s.method == method && s.object == "mean")
    }

    pub fn methods(&self) -> Vec<String> {
        let mut m: Vec<String> = Vec::new();
        for r in &self.records {
            if !m.contains(&r.method) {
                m.push(r.method.clone());
            }
        }
        m
    }
}

pub fn tracker_method_name(t: f64) -> String {
    format!("tracker@{t}s")
}

/// Compares `mask_pose`, `mesh_pose` and the tracker at each report time
/// over seeded runs in which every object is yawed randomly.
pub fn run_pipeline_eval(scene: &SceneConfig, settings: &PipelineSettings) -> Result<PipelineReport> {
    if settings.runs == 0 {
        return Err(Error::invalid("pipeline evaluation needs at least one run"));
    }
    let camera = settings.camera_culling.then_some(scene.camera);
    let tracker_cfg = TrackerConfig { camera, ..settings.tracker.clone() };
    let mut records = Vec::new();
    for run in 0..settings.runs {
        let mut rng = rng::indexed_stream(settings.seed, "pipeline-yaw", run as u64);
        let poses: Vec<Pose> = scene
            .objects
            .iter()
            .map(|o| yawed(&o.pose, (rng.random::<f64>() - 0.5) * settings.yaw_range))
            .collect();
        let s = scene.with_poses(&poses)?;
        let inits = initialize_poses(&s, &settings.segmentation, &settings.cpd, settings.seed, run as u64)?;
        let reports = track_objects(&s, &inits, &tracker_cfg, settings.tracker_rate, &settings.report_at, settings.seed, run as u64)?;
        let evaluate = |idx: usize, est: &Pose| {
            let o = &s.objects[idx];
            ErrorSample::evaluate(&o.model.label, &o.model.reference_points, &o.pose, est)
        };
        for init in &inits {
            records.push(PipelineRecord { run, method: "mask".into(), error: evaluate(init.object_index, &init.mask) });
            records.push(PipelineRecord { run, method: "mesh".into(), error: evaluate(init.object_index, &init.mesh.pose) });
        }
        for r in &reports {
            records.push(PipelineRecord { run, method: tracker_method_name(r.time), error: evaluate(r.object_index, &r.estimate) });
        }
    }
    let summary = summarize(scene, &records)?;
    Ok(PipelineReport { records, summary })
}

fn summarize(scene: &SceneConfig, records: &[PipelineRecord]) -> Result<Vec<MethodSummary>> {
    let mut methods: Vec<&str> = Vec::new();
    for r in records {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    let mut out = Vec::new();
    for method in methods {
        let mut per_object = Vec::new();
        for label in scene.labels() {
            let errs: Vec<f64> = records.iter().filter(|r| r.method == method && r.error.object_label == label).map(|r| r.error.add_s).collect();
            if errs.is_empty() {
                continue;
            }
            let row = MethodSummary {
                method: method.to_string(),
                object: label.to_string(),
                samples: errs.len(),
                auc: accuracy_curve(&errs, AUC_MAX_THRESHOLD, AUC_STEPS)?.auc,
                below_2cm: pct_below(&errs, GRASP_TOLERANCE)?,
            };
            per_object.push(row);
        }
        let n = per_object.len() as f64;
        let mean = MethodSummary {
            method: method.to_string(),
            object: "mean".into(),
            samples: per_object.iter().map(|r| r.samples).sum(),
            auc: per_object.iter().map(|r| r.auc).sum::<f64>() / n,
            below_2cm: per_object.iter().map(|r| r.below_2cm).sum::<f64>() / n,
        };
        out.extend(per_object);
        out.push(mean);
    }
    Ok(out)
}

fn csv_err(e: csv::Error) -> Error {
    Error::invalid(format!("csv write failed: {e}"))
}

/// `method,object,samples,auc,below_2cm` (one block per method, `mean` last).
pub fn write_summary_csv<W: Write>(rows: &[MethodSummary], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["method", "object", "samples", "auc", "below_2cm"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([r.method.clone(), r.object.clone(), r.samples.to_string(), r.auc.to_string(), r.below_2cm.to_string()])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::invalid(e.to_string()))
}

pub fn read_summary_csv<R: std::io::Read>(reader: R) -> Result<Vec<MethodSummary>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let location = format!("row {}", i + 2);
        let perr = |m: String| Error::Parse { location: location.clone(), message: m };
        let rec = rec.map_err(|e| perr(e.to_string()))?;
        if rec.len() != 5 {
            return Err(perr("expected 5 columns".into()));
        }
        out.push(MethodSummary {
            method: rec[0].to_string(),
            object: rec[1].to_string(),
            samples: rec[2].parse().map_err(|_| perr("bad samples".into()))?,
            auc: rec[3].parse().map_err(|_| perr("bad auc".into()))?,
            below_2cm: rec[4].parse().map_err(|_| perr("bad below_2cm".into()))?,
        });
    }
    Ok(out)
}

/// `run,method,object,add_s,translation_error,rotation_error`.
pub fn write_records_csv<W: Write>(records: &[PipelineRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["run", "method", "object", "add_s", "translation_error", "rotation_error"]).map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.run.to_string(),
            r.method.clone(),
            r.error.object_label.clone(),
            r.error.add_s.to_string(),
            r.error.translation_error.to_string(),
            r.error.rotation_error.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::invalid(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_full_view_all_within_tolerance() {
        let mut scene = SceneConfig::benchmark(2);
        scene.camera.noise_sigma = 0.0;
        scene.camera.culling = false;
        let mut settings = PipelineSettings::benchmark(5, 1);
        settings.segmentation.boundary_bleed = 0.0;
        settings.report_at = vec![0.2];
        settings.tracker.num_particles = 50;
        let report = run_pipeline_eval(&scene, &settings).unwrap();
        assert_eq!(report.methods(), vec!["mask", "mesh", "tracker@0.2s"]);
        for m in report.summary.iter().filter(|s| s.object == "mean") {
            assert_eq!(m.below_2cm, 1.0, "{m:?}");
        }
    }

    #[test]
    fn camera_culling_switch_reaches_the_tracker() {
        let scene = SceneConfig::benchmark(1);
        let mut settings = PipelineSettings::benchmark(3, 1);
        settings.report_at = vec![0.3];
        settings.tracker.num_particles = 40;
        let tracked = |s: &PipelineSettings| -> Vec<f64> {
            run_pipeline_eval(&scene, s).unwrap().records.iter().filter(|r| r.method.starts_with("tracker")).map(|r| r.error.add_s).collect()
        };
        let culled = tracked(&settings);
        settings.camera_culling = false;
        assert_ne!(culled, tracked(&settings));
    }

    #[test]
    fn report_is_deterministic_and_round_trips() {
        let scene = SceneConfig::benchmark(1);
        let mut settings = PipelineSettings::benchmark(3, 1);
        settings.report_at = vec![0.1];
        settings.tracker.num_particles = 20;
        let a = run_pipeline_eval(&scene, &settings).unwrap();
        let b = run_pipeline_eval(&scene, &settings).unwrap();
        let csv = |r: &PipelineReport| {
            let mut buf = Vec::new();
            write_summary_csv(&r.summary, &mut buf).unwrap();
            write_records_csv(&r.records, &mut buf).unwrap();
            buf
        };
        assert_eq!(csv(&a), csv(&b));
        let mut buf = Vec::new();
        write_summary_csv(&a.summary, &mut buf).unwrap();
        assert_eq!(read_summary_csv(buf.as_slice()).unwrap(), a.summary);
    }
}
