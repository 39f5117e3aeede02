//! One function per CLI subcommand. Every output file is a deterministic
//! function of the configuration (seed included) and the input files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::config::{load_scene, ExperimentConfig};
use super::pipeline::{self, initialize_poses, track_objects, PipelineReport, PipelineSettings};
use super::server;
use super::session::SessionContext;
use crate::control::{self, SummaryRow};
use crate::error::{Error, Result};
use crate::intent::{self, BinAccuracy, LabeledTrajectory, MlpParams};
use crate::metrics::ErrorSample;
use crate::scene::SceneConfig;
use crate::simuser;

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn scene_for(cfg: &ExperimentConfig, scene: Option<&str>, default: &str) -> Result<SceneConfig> {
    let spec = scene.or(cfg.scene.as_deref()).unwrap_or(default);
    load_scene(spec, cfg.seed)
}

pub fn read_dataset_file(path: &Path) -> Result<Vec<LabeledTrajectory>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    intent::read_dataset(BufReader::new(f), &path.display().to_string())
}

/// `gen-data`: writes `count` labeled demonstrations as JSON lines.
pub fn gen_data(cfg: &ExperimentConfig, scene: Option<&str>, count: usize, out: &Path) -> Result<PathBuf> {
    let scene = scene_for(cfg, scene, "builtin:desk")?;
    let data = simuser::generate_dataset(&scene, count, cfg.users.rate, &cfg.dataset_reach(), cfg.seed)?;
    let path = cfg.output_path(out);
    let mut w = create(&path)?;
    intent::write_dataset(&data, &mut w)?;
    finish(w, &path)?;
    Ok(path)
}

/// `train`: fits the classifier on a dataset file and writes the model.
pub fn train(cfg: &ExperimentConfig, data: &Path, out: &Path) -> Result<(PathBuf, MlpParams)> {
    let dataset = read_dataset_file(data)?;
    let params = intent::train(&dataset, &cfg.train_config()?)?;
    let path = cfg.output_path(out);
    let mut w = create(&path)?;
    w.write_all(params.to_text().as_bytes()).map_err(|e| Error::io(&path, e))?;
    finish(w, &path)?;
    Ok((path, params))
}

/// `eval-intent`: accuracy per progress bin plus the final-30% accuracy.
pub fn eval_intent(cfg: &ExperimentConfig, model: &Path, data: &Path, bins: usize, out: &Path) -> Result<(PathBuf, Vec<BinAccuracy>, (f64, f64))> {
    let params = MlpParams::read_file(model)?;
    let dataset = read_dataset_file(data)?;
    let curve = intent::accuracy_over_progress(&params, &dataset, bins)?;
    let late = intent::accuracy_in_progress_range(&params, &dataset, 0.7, 1.0)?;
    let path = cfg.output_path(out);
    let mut w = create(&path)?;
    intent::write_progress_csv(&curve, &mut w)?;
    finish(w, &path)?;
    Ok((path, curve, late))
}

fn pose_columns(prefix: &str) -> Vec<String> {
    ["qw", "qx", "qy", "qz", "tx", "ty", "tz"].iter().map(|c| format!("{prefix}_{c}")).collect()
}

/// `init-pose`: one row per detection with both initial estimates.
pub fn init_pose(cfg: &ExperimentConfig, scene: Option<&str>, out: &Path) -> Result<PathBuf> {
    let scene = scene_for(cfg, scene, "builtin:benchmark")?;
    let inits = initialize_poses(&scene, &cfg.segmentation_oracle(), &cfg.cpd_params(), scene.seed, 0)?;
    let path = cfg.output_path(out);
    let mut w = csv::Writer::from_writer(create(&path)?);
    let err = |e: csv::Error| Error::invalid(format!("csv write failed: {e}"));
    let mut header = vec!["label".to_string(), "object".to_string()];
    header.extend(pose_columns("mask"));
    header.extend(pose_columns("mesh"));
    header.extend(["iterations", "converged", "mask_add_s", "mesh_add_s"].map(String::from));
    w.write_record(&header).map_err(err)?;
    for init in &inits {
        let obj = &scene.objects[init.object_index];
        let eval = |p| ErrorSample::evaluate(&obj.model.label, &obj.model.reference_points, &obj.pose, p).add_s;
        let mut row = vec![init.label.clone(), obj.model.label.clone()];
        row.extend(init.mask.to_array7().iter().map(f64::to_string));
        row.extend(init.mesh.pose.to_array7().iter().map(f64::to_string));
        row.push(init.mesh.iterations_used.to_string());
        row.push(init.mesh.converged.to_string());
        row.push(eval(&init.mask).to_string());
        row.push(eval(&init.mesh.pose).to_string());
        w.write_record(&row).map_err(err)?;
    }
    let inner = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    finish(inner, &path)?;
    Ok(path)
}

/// Parses `1s,3s` / `0.5,2` into seconds.
pub fn parse_report_times(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            let p = p.trim();
            let v = p.strip_suffix('s').unwrap_or(p);
            v.parse::<f64>().ok().filter(|t| *t > 0.0).ok_or_else(|| Error::invalid(format!("bad report time '{p}'")))
        })
        .collect()
}

/// `track`: initialises from `mesh_pose`, tracks for `frames` frames and
/// reports per-object errors at the requested times.
pub fn track(cfg: &ExperimentConfig, scene: Option<&str>, frames: usize, report_at: &[f64], out: &Path) -> Result<PathBuf> {
    let scene = scene_for(cfg, scene, "builtin:benchmark")?;
    let rate = cfg.tracker.rate_hz;
    let mut times: Vec<f64> = report_at.to_vec();
    if let Some(t) = times.iter().find(|t| (**t * rate).round() as usize > frames) {
        return Err(Error::invalid(format!("report time {t}s lies beyond {frames} frames at {rate} Hz")));
    }
    let end = frames as f64 / rate;
    if frames > 0 && !times.iter().any(|t| (t * rate).round() as usize == frames) {
        times.push(end);
    }
    let inits = initialize_poses(&scene, &cfg.segmentation_oracle(), &cfg.cpd_params(), scene.seed, 0)?;
    let reports = track_objects(&scene, &inits, &cfg.tracker_config(Some(scene.camera)), rate, &times, scene.seed, 0)?;
    let path = cfg.output_path(out);
    let mut w = csv::Writer::from_writer(create(&path)?);
    let err = |e: csv::Error| Error::invalid(format!("csv write failed: {e}"));
    w.write_record(["object", "time", "frame", "add_s", "translation_error", "rotation_error"]).map_err(err)?;
    let mut row = |label: &str, time: f64, frame: usize, e: ErrorSample| {
        w.write_record([label.to_string(), time.to_string(), frame.to_string(), e.add_s.to_string(), e.translation_error.to_string(), e.rotation_error.to_string()])
    };
    for init in &inits {
        let obj = &scene.objects[init.object_index];
        row(&obj.model.label, 0.0, 0, ErrorSample::evaluate(&obj.model.label, &obj.model.reference_points, &obj.pose, &init.mesh.pose)).map_err(err)?;
    }
    for r in &reports {
        let obj = &scene.objects[r.object_index];
        row(&obj.model.label, r.time, r.frame, ErrorSample::evaluate(&obj.model.label, &obj.model.reference_points, &obj.pose, &r.estimate)).map_err(err)?;
    }
    let inner = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    finish(inner, &path)?;
    Ok(path)
}

pub fn pipeline_settings(cfg: &ExperimentConfig, runs: Option<usize>) -> PipelineSettings {
    PipelineSettings {
        runs: runs.unwrap_or(cfg.pipeline.runs),
        yaw_range: cfg.pipeline.yaw_range,
        report_at: cfg.pipeline.report_at.clone(),
        tracker_rate: cfg.tracker.rate_hz,
        segmentation: cfg.segmentation_oracle(),
        cpd: cfg.cpd_params(),
        tracker: cfg.tracker_config(None),
        camera_culling: cfg.tracker.camera_culling,
        seed: cfg.seed,
    }
}

/// `eval-pipeline`: method × object table, plus optional raw records.
pub fn eval_pipeline(cfg: &ExperimentConfig, scene: Option<&str>, runs: Option<usize>, out: &Path, records: Option<&Path>) -> Result<(PathBuf, PipelineReport)> {
    let scene = scene_for(cfg, scene, "builtin:benchmark")?;
    let settings = pipeline_settings(cfg, runs);
    let report = pipeline::run_pipeline_eval(&scene, &settings)?;
    let path = cfg.output_path(out);
    let mut w = create(&path)?;
    pipeline::write_summary_csv(&report.summary, &mut w)?;
    finish(w, &path)?;
    if let Some(rec) = records {
        let rp = cfg.output_path(rec);
        let mut w = create(&rp)?;
        pipeline::write_records_csv(&report.records, &mut w)?;
        finish(w, &rp)?;
    }
    Ok((path, report))
}

/// `teleop-sim`: the users × modes × episodes grid.
pub fn teleop_sim(cfg: &ExperimentConfig, scene: Option<&str>, model: &Path, out: &Path) -> Result<(PathBuf, Vec<SummaryRow>)> {
    let scene = scene_for(cfg, scene, "builtin:desk")?;
    let params = MlpParams::read_file(model)?;
    let (rows, _) = control::run_experiment(&cfg.experiment_spec()?, &scene, &params)?;
    let path = cfg.output_path(out);
    let mut w = create(&path)?;
    control::write_summary_csv(&rows, &mut w)?;
    finish(w, &path)?;
    Ok((path, rows))
}

/// Loads everything `serve` needs; fails fast on bad inputs.
pub fn session_context(cfg: &ExperimentConfig, scene: Option<&str>, model: &Path) -> Result<SessionContext> {
    let scene = scene_for(cfg, scene, "builtin:desk")?;
    let params = MlpParams::read_file(model)?;
    SessionContext::new(scene, params, cfg.gate_config(), cfg.timing())
}

/// `serve`: blocks serving sessions on the configured bind address.
pub fn serve(cfg: &ExperimentConfig, scene: Option<&str>, model: &Path) -> Result<()> {
    let ctx = Arc::new(session_context(cfg, scene, model)?);
    let listener = std::net::TcpListener::bind(&cfg.serve.bind).map_err(|e| Error::io(&cfg.serve.bind, e))?;
    eprintln!("listening on {}", listener.local_addr().map_err(|e| Error::io(&cfg.serve.bind, e))?);
    server::serve(listener, ctx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_time_parsing() {
        assert_eq!(parse_report_times("1s,3s").unwrap(), vec![1.0, 3.0]);
        assert_eq!(parse_report_times("0.5, 2").unwrap(), vec![0.5, 2.0]);
        assert!(parse_report_times("soon").is_err());
        assert!(parse_report_times("0s").is_err());
    }
}
