use super::gate::Prediction;
use super::mlp::{mlp_forward, MlpParams};
use super::{FeatureVector, LabeledTrajectory};
use crate::error::{Error, Result};
use crate::scene::GraspDirection;

/// First index of the maximum among allowed entries.
fn argmax(scores: &[f64], allowed: Option<&[bool]>) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if allowed.is_some_and(|a| !a.get(i).copied().unwrap_or(false)) {
            continue;
        }
        if best.is_none_or(|b| s > scores[b]) {
            best = Some(i);
        }
    }
    best
}

/// Argmax prediction per head. `available_objects` masks out objects that
/// may not be predicted (e.g. already retrieved ones).
pub fn predict(params: &MlpParams, features: &FeatureVector, available_objects: Option<&[bool]>) -> Result<Prediction> {
    let (o, d) = mlp_forward(params, features)?;
    let object = argmax(o.as_slice(), available_objects).ok_or_else(|| Error::invalid("no object is available for prediction"))?;
    let direction = GraspDirection::from_index(argmax(d.as_slice(), None).unwrap_or(0))
        .ok_or_else(|| Error::invalid("model direction head is wider than the known directions"))?;
    Ok(Prediction { object, direction })
}

/// Mean accuracies of one progress bin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BinAccuracy {
    pub progress_start: f64,
    pub progress_end: f64,
    pub object: f64,
    pub direction: f64,
    /// Trajectories contributing to the bin.
    pub trajectories: usize,
}

/// Progress of sample `i` among `n`, in `[0, 1]`.
fn progress(i: usize, n: usize) -> f64 {
    if n <= 1 {
        1.0
    } else {
        i as f64 / (n - 1) as f64
    }
}

/// Per-trajectory correctness of every timestep, as (progress, object ok, direction ok).
fn correctness(params: &MlpParams, traj: &LabeledTrajectory) -> Result<Vec<(f64, bool, bool)>> {
    let feats = traj.features()?;
    let n = feats.len();
    feats
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let p = predict(params, f, None)?;
            Ok((progress(i, n), p.object == traj.target_object, p.direction == traj.grasp_direction))
        })
        .collect()
}

/// Accuracy per normalized-progress bin. Each trajectory's accuracy within a
/// bin is computed first and then averaged over trajectories, so long and
/// short demonstrations weigh equally.
pub fn accuracy_over_progress(params: &MlpParams, trajectories: &[LabeledTrajectory], bins: usize) -> Result<Vec<BinAccuracy>> {
    if bins < 2 {
        return Err(Error::invalid("need at least 2 bins"));
    }
    if trajectories.is_empty() {
        return Err(Error::invalid("no trajectories to evaluate"));
    }
    let mut obj_sum = vec![0.0; bins];
    let mut dir_sum = vec![0.0; bins];
    let mut count = vec![0usize; bins];
    for traj in trajectories {
        let mut hits = vec![(0usize, 0usize, 0usize); bins];
        for (p, o, d) in correctness(params, traj)? {
            let b = ((p * bins as f64) as usize).min(bins - 1);
            hits[b].0 += usize::from(o);
            hits[b].1 += usize::from(d);
            hits[b].2 += 1;
        }
        for (b, &(o, d, n)) in hits.iter().enumerate() {
            if n > 0 {
                obj_sum[b] += o as f64 / n as f64;
                dir_sum[b] += d as f64 / n as f64;
                count[b] += 1;
            }
        }
    }
    Ok((0..bins)
        .map(|b| {
            let c = count[b].max(1) as f64;
            BinAccuracy {
                progress_start: b as f64 / bins as f64,
                progress_end: (b + 1) as f64 / bins as f64,
                object: obj_sum[b] / c,
                direction: dir_sum[b] / c,
                trajectories: count[b],
            }
        })
        .collect())
}

/// (object, direction) accuracy over samples whose progress lies in
/// `[from, to]`, averaged over trajectories.
pub fn accuracy_in_progress_range(params: &MlpParams, trajectories: &[LabeledTrajectory], from: f64, to: f64) -> Result<(f64, f64)> {
    if trajectories.is_empty() {
        return Err(Error::invalid("no trajectories to evaluate"));
    }
    let (mut o_sum, mut d_sum, mut used) = (0.0, 0.0, 0usize);
    for traj in trajectories {
        let c: Vec<_> = correctness(params, traj)?.into_iter().filter(|(p, _, _)| *p >= from && *p <= to).collect();
        if c.is_empty() {
            continue;
        }
        o_sum += c.iter().filter(|x| x.1).count() as f64 / c.len() as f64;
        d_sum += c.iter().filter(|x| x.2).count() as f64 / c.len() as f64;
        used += 1;
    }
    if used == 0 {
        return Err(Error::invalid("progress range contains no samples"));
    }
    Ok((o_sum / used as f64, d_sum / used as f64))
}

/// Writes `bin_start,bin_end,object_accuracy,direction_accuracy,trajectories`.
pub fn write_progress_csv<W: std::io::Write>(bins: &[BinAccuracy], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::invalid(format!("csv write failed: {e}"));
    w.write_record(["bin_start", "bin_end", "object_accuracy", "direction_accuracy", "trajectories"]).map_err(io)?;
    for b in bins {
        w.write_record([
            format!("{}", b.progress_start),
            format!("{}", b.progress_end),
            format!("{}", b.object),
            format!("{}", b.direction),
            b.trajectories.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::invalid(format!("csv flush failed: {e}")))
}

/// Reads the output of [`write_progress_csv`].
pub fn read_progress_csv<R: std::io::Read>(reader: R) -> Result<Vec<BinAccuracy>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let loc = format!("row {}", i + 2);
        let rec = rec.map_err(|e| Error::Parse { location: loc.clone(), message: e.to_string() })?;
        let f = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse { location: loc.clone(), message: format!("bad column {k}") })
        };
        out.push(BinAccuracy {
            progress_start: f(0)?,
            progress_end: f(1)?,
            object: f(2)?,
            direction: f(3)?,
            trajectories: f(4)? as usize,
        });
    }
    Ok(out)
}
