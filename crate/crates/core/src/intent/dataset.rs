//! Line-delimited JSON trajectory dataset (one trajectory per line).

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{HandState, LabeledTrajectory};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::scene::GraspDirection;

/// Column order of every entry in a record's `steps` array.
pub const DATASET_COLUMNS: [&str; 11] = ["t", "px", "py", "pz", "dx", "dy", "dz", "nx", "ny", "nz", "yrot"];

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    target_object: usize,
    grasp_direction: String,
    rate: f64,
    duration: f64,
    objects: Vec<[f64; 3]>,
    steps: Vec<[f64; 11]>,
}

impl From<&LabeledTrajectory> for Record {
    fn from(t: &LabeledTrajectory) -> Self {
        Record {
            id: t.id.clone(),
            target_object: t.target_object,
            grasp_direction: t.grasp_direction.as_str().to_string(),
            rate: t.rate,
            duration: t.duration,
            objects: t.object_positions.iter().map(|p| [p.x, p.y, p.z]).collect(),
            steps: t
                .states
                .iter()
                .map(|s| {
                    [
                        s.timestamp,
                        s.position.x,
                        s.position.y,
                        s.position.z,
                        s.direction.x,
                        s.direction.y,
                        s.direction.z,
                        s.palm_normal.x,
                        s.palm_normal.y,
                        s.palm_normal.z,
                        s.y_rotation,
                    ]
                })
                .collect(),
        }
    }
}

impl Record {
    fn into_trajectory(self) -> std::result::Result<LabeledTrajectory, String> {
        let grasp_direction = GraspDirection::parse(&self.grasp_direction)
            .ok_or_else(|| format!("unknown grasp_direction '{}'", self.grasp_direction))?;
        let states = self
            .steps
            .iter()
            .map(|s| HandState {
                timestamp: s[0],
                position: Vec3::new(s[1], s[2], s[3]),
                direction: Vec3::new(s[4], s[5], s[6]),
                palm_normal: Vec3::new(s[7], s[8], s[9]),
                y_rotation: s[10],
            })
            .collect();
        let t = LabeledTrajectory {
            id: self.id,
            states,
            object_positions: self.objects.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect(),
            target_object: self.target_object,
            grasp_direction,
            rate: self.rate,
            duration: self.duration,
        };
        t.validate().map_err(|e| e.to_string())?;
        Ok(t)
    }
}

pub fn write_dataset<W: Write>(trajectories: &[LabeledTrajectory], mut writer: W) -> Result<()> {
    for t in trajectories {
        let line = serde_json::to_string(&Record::from(t)).map_err(|e| Error::invalid(format!("cannot encode {}: {e}", t.id)))?;
        writeln!(writer, "{line}").map_err(|e| Error::invalid(format!("dataset write failed: {e}")))?;
    }
    Ok(())
}

/// Reads a dataset; blank lines are skipped. Errors carry the line number.
pub fn read_dataset<R: BufRead>(reader: R, source: &str) -> Result<Vec<LabeledTrajectory>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let location = format!("{source}:{}", i + 1);
        let line = line.map_err(|e| Error::Parse { location: location.clone(), message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| Error::Parse { location: location.clone(), message: e.to_string() })?;
        out.push(rec.into_trajectory().map_err(|message| Error::Parse { location, message })?);
    }
    Ok(out)
}
