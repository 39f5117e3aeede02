//! Rigid poses and point clouds.

use std::io::{Read, Write};

use nalgebra::{Isometry3, Point3, Translation3, Unit, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Point = Point3<f64>;

/// Rigid transform: a unit-quaternion rotation followed by a translation in
/// meters. Maps points from a child frame into the parent frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose(Isometry3<f64>);

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Pose(Isometry3::identity())
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vec3) -> Self {
        Pose(Isometry3::from_parts(Translation3::from(translation), rotation))
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self::new(UnitQuaternion::identity(), translation)
    }

    /// Rotation of `angle` radians about `axis` (need not be normalized),
    /// then `translation`.
    pub fn from_axis_angle(axis: Vec3, angle: f64, translation: Vec3) -> Self {
        let rotation = Unit::try_new(axis, 1e-12)
            .map(|a| UnitQuaternion::from_axis_angle(&a, angle))
            .unwrap_or_else(UnitQuaternion::identity);
        Self::new(rotation, translation)
    }

    /// Parses `[qw, qx, qy, qz, tx, ty, tz]`. The quaternion must have unit
    /// norm within 1e-6; it is renormalized exactly.
    pub fn from_array7(v: [f64; 7]) -> Result<Self> {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("pose contains non-finite values"));
        }
        let q = nalgebra::Quaternion::new(v[0], v[1], v[2], v[3]);
        let norm = q.norm();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!("pose quaternion norm {norm} is not 1")));
        }
        // Leave already-normalized input bit-exact so files round-trip.
        let rotation = if (norm - 1.0).abs() <= 4.0 * f64::EPSILON {
            UnitQuaternion::new_unchecked(q)
        } else {
            UnitQuaternion::from_quaternion(q)
        };
        Ok(Self::new(rotation, Vec3::new(v[4], v[5], v[6])))
    }

    pub fn to_array7(&self) -> [f64; 7] {
        let q = self.rotation().into_inner();
        let t = self.translation();
        [q.w, q.i, q.j, q.k, t.x, t.y, t.z]
    }

    pub fn rotation(&self) -> UnitQuaternion<f64> {
        self.0.rotation
    }

    pub fn translation(&self) -> Vec3 {
        self.0.translation.vector
    }

    pub fn isometry(&self) -> &Isometry3<f64> {
        &self.0
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose(self.0 * other.0)
    }

    pub fn inverse(&self) -> Pose {
        Pose(self.0.inverse())
    }

    pub fn transform_point(&self, p: &Point) -> Point {
        self.0.transform_point(p)
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.0.rotation * v
    }

    pub fn transform_cloud(&self, cloud: &PointCloud) -> PointCloud {
        PointCloud {
            points: cloud.points.iter().map(|p| self.transform_point(p)).collect(),
        }
    }
}

impl From<Isometry3<f64>> for Pose {
    fn from(iso: Isometry3<f64>) -> Self {
        Pose(iso)
    }
}

/// Non-empty list of finite 3D points in meters.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<Point>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("point cloud must contain at least one point"));
        }
        if points.iter().any(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid("point cloud contains non-finite coordinates"));
        }
        Ok(PointCloud { points })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false; kept for API symmetry with collections.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Point {
        let sum = self.points.iter().fold(Vec3::zeros(), |acc, p| acc + p.coords);
        Point::from(sum / self.points.len() as f64)
    }

    /// Writes `x,y,z` CSV with a header row.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let wrap = |e: csv::Error| Error::Parse {
            location: "point cloud csv".into(),
            message: e.to_string(),
        };
        w.write_record(["x", "y", "z"]).map_err(wrap)?;
        for p in &self.points {
            w.write_record([p.x.to_string(), p.y.to_string(), p.z.to_string()])
                .map_err(wrap)?;
        }
        w.flush().map_err(|e| Error::io("point cloud csv", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers().map_err(|e| Error::Parse {
            location: "point cloud csv header".into(),
            message: e.to_string(),
        })?;
        if headers != vec!["x", "y", "z"] {
            return Err(Error::Parse {
                location: "point cloud csv header".into(),
                message: format!("expected x,y,z, found {}", headers.iter().collect::<Vec<_>>().join(",")),
            });
        }
        let mut points = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let location = format!("point cloud csv line {}", i + 2);
            let rec = rec.map_err(|e| Error::Parse {
                location: location.clone(),
                message: e.to_string(),
            })?;
            let mut xyz = [0.0; 3];
            for (k, v) in xyz.iter_mut().enumerate() {
                *v = rec
                    .get(k)
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::Parse {
                        location: location.clone(),
                        message: "expected three numeric fields".into(),
                    })?;
            }
            points.push(Point::new(xyz[0], xyz[1], xyz[2]));
        }
        PointCloud::new(points)
    }
}
