//! Objects, scenes and a synthetic depth camera.
//!
//! Objects are parametric primitives sampled on their surfaces. The camera
//! renders labeled point sets directly (no pixels): each object's reference
//! points are moved into the world, optionally culled to the hemisphere
//! facing the camera, and perturbed with isotropic Gaussian noise.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{Isometry3, UnitQuaternion};
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, PointCloud, Pose, Vec3};
use crate::rng;

/// Approach class of a grab.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraspDirection {
    Top,
    Right,
}

impl GraspDirection {
    pub const ALL: [GraspDirection; 2] = [GraspDirection::Top, GraspDirection::Right];
    pub const COUNT: usize = 2;

    pub fn index(self) -> usize {
        match self {
            GraspDirection::Top => 0,
            GraspDirection::Right => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GraspDirection::Top => "top",
            GraspDirection::Right => "right",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "top" => Some(GraspDirection::Top),
            "right" => Some(GraspDirection::Right),
            _ => None,
        }
    }
}

/// Surface primitive, centred on the object frame origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Primitive {
    Sphere { radius: f64 },
    /// Axis-aligned box with edge lengths `size`. A cube when all equal.
    Box { size: [f64; 3] },
    /// Closed cylinder along the object z axis.
    Cylinder { radius: f64, height: f64 },
    /// Lower hemispherical shell of `radius` with a torus lip of tube
    /// radius `rim_radius` around its opening (z = 0).
    Bowl { radius: f64, rim_radius: f64 },
}

impl Primitive {
    pub fn cube(edge: f64) -> Self {
        Primitive::Box { size: [edge; 3] }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            Primitive::Sphere { radius } => *radius > 0.0,
            Primitive::Box { size } => size.iter().all(|s| *s > 0.0),
            Primitive::Cylinder { radius, height } => *radius > 0.0 && *height > 0.0,
            Primitive::Bowl { radius, rim_radius } => *radius > 0.0 && *rim_radius > 0.0 && rim_radius < radius,
        };
        let finite = match self {
            Primitive::Sphere { radius } => radius.is_finite(),
            Primitive::Box { size } => size.iter().all(|s| s.is_finite()),
            Primitive::Cylinder { radius, height } => radius.is_finite() && height.is_finite(),
            Primitive::Bowl { radius, rim_radius } => radius.is_finite() && rim_radius.is_finite(),
        };
        if ok && finite {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid primitive dimensions: {self:?}")))
        }
    }

    pub fn bounding_radius(&self) -> f64 {
        match *self {
            Primitive::Sphere { radius } => radius,
            Primitive::Box { size } => 0.5 * Vec3::from(size).norm(),
            Primitive::Cylinder { radius, height } => radius.hypot(0.5 * height),
            Primitive::Bowl { radius, rim_radius } => radius + rim_radius,
        }
    }

    /// Highest point above the origin along +z and furthest extent along +x.
    fn extents(&self) -> (f64, f64) {
        match *self {
            Primitive::Sphere { radius } => (radius, radius),
            Primitive::Box { size } => (0.5 * size[2], 0.5 * size[0]),
            Primitive::Cylinder { radius, height } => (0.5 * height, radius),
            Primitive::Bowl { radius, rim_radius } => (rim_radius, radius + rim_radius),
        }
    }
}

/// Samples `count` points uniformly by area on the primitive surface,
/// together with outward unit normals.
pub fn sample_surface(primitive: &Primitive, count: usize, seed: u64) -> Result<(PointCloud, Vec<Vec3>)> {
    if count == 0 {
        return Err(Error::invalid("surface sample count must be at least 1"));
    }
    primitive.validate()?;
    let mut rng = rng::stream(seed, "surface");
    let mut points = Vec::with_capacity(count);
    let mut normals = Vec::with_capacity(count);
    for _ in 0..count {
        let (p, n) = sample_one(primitive, &mut rng);
        points.push(Point::from(p));
        normals.push(n);
    }
    Ok((PointCloud::new(points)?, normals))
}

pub fn sample_surface_points(primitive: &Primitive, count: usize, seed: u64) -> Result<PointCloud> {
    sample_surface(primitive, count, seed).map(|(cloud, _)| cloud)
}

fn unit_vector(rng: &mut rng::Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

fn sample_one(primitive: &Primitive, rng: &mut rng::Rng) -> (Vec3, Vec3) {
    match *primitive {
        Primitive::Sphere { radius } => {
            let n = unit_vector(rng);
            (n * radius, n)
        }
        Primitive::Box { size } => {
            let [sx, sy, sz] = size;
            // Face pairs normal to x, y, z.
            let areas = [sy * sz, sx * sz, sx * sy];
            let total: f64 = areas.iter().sum();
            let mut u = rng.random::<f64>() * total;
            let mut axis = 2;
            for (k, a) in areas.iter().enumerate() {
                if u < *a {
                    axis = k;
                    break;
                }
                u -= a;
            }
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let mut p = Vec3::new(
                (rng.random::<f64>() - 0.5) * sx,
                (rng.random::<f64>() - 0.5) * sy,
                (rng.random::<f64>() - 0.5) * sz,
            );
            p[axis] = sign * 0.5 * size[axis];
            let mut n = Vec3::zeros();
            n[axis] = sign;
            (p, n)
        }
        Primitive::Cylinder { radius, height } => {
            let lateral = 2.0 * PI * radius * height;
            let cap = PI * radius * radius;
            let u = rng.random::<f64>() * (lateral + 2.0 * cap);
            let theta = rng.random::<f64>() * 2.0 * PI;
            if u < lateral {
                let z = (rng.random::<f64>() - 0.5) * height;
                let n = Vec3::new(theta.cos(), theta.sin(), 0.0);
                (Vec3::new(radius * n.x, radius * n.y, z), n)
            } else {
                let sign = if u < lateral + cap { 1.0 } else { -1.0 };
                let r = radius * rng.random::<f64>().sqrt();
                (
                    Vec3::new(r * theta.cos(), r * theta.sin(), sign * 0.5 * height),
                    Vec3::new(0.0, 0.0, sign),
                )
            }
        }
        Primitive::Bowl { radius, rim_radius } => {
            let shell = 2.0 * PI * radius * radius;
            let torus = 4.0 * PI * PI * radius * rim_radius;
            if rng.random::<f64>() * (shell + torus) < shell {
                let mut n = unit_vector(rng);
                n.z = -n.z.abs();
                (n * radius, n)
            } else {
                // Area element of the torus is proportional to (R + r cos v).
                let v = loop {
                    let v = rng.random::<f64>() * 2.0 * PI;
                    let accept = (radius + rim_radius * v.cos()) / (radius + rim_radius);
                    if rng.random::<f64>() < accept {
                        break v;
                    }
                };
                let u = rng.random::<f64>() * 2.0 * PI;
                let ring = radius + rim_radius * v.cos();
                (
                    Vec3::new(ring * u.cos(), ring * u.sin(), rim_radius * v.sin()),
                    Vec3::new(v.cos() * u.cos(), v.cos() * u.sin(), v.sin()),
                )
            }
        }
    }
}

/// Where the hand (or gripper) ends up for each approach, in the object frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GraspOffsets {
    pub top: Pose,
    pub right: Pose,
}

impl GraspOffsets {
    pub fn get(&self, direction: GraspDirection) -> &Pose {
        match direction {
            GraspDirection::Top => &self.top,
            GraspDirection::Right => &self.right,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ObjectModel {
    pub label: String,
    pub primitive: Primitive,
    pub reference_points: PointCloud,
    /// Outward surface normal for each reference point.
    pub reference_normals: Vec<Vec3>,
    pub grasp_offsets: GraspOffsets,
    pub bounding_radius: f64,
}

impl ObjectModel {
    pub fn new(label: impl Into<String>, primitive: Primitive, num_points: usize, seed: u64) -> Result<Self> {
        let label = label.into();
        if label.trim().is_empty() {
            return Err(Error::invalid("object label must not be empty"));
        }
        let (reference_points, reference_normals) = sample_surface(&primitive, num_points, seed)?;
        let (top, side) = primitive.extents();
        let grasp_offsets = GraspOffsets {
            top: Pose::from_translation(Vec3::new(0.0, 0.0, top)),
            right: Pose::from_translation(Vec3::new(side, 0.0, 0.0)),
        };
        let bounding_radius = primitive.bounding_radius();
        debug_assert!(reference_points.centroid().coords.norm() < bounding_radius);
        Ok(ObjectModel {
            label,
            primitive,
            reference_points,
            reference_normals,
            grasp_offsets,
            bounding_radius,
        })
    }

    /// Grasp target in the world for an object placed at `pose`.
    pub fn grasp_pose(&self, pose: &Pose, direction: GraspDirection) -> Pose {
        pose.compose(self.grasp_offsets.get(direction))
    }
}

/// Virtual depth camera. The optical axis is the camera frame's +z.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraModel {
    pub pose: Pose,
    pub noise_sigma: f64,
    pub culling: bool,
}

impl CameraModel {
    pub fn new(pose: Pose, noise_sigma: f64, culling: bool) -> Result<Self> {
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(Error::invalid(format!("camera noise_sigma must be >= 0, got {noise_sigma}")));
        }
        Ok(CameraModel { pose, noise_sigma, culling })
    }

    /// Camera at `eye` looking at `target` with world +z as the up hint.
    pub fn looking_at(eye: Vec3, target: Vec3, noise_sigma: f64, culling: bool) -> Result<Self> {
        let iso = Isometry3::face_towards(&Point::from(eye), &Point::from(target), &Vec3::z());
        Self::new(Pose::from(iso), noise_sigma, culling)
    }

    pub fn position(&self) -> Vec3 {
        self.pose.translation()
    }

    /// Optical axis expressed in the world frame.
    pub fn view_axis(&self) -> Vec3 {
        self.pose.transform_vector(&Vec3::z())
    }

    /// Whether a surface element at `point` with outward `normal` faces the camera.
    pub fn sees(&self, point: &Point, normal: &Vec3) -> bool {
        normal.dot(&(self.position() - point.coords)) > 0.0
    }
}

#[derive(Clone, Debug)]
pub struct SceneObject {
    pub model: ObjectModel,
    pub pose: Pose,
}

#[derive(Clone, Debug)]
pub struct SceneConfig {
    pub objects: Vec<SceneObject>,
    pub camera: CameraModel,
    pub seed: u64,
}

impl SceneConfig {
    pub fn new(objects: Vec<SceneObject>, camera: CameraModel, seed: u64) -> Result<Self> {
        for (i, a) in objects.iter().enumerate() {
            for (j, b) in objects.iter().enumerate().skip(i + 1) {
                let d = (a.pose.translation() - b.pose.translation()).norm();
                if d <= a.model.bounding_radius + b.model.bounding_radius {
                    return Err(Error::invalid(format!(
                        "objects {i} ('{}') and {j} ('{}') overlap",
                        a.model.label, b.model.label
                    )));
                }
            }
        }
        Ok(SceneConfig { objects, camera, seed })
    }

    pub fn num_objects(&self) -> usize {
        self.objects.len()
    }

    pub fn labels(&self) -> Vec<&str> {
        self.objects.iter().map(|o| o.model.label.as_str()).collect()
    }

    pub fn object_positions(&self) -> Vec<Vec3> {
        self.objects.iter().map(|o| o.pose.translation()).collect()
    }

    /// Same models, new poses. Used for alternate layouts and per-run
    /// perturbations.
    pub fn with_poses(&self, poses: &[Pose]) -> Result<Self> {
        if poses.len() != self.objects.len() {
            return Err(Error::invalid("pose count does not match object count"));
        }
        let objects = self
            .objects
            .iter()
            .zip(poses)
            .map(|(o, p)| SceneObject { model: o.model.clone(), pose: *p })
            .collect();
        SceneConfig::new(objects, self.camera, self.seed)
    }

    /// Three upright objects on a desk in front of the user: the default
    /// teleoperation scene.
    pub fn desk(seed: u64) -> Self {
        let specs = [
            ("cube", Primitive::cube(0.06), Vec3::new(-0.16, 0.25, 0.03)),
            ("can", Primitive::Cylinder { radius: 0.035, height: 0.12 }, Vec3::new(0.0, 0.32, 0.06)),
            ("ball", Primitive::Sphere { radius: 0.04 }, Vec3::new(0.16, 0.25, 0.04)),
        ];
        Self::from_specs(&specs, seed, 500)
    }

    /// Four-primitive scene used for the pose-initialization and tracking
    /// benchmark: a cuboid, a sphere, a cylinder and a bowl.
    pub fn benchmark(seed: u64) -> Self {
        let specs = [
            ("box", Primitive::Box { size: [0.12, 0.07, 0.05] }, Vec3::new(-0.2, 0.3, 0.025)),
            ("ball", Primitive::Sphere { radius: 0.045 }, Vec3::new(-0.05, 0.22, 0.045)),
            ("can", Primitive::Cylinder { radius: 0.035, height: 0.12 }, Vec3::new(0.09, 0.32, 0.06)),
            ("bowl", Primitive::Bowl { radius: 0.06, rim_radius: 0.008 }, Vec3::new(0.24, 0.2, 0.06)),
        ];
        Self::from_specs(&specs, seed, 500)
    }

    fn from_specs(specs: &[(&str, Primitive, Vec3)], seed: u64, points: usize) -> Self {
        let objects = specs
            .iter()
            .enumerate()
            .map(|(i, (label, prim, pos))| SceneObject {
                model: ObjectModel::new(*label, prim.clone(), points, rng::derive_seed(seed, "model", i as u64))
                    .expect("built-in primitive is valid"),
                pose: Pose::from_translation(*pos),
            })
            .collect();
        let camera = CameraModel::looking_at(Vec3::new(0.0, -0.35, 0.55), Vec3::new(0.0, 0.27, 0.0), 0.001, true)
            .expect("built-in camera is valid");
        SceneConfig::new(objects, camera, seed).expect("built-in scene is valid")
    }

    pub fn from_toml_str(text: &str, source_name: &str) -> Result<Self> {
        let file: SceneFile = toml::from_str(text).map_err(|e| Error::Config {
            source_name: source_name.to_string(),
            message: e.to_string(),
        })?;
        file.build().map_err(|e| Error::Config {
            source_name: source_name.to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn to_toml_string(&self) -> String {
        let file = SceneFile {
            seed: self.seed,
            camera: CameraEntry {
                pose: self.camera.pose.to_array7(),
                noise_sigma: self.camera.noise_sigma,
                culling: self.camera.culling,
            },
            objects: self
                .objects
                .iter()
                .map(|o| ObjectEntry {
                    label: o.model.label.clone(),
                    primitive: o.model.primitive.clone(),
                    pose: o.pose.to_array7(),
                    points: Some(o.model.reference_points.len()),
                })
                .collect(),
        };
        toml::to_string(&file).expect("scene serializes")
    }
}

/// On-disk scene description.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    seed: u64,
    camera: CameraEntry,
    #[serde(default)]
    objects: Vec<ObjectEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraEntry {
    /// qw qx qy qz tx ty tz
    pose: [f64; 7],
    noise_sigma: f64,
    #[serde(default = "default_true")]
    culling: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Serialize, Deserialize)]
struct ObjectEntry {
    label: String,
    #[serde(flatten)]
    primitive: Primitive,
    pose: [f64; 7],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    points: Option<usize>,
}

impl SceneFile {
    fn build(self) -> Result<SceneConfig> {
        let camera = CameraModel::new(Pose::from_array7(self.camera.pose)?, self.camera.noise_sigma, self.camera.culling)?;
        let objects = self
            .objects
            .into_iter()
            .enumerate()
            .map(|(i, o)| {
                let model = ObjectModel::new(
                    o.label,
                    o.primitive,
                    o.points.unwrap_or(500),
                    rng::derive_seed(self.seed, "model", i as u64),
                )
                .map_err(|e| Error::invalid(format!("object {i}: {e}")))?;
                Ok(SceneObject { model, pose: Pose::from_array7(o.pose)? })
            })
            .collect::<Result<Vec<_>>>()?;
        SceneConfig::new(objects, camera, self.seed)
    }
}

/// Renders one noisy, partial observation per visible object. Objects with
/// no visible points are omitted. The grouping is the ground-truth mask.
pub fn render_observation(scene: &SceneConfig, seed: u64) -> Result<Vec<(usize, PointCloud)>> {
    if scene.objects.is_empty() {
        return Err(Error::invalid("cannot render an empty scene"));
    }
    let camera = &scene.camera;
    let noise = Normal::new(0.0, camera.noise_sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mut out = Vec::with_capacity(scene.objects.len());
    for (i, obj) in scene.objects.iter().enumerate() {
        let mut rng = rng::indexed_stream(seed, "render", i as u64);
        let mut points = Vec::with_capacity(obj.model.reference_points.len());
        for (p, n) in obj.model.reference_points.points().iter().zip(&obj.model.reference_normals) {
            let wp = obj.pose.transform_point(p);
            if camera.culling && !camera.sees(&wp, &obj.pose.transform_vector(n)) {
                continue;
            }
            if camera.noise_sigma > 0.0 {
                let d = Vec3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng));
                points.push(wp + d);
            } else {
                points.push(wp);
            }
        }
        if !points.is_empty() {
            out.push((i, PointCloud::new(points)?));
        }
    }
    Ok(out)
}

/// One segmented instance as a detector would report it. `object_index`
/// is ground truth kept for evaluation; consumers of the label must not
/// look at it.
#[derive(Clone, Debug)]
pub struct Detection {
    pub label: String,
    pub cloud: PointCloud,
    pub object_index: usize,
}

/// Stand-in for an instance-segmentation network.
///
/// Each observed object is reported with probability `detection_rate`; a
/// reported label is swapped for a uniformly chosen other scene label with
/// probability `label_error_rate`. Masks can additionally bleed into the
/// background: `boundary_bleed` adds that fraction (relative to the
/// object's own point count) of support-surface points from a ring just
/// outside the object's footprint, as happens at real mask boundaries.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmentationOracle {
    pub detection_rate: f64,
    pub label_error_rate: f64,
    pub boundary_bleed: f64,
    /// Width of the background ring beyond the bounding radius, meters.
    pub bleed_margin: f64,
    /// Height of the support surface in the world frame.
    pub support_height: f64,
}

impl Default for SegmentationOracle {
    /// Rates measured for the detector this replaces; clean masks.
    fn default() -> Self {
        SegmentationOracle {
            detection_rate: 0.9273,
            label_error_rate: 0.0016,
            boundary_bleed: 0.0,
            bleed_margin: 0.02,
            support_height: 0.0,
        }
    }
}

impl SegmentationOracle {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("detection_rate", self.detection_rate), ("label_error_rate", self.label_error_rate)] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::invalid(format!("{name} must be in [0, 1], got {r}")));
            }
        }
        if !(self.boundary_bleed >= 0.0 && self.boundary_bleed.is_finite()) || !(self.bleed_margin >= 0.0) {
            return Err(Error::invalid("boundary_bleed and bleed_margin must be >= 0"));
        }
        Ok(())
    }

    pub fn segment(&self, scene: &SceneConfig, observation: &[(usize, PointCloud)], seed: u64) -> Result<Vec<Detection>> {
        self.validate()?;
        let labels = scene.labels();
        let mut rng = rng::stream(seed, "segment");
        let mut out = Vec::new();
        for (index, cloud) in observation {
            let index = *index;
            let true_label = labels
                .get(index)
                .ok_or_else(|| Error::invalid(format!("observation refers to unknown object {index}")))?;
            let detected = rng.random::<f64>() < self.detection_rate;
            let corrupt = rng.random::<f64>() < self.label_error_rate;
            let pick = rng.random::<f64>();
            if !detected {
                continue;
            }
            let others: Vec<&str> = labels.iter().copied().filter(|l| l != true_label).collect();
            let label = if corrupt && !others.is_empty() {
                others[((pick * others.len() as f64) as usize).min(others.len() - 1)]
            } else {
                true_label
            };
            let cloud = if self.boundary_bleed > 0.0 {
                self.bleed(scene, index, cloud, rng::derive_seed(seed, "bleed", index as u64))?
            } else {
                cloud.clone()
            };
            out.push(Detection { label: label.to_string(), cloud, object_index: index });
        }
        Ok(out)
    }

    fn bleed(&self, scene: &SceneConfig, index: usize, cloud: &PointCloud, seed: u64) -> Result<PointCloud> {
        let obj = &scene.objects[index];
        let extra = (self.boundary_bleed * cloud.len() as f64).round() as usize;
        let mut rng = rng::stream(seed, "bleed");
        let noise = Normal::new(0.0, scene.camera.noise_sigma).map_err(|e| Error::invalid(e.to_string()))?;
        let center = obj.pose.translation();
        let inner = 0.5 * obj.model.bounding_radius;
        let outer = obj.model.bounding_radius + self.bleed_margin;
        let mut points = cloud.points().to_vec();
        for _ in 0..extra {
            // Uniform by area over the ring.
            let r = (inner * inner + rng.random::<f64>() * (outer * outer - inner * inner)).sqrt();
            let a = rng.random::<f64>() * 2.0 * PI;
            let p = Vec3::new(center.x + r * a.cos(), center.y + r * a.sin(), self.support_height);
            let d = Vec3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng));
            points.push(Point::from(p + d));
        }
        PointCloud::new(points)
    }
}

/// Clean-mask segmentation with the given detection and label-error rates.
pub fn segment_oracle(
    scene: &SceneConfig,
    observation: &[(usize, PointCloud)],
    detection_rate: f64,
    label_error_rate: f64,
    seed: u64,
) -> Result<Vec<Detection>> {
    SegmentationOracle { detection_rate, label_error_rate, ..SegmentationOracle::default() }.segment(scene, observation, seed)
}

/// Applies a rotation about world z (yaw) around the object's own origin.
pub fn yawed(pose: &Pose, yaw: f64) -> Pose {
    Pose::new(
        UnitQuaternion::from_axis_angle(&Vec3::z_axis(), yaw) * pose.rotation(),
        pose.translation(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(prim: Primitive, noise: f64, culling: bool) -> SceneConfig {
        let model = ObjectModel::new("obj", prim, 1000, 3).unwrap();
        let pose = Pose::from_axis_angle(Vec3::new(1.0, 2.0, 0.5), 0.7, Vec3::new(0.05, 0.2, 0.1));
        let camera = CameraModel::looking_at(Vec3::new(0.0, -0.5, 0.6), Vec3::new(0.05, 0.2, 0.1), noise, culling).unwrap();
        SceneConfig::new(vec![SceneObject { model, pose }], camera, 1).unwrap()
    }

    #[test]
    fn sphere_points_on_unit_sphere() {
        let c = sample_surface_points(&Primitive::Sphere { radius: 1.0 }, 1000, 7).unwrap();
        assert_eq!(c.len(), 1000);
        assert!(c.points().iter().all(|p| (p.coords.norm() - 1.0).abs() < 1e-9));
    }

    #[test]
    fn cube_points_on_faces() {
        let c = sample_surface_points(&Primitive::cube(1.0), 600, 11).unwrap();
        for p in c.points() {
            assert!(p.coords.iter().any(|v| (v.abs() - 0.5).abs() < 1e-12), "{p:?}");
            assert!(p.coords.iter().all(|v| v.abs() <= 0.5));
        }
    }

    #[test]
    fn cylinder_and_bowl_points_on_surface() {
        let (r, h) = (0.03, 0.1);
        let c = sample_surface_points(&Primitive::Cylinder { radius: r, height: h }, 500, 2).unwrap();
        for p in c.points() {
            let rad = p.x.hypot(p.y);
            let on_side = (rad - r).abs() < 1e-9 && p.z.abs() <= h / 2.0 + 1e-12;
            let on_cap = (p.z.abs() - h / 2.0).abs() < 1e-12 && rad <= r + 1e-12;
            assert!(on_side || on_cap);
        }
        let (big, small) = (0.06, 0.01);
        let b = sample_surface_points(&Primitive::Bowl { radius: big, rim_radius: small }, 500, 2).unwrap();
        for p in b.points() {
            let on_shell = (p.coords.norm() - big).abs() < 1e-9 && p.z <= 1e-12;
            let ring = p.x.hypot(p.y) - big;
            let on_torus = (ring.hypot(p.z) - small).abs() < 1e-9;
            assert!(on_shell || on_torus);
        }
    }

    #[test]
    fn sampling_is_deterministic_and_validates() {
        let prim = Primitive::Cylinder { radius: 0.03, height: 0.1 };
        assert_eq!(sample_surface(&prim, 300, 5).unwrap(), sample_surface(&prim, 300, 5).unwrap());
        assert_ne!(sample_surface_points(&prim, 300, 5).unwrap(), sample_surface_points(&prim, 300, 6).unwrap());
        assert!(matches!(sample_surface_points(&prim, 0, 5), Err(Error::InvalidArgument(_))));
        assert!(sample_surface_points(&Primitive::Sphere { radius: -1.0 }, 10, 5).is_err());
    }

    #[test]
    fn noiseless_full_render_is_exact_transform() {
        let scene = single(Primitive::cube(0.05), 0.0, false);
        let obs = render_observation(&scene, 9).unwrap();
        let expected = scene.objects[0].pose.transform_cloud(&scene.objects[0].model.reference_points);
        assert_eq!(obs, vec![(0, expected)]);
    }

    #[test]
    fn render_noise_level() {
        let scene = single(Primitive::Sphere { radius: 0.05 }, 0.001, false);
        let obs = render_observation(&scene, 4).unwrap();
        let ideal = scene.objects[0].pose.transform_cloud(&scene.objects[0].model.reference_points);
        let mean = obs[0]
            .1
            .points()
            .iter()
            .zip(ideal.points())
            .map(|(a, b)| (a - b).norm())
            .sum::<f64>()
            / 1000.0;
        // E|N(0, s^2 I3)| = 2 s sqrt(2/pi) ~ 1.6 mm for s = 1 mm.
        assert!((0.0005..=0.003).contains(&mean), "{mean}");
    }

    #[test]
    fn culling_keeps_about_half_of_a_sphere() {
        let scene = single(Primitive::Sphere { radius: 0.05 }, 0.0, true);
        let obs = render_observation(&scene, 4).unwrap();
        let n = obs[0].1.len() as f64;
        // Brute-force visibility count from the analytic normals.
        let obj = &scene.objects[0];
        let brute = obj
            .model
            .reference_points
            .points()
            .iter()
            .filter(|p| {
                let wp = obj.pose.transform_point(p);
                let normal = (wp.coords - obj.pose.translation()).normalize();
                normal.dot(&(scene.camera.position() - wp.coords)) > 0.0
            })
            .count() as f64;
        assert_eq!(n, brute);
        assert!((n / 1000.0 - 0.5).abs() <= 0.15 * 0.5 + 1e-12, "{n}");
    }

    #[test]
    fn render_is_deterministic_and_rejects_empty() {
        let scene = SceneConfig::benchmark(3);
        assert_eq!(render_observation(&scene, 8).unwrap(), render_observation(&scene, 8).unwrap());
        let empty = SceneConfig::new(vec![], scene.camera, 0).unwrap();
        assert!(render_observation(&empty, 0).is_err());
    }

    #[test]
    fn overlapping_objects_rejected() {
        let scene = SceneConfig::desk(0);
        let poses = vec![Pose::identity(); 3];
        assert!(scene.with_poses(&poses).is_err());
    }

    #[test]
    fn oracle_degenerate_rates() {
        let scene = SceneConfig::desk(1);
        let obs = render_observation(&scene, 1).unwrap();
        let all = segment_oracle(&scene, &obs, 1.0, 0.0, 3).unwrap();
        assert_eq!(all.len(), obs.len());
        for d in &all {
            assert_eq!(d.label, scene.objects[d.object_index].model.label);
        }
        assert!(segment_oracle(&scene, &obs, 0.0, 0.0, 3).unwrap().is_empty());
        assert!(segment_oracle(&scene, &obs, 1.5, 0.0, 3).is_err());
        let swapped = segment_oracle(&scene, &obs, 1.0, 1.0, 3).unwrap();
        let labels = scene.labels();
        for d in &swapped {
            assert_ne!(d.label, scene.objects[d.object_index].model.label);
            assert!(labels.contains(&d.label.as_str()));
        }
    }

    #[test]
    fn oracle_empirical_rates() {
        let scene = SceneConfig::desk(1);
        let obs = render_observation(&scene, 1).unwrap();
        let (mut total, mut detected, mut wrong) = (0usize, 0usize, 0usize);
        for trial in 0..10_000u64 {
            let dets = segment_oracle(&scene, &obs, 0.9273, 0.0016, trial).unwrap();
            total += obs.len();
            detected += dets.len();
            wrong += dets.iter().filter(|d| d.label != scene.objects[d.object_index].model.label).count();
        }
        let det_rate = detected as f64 / total as f64;
        let err_rate = wrong as f64 / detected as f64;
        assert!((det_rate - 0.9273).abs() < 0.01, "{det_rate}");
        assert!((err_rate - 0.0016).abs() < 0.01, "{err_rate}");
    }

    #[test]
    fn bleed_adds_support_points() {
        let scene = SceneConfig::benchmark(1);
        let obs = render_observation(&scene, 1).unwrap();
        let oracle = SegmentationOracle { detection_rate: 1.0, label_error_rate: 0.0, boundary_bleed: 0.2, ..SegmentationOracle::default() };
        let dets = oracle.segment(&scene, &obs, 5).unwrap();
        for (d, (_, clean)) in dets.iter().zip(&obs) {
            let extra = d.cloud.len() - clean.len();
            assert_eq!(extra, (0.2 * clean.len() as f64).round() as usize);
            assert_eq!(&d.cloud.points()[..clean.len()], clean.points());
            assert!(d.cloud.points()[clean.len()..].iter().all(|p| p.z.abs() < 0.01));
        }
    }

    #[test]
    fn scene_file_round_trip() {
        let scene = SceneConfig::benchmark(5);
        let text = scene.to_toml_string();
        let back = SceneConfig::from_toml_str(&text, "mem").unwrap();
        assert_eq!(back.to_toml_string(), text);
        assert_eq!(back.objects[2].model.reference_points, scene.objects[2].model.reference_points);
        let err = SceneConfig::from_toml_str("seed = 1\n[camera]\nnoise_sigma = 0.0\n", "bad.toml").unwrap_err();
        assert!(err.to_string().contains("bad.toml"), "{err}");
    }
}
