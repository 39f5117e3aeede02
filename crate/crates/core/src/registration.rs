//! Initial pose estimates from a segmented depth cloud.
//!
//! `mask_pose` is the translation-only baseline (centroid plus a fixed
//! offset along the camera axis). `mesh_pose` registers points sampled from
//! the object model onto the segmented cloud with rigid coherent point
//! drift: an EM fit of a Gaussian mixture centred on the transformed model
//! points, with a uniform component absorbing outliers.

use nalgebra::{Matrix3, SymmetricEigen, UnitQuaternion, SVD};

use crate::error::{Error, Result};
use crate::geometry::{Point, PointCloud, Pose, Vec3};
use crate::rng;
use crate::scene::{CameraModel, ObjectModel};

/// Camera-axis offset applied to the centroid baseline, meters.
pub const MASK_Z_OFFSET: f64 = 0.02;

/// Lower bound on the mixture variance so exact fits stay finite.
const MIN_SIGMA2: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct CpdParams {
    /// Weight `w` of the uniform outlier component, in `[0, 1)`.
    pub outlier_weight: f64,
    pub max_iterations: usize,
    /// Stop when the relative change of the negative log-likelihood falls
    /// below this.
    pub tolerance: f64,
    /// Initial variance in m². Zero derives it from the data.
    pub init_sigma2: f64,
    /// Reference clouds larger than this are randomly thinned.
    pub max_reference_points: usize,
    pub seed: u64,
}

impl Default for CpdParams {
    fn default() -> Self {
        CpdParams {
            outlier_weight: 0.1,
            max_iterations: 100,
            tolerance: 1e-6,
            init_sigma2: 0.0,
            max_reference_points: 400,
            seed: 0,
        }
    }
}

impl CpdParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.outlier_weight) {
            return Err(Error::invalid(format!("outlier_weight must be in [0, 1), got {}", self.outlier_weight)));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be at least 1"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid("tolerance must be positive"));
        }
        if !(self.init_sigma2 >= 0.0 && self.init_sigma2.is_finite()) {
            return Err(Error::invalid("init_sigma2 must be >= 0"));
        }
        if self.max_reference_points < 3 {
            return Err(Error::invalid("max_reference_points must be at least 3"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegistrationResult {
    /// Maps the reference (model) frame into the observed frame.
    pub pose: Pose,
    pub iterations_used: usize,
    pub final_sigma2: f64,
    pub converged: bool,
    /// Negative log-likelihood before each M-step and at the final
    /// parameters.
    pub objective_history: Vec<f64>,
}

/// Centroid of the segmented cloud pushed `z_offset` meters along the
/// camera's optical axis; identity rotation.
pub fn mask_pose(mask_points: &PointCloud, camera: &CameraModel, z_offset: f64) -> Result<Pose> {
    if mask_points.is_empty() {
        return Err(Error::invalid("mask_pose needs at least one point"));
    }
    let c = mask_points.centroid().coords + camera.view_axis() * z_offset;
    Ok(Pose::from_translation(c))
}

/// Rejects clouds whose points are coincident or collinear.
fn check_spread(cloud: &[Point], what: &str) -> Result<()> {
    if cloud.len() < 3 {
        return Err(Error::DegenerateGeometry(format!("{what} cloud has fewer than 3 points")));
    }
    let n = cloud.len() as f64;
    let mean = cloud.iter().fold(Vec3::zeros(), |a, p| a + p.coords) / n;
    let mut cov = Matrix3::zeros();
    for p in cloud {
        let d = p.coords - mean;
        cov += d * d.transpose();
    }
    cov /= n;
    let mut ev: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    if ev[0] <= 1e-18 {
        return Err(Error::DegenerateGeometry(format!("{what} cloud points are coincident")));
    }
    if ev[1] <= 1e-10 * ev[0] {
        return Err(Error::DegenerateGeometry(format!("{what} cloud points are collinear")));
    }
    Ok(())
}

/// Proper rotation maximizing `tr(Rᵀ A)` for a weighted cross-covariance
/// `A = Σ w (x − μx)(y − μy)ᵀ`. The second value reports whether the
/// determinant correction flipped the last singular direction.
pub(crate) fn procrustes_rotation(a: &Matrix3<f64>) -> (Matrix3<f64>, bool) {
    let svd = SVD::new(*a, true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let d = (u * v_t).determinant();
    if d < 0.0 {
        let c = Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        (u * c * v_t, true)
    } else {
        (u * v_t, false)
    }
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Rigid coherent point drift, scale fixed at one.
pub fn cpd_rigid(reference: &PointCloud, observed: &PointCloud, init: &Pose, params: &CpdParams) -> Result<RegistrationResult> {
    params.validate()?;
    if init.to_array7().iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("initial pose is not finite"));
    }
    let keep = rng::subsample_indices(reference.len(), params.max_reference_points, params.seed, "cpd-reference");
    let ys: Vec<Point> = keep.iter().map(|&i| reference.points()[i]).collect();
    let xs = observed.points();
    check_spread(&ys, "reference")?;
    check_spread(xs, "observed")?;

    let m = ys.len();
    let n = xs.len();
    let (mf, nf) = (m as f64, n as f64);
    let w = params.outlier_weight;

    let mut rotation = init.rotation().to_rotation_matrix().into_inner();
    let mut translation = init.translation();

    let transform = |r: &Matrix3<f64>, t: &Vec3| -> Vec<Vec3> { ys.iter().map(|y| r * y.coords + t).collect() };
    let mut ty = transform(&rotation, &translation);

    let mut sigma2 = if params.init_sigma2 > 0.0 {
        params.init_sigma2
    } else {
        let sx: Vec3 = xs.iter().fold(Vec3::zeros(), |a, p| a + p.coords);
        let sy: Vec3 = ty.iter().fold(Vec3::zeros(), |a, p| a + p);
        let sxx: f64 = xs.iter().map(|p| p.coords.norm_squared()).sum();
        let syy: f64 = ty.iter().map(|p| p.norm_squared()).sum();
        (mf * sxx + nf * syy - 2.0 * sx.dot(&sy)) / (3.0 * mf * nf)
    }
    .max(MIN_SIGMA2);

    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut logs = vec![0.0; m];
    // Per-iteration accumulators.
    let mut p1 = vec![0.0; m];
    loop {
        // E-step: responsibilities and the objective at the current parameters.
        let norm_const = 1.5 * (2.0 * std::f64::consts::PI * sigma2).ln();
        let log_c = if w > 0.0 {
            norm_const + (w / (1.0 - w)).ln() + (mf / nf).ln()
        } else {
            f64::NEG_INFINITY
        };
        let base = (mf / (1.0 - w)).ln() + norm_const;
        let inv2s = 1.0 / (2.0 * sigma2);

        p1.iter_mut().for_each(|v| *v = 0.0);
        let mut np = 0.0;
        let mut mu_x = Vec3::zeros();
        let mut sum_xpy = Matrix3::zeros();
        let mut sum_x2 = 0.0;
        let mut nll = 0.0;
        for x in xs {
            let x = x.coords;
            let mut lmax = f64::NEG_INFINITY;
            for (l, y) in logs.iter_mut().zip(&ty) {
                let (dx, dy, dz) = (x.x - y.x, x.y - y.y, x.z - y.z);
                *l = -(dx * dx + dy * dy + dz * dz) * inv2s;
                lmax = lmax.max(*l);
            }
            // Terms more than e^-50 below the largest are dropped.
            let cutoff = lmax - 50.0;
            let mut s = 0.0;
            for l in logs.iter_mut() {
                *l = if *l > cutoff { (*l - lmax).exp() } else { 0.0 };
                s += *l;
            }
            let log_denom = log_add_exp(lmax + s.ln(), log_c);
            nll += base - log_denom;
            let scale = (lmax - log_denom).exp();

            let mut pn = 0.0;
            let mut py = Vec3::zeros();
            for ((e, y), acc) in logs.iter().zip(&ys).zip(p1.iter_mut()) {
                if *e == 0.0 {
                    continue;
                }
                let p = e * scale;
                pn += p;
                py += y.coords * p;
                *acc += p;
            }
            np += pn;
            mu_x += x * pn;
            sum_xpy += x * py.transpose();
            sum_x2 += pn * x.norm_squared();
        }

        let prev = history.last().copied();
        history.push(nll);
        if let Some(prev) = prev {
            if (prev - nll).abs() <= params.tolerance * prev.abs().max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        }
        if iterations >= params.max_iterations {
            break;
        }
        if np <= 1e-12 {
            // Every observed point is explained by the outlier component.
            break;
        }

        // M-step.
        let mu_x = mu_x / np;
        let mu_y = ys.iter().zip(&p1).fold(Vec3::zeros(), |a, (y, p)| a + y.coords * *p) / np;
        let a = sum_xpy - np * mu_x * mu_y.transpose();
        let (r, _) = procrustes_rotation(&a);
        rotation = r;
        translation = mu_x - rotation * mu_y;
        let sum_y2: f64 = ys.iter().zip(&p1).map(|(y, p)| p * y.coords.norm_squared()).sum();
        let xx = sum_x2 - np * mu_x.norm_squared();
        let yy = sum_y2 - np * mu_y.norm_squared();
        let tr = (a.transpose() * rotation).trace();
        sigma2 = ((xx - 2.0 * tr + yy) / (3.0 * np)).max(MIN_SIGMA2);
        ty = transform(&rotation, &translation);
        iterations += 1;
    }

    let q = UnitQuaternion::from_matrix(&rotation);
    Ok(RegistrationResult {
        pose: Pose::new(q, translation),
        iterations_used: iterations,
        final_sigma2: sigma2,
        converged,
        objective_history: history,
    })
}

/// Registers the object model onto a segmented cloud, starting from the
/// mask centroid (no camera offset) with identity rotation.
pub fn mesh_pose(model: &ObjectModel, mask_points: &PointCloud, camera: &CameraModel, params: &CpdParams) -> Result<RegistrationResult> {
    let centroid = mask_pose(mask_points, camera, 0.0)?.translation();
    let init = Pose::from_translation(centroid - model.reference_points.centroid().coords);
    cpd_rigid(&model.reference_points, mask_points, &init, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{add_s, pose_errors};
    use crate::scene::{render_observation, sample_surface_points, Primitive, SceneConfig, SceneObject};
    use rand::Rng as _;
    use rand_distr::{Distribution, Normal};

    fn cam() -> CameraModel {
        CameraModel::looking_at(Vec3::new(0.0, -0.4, 0.6), Vec3::zeros(), 0.0, false).unwrap()
    }

    #[test]
    fn mask_pose_cases() {
        let one = PointCloud::new(vec![Point::new(1.0, 2.0, 3.0)]).unwrap();
        let down_z = CameraModel::new(Pose::identity(), 0.0, false).unwrap();
        assert_eq!(mask_pose(&one, &down_z, 0.0).unwrap().translation(), Vec3::new(1.0, 2.0, 3.0));
        let shifted = mask_pose(&one, &down_z, MASK_Z_OFFSET).unwrap().translation();
        assert!((shifted - Vec3::new(1.0, 2.0, 3.02)).norm() < 1e-15);

        let sym = PointCloud::new(vec![Point::new(0.1, -0.2, 0.3), Point::new(-0.1, 0.2, -0.3)]).unwrap();
        let c = cam();
        let t = mask_pose(&sym, &c, 0.02).unwrap().translation();
        assert!((t - c.view_axis() * 0.02).norm() < 1e-15);
        assert_eq!(mask_pose(&sym, &c, 0.02).unwrap().rotation(), UnitQuaternion::identity());
    }

    #[test]
    fn identical_clouds_give_identity() {
        let cloud = sample_surface_points(&Primitive::Box { size: [0.1, 0.06, 0.04] }, 300, 1).unwrap();
        let r = cpd_rigid(&cloud, &cloud, &Pose::identity(), &CpdParams::default()).unwrap();
        let (t, a) = pose_errors(&Pose::identity(), &r.pose);
        assert!(t < 1e-6 && a < 1e-6, "{t} {a}");
        assert!(r.iterations_used <= 100);
    }

    #[test]
    fn recovers_known_transform() {
        let cube = sample_surface_points(&Primitive::cube(0.1), 500, 2).unwrap();
        let truth = Pose::from_axis_angle(Vec3::z(), 15f64.to_radians(), Vec3::new(0.05, 0.0, 0.0));
        let observed = truth.transform_cloud(&cube);
        let r = cpd_rigid(&cube, &observed, &Pose::identity(), &CpdParams::default()).unwrap();
        let (t, a) = pose_errors(&truth, &r.pose);
        assert!(t < 1e-3 && a < 0.5f64.to_radians(), "{t} {}", a.to_degrees());
    }

    #[test]
    fn tolerates_uniform_outliers() {
        let model = sample_surface_points(&Primitive::Box { size: [0.1, 0.07, 0.05] }, 400, 3).unwrap();
        let truth = Pose::from_axis_angle(Vec3::new(0.2, 0.1, 1.0), 0.3, Vec3::new(0.02, -0.03, 0.01));
        let mut pts = truth.transform_cloud(&sample_surface_points(&Primitive::Box { size: [0.1, 0.07, 0.05] }, 400, 4).unwrap()).into_points();
        let mut rng = rng::stream(5, "outliers");
        let (lo, hi) = pts.iter().fold((Vec3::repeat(f64::MAX), Vec3::repeat(f64::MIN)), |(lo, hi), p| {
            (lo.inf(&p.coords), hi.sup(&p.coords))
        });
        for _ in 0..100 {
            let u = Vec3::new(rng.random(), rng.random(), rng.random());
            pts.push(Point::from(lo + (hi - lo).component_mul(&u)));
        }
        let observed = PointCloud::new(pts).unwrap();
        let params = CpdParams { outlier_weight: 0.2, ..CpdParams::default() };
        let r = cpd_rigid(&model, &observed, &Pose::identity(), &params).unwrap();
        let err = add_s(&model, &truth, &r.pose).unwrap();
        assert!(err < 0.005, "{err}");
    }

    #[test]
    fn objective_never_increases() {
        let model = sample_surface_points(&Primitive::Cylinder { radius: 0.03, height: 0.1 }, 300, 6).unwrap();
        let truth = Pose::from_axis_angle(Vec3::new(1.0, 0.3, 0.0), 0.4, Vec3::new(0.01, 0.02, -0.01));
        let noise = Normal::new(0.0, 0.001).unwrap();
        let mut rng = rng::stream(1, "noise");
        let observed = PointCloud::new(
            truth
                .transform_cloud(&model)
                .points()
                .iter()
                .map(|p| p + Vec3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng)))
                .collect(),
        )
        .unwrap();
        let r = cpd_rigid(&model, &observed, &Pose::identity(), &CpdParams::default()).unwrap();
        assert!(r.objective_history.len() >= 2);
        for w in r.objective_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0), "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn equivariant_under_rigid_motion() {
        let model = sample_surface_points(&Primitive::Box { size: [0.12, 0.07, 0.05] }, 300, 7).unwrap();
        let truth = Pose::from_axis_angle(Vec3::new(0.3, 1.0, 0.2), 0.35, Vec3::new(0.03, 0.0, 0.02));
        let obs = truth.transform_cloud(&model);
        let g = Pose::from_axis_angle(Vec3::new(1.0, -1.0, 0.5), 1.1, Vec3::new(0.3, -0.2, 0.5));
        let params = CpdParams::default();
        let a = cpd_rigid(&model, &obs, &Pose::identity(), &params).unwrap();
        let b = cpd_rigid(&model, &g.transform_cloud(&obs), &g, &params).unwrap();
        let (t, r) = pose_errors(&g.compose(&a.pose), &b.pose);
        assert!(t < 1e-6 && r < 1e-6, "{t} {r}");
    }

    #[test]
    fn mirrored_cloud_yields_proper_rotation() {
        let model = sample_surface_points(&Primitive::Box { size: [0.12, 0.07, 0.05] }, 200, 8).unwrap();
        let skew = Pose::from_axis_angle(Vec3::new(1.0, 2.0, 3.0), 0.5, Vec3::zeros());
        let model = skew.transform_cloud(&model);
        let mirrored = PointCloud::new(model.points().iter().map(|p| Point::new(-p.x, p.y, p.z)).collect()).unwrap();
        // The unconstrained optimum of the mirrored covariance is a reflection.
        let c = model.centroid();
        let cm = mirrored.centroid();
        let mut a = Matrix3::zeros();
        for (x, y) in mirrored.points().iter().zip(model.points()) {
            a += (x - cm) * (y - c).transpose();
        }
        let (r, corrected) = procrustes_rotation(&a);
        assert!(corrected);
        assert!((r.determinant() - 1.0).abs() < 1e-9);
        let res = cpd_rigid(&model, &mirrored, &Pose::identity(), &CpdParams::default()).unwrap();
        let m = res.pose.rotation().to_rotation_matrix().into_inner();
        assert!((m.determinant() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_inputs_rejected() {
        let line = PointCloud::new((0..10).map(|i| Point::new(i as f64 * 0.01, 0.0, 0.0)).collect()).unwrap();
        let same = PointCloud::new(vec![Point::new(0.1, 0.1, 0.1); 10]).unwrap();
        let good = sample_surface_points(&Primitive::cube(0.1), 50, 1).unwrap();
        let p = CpdParams::default();
        assert!(matches!(cpd_rigid(&good, &line, &Pose::identity(), &p), Err(Error::DegenerateGeometry(_))));
        assert!(matches!(cpd_rigid(&same, &good, &Pose::identity(), &p), Err(Error::DegenerateGeometry(_))));
        let nan_pose = Pose::from_translation(Vec3::new(f64::NAN, 0.0, 0.0));
        assert!(matches!(cpd_rigid(&good, &good, &nan_pose, &p), Err(Error::InvalidArgument(_))));
        let bad = CpdParams { outlier_weight: 1.0, ..CpdParams::default() };
        assert!(cpd_rigid(&good, &good, &Pose::identity(), &bad).is_err());
    }

    fn one_object_scene(prim: Primitive, pose: Pose, noise: f64, culling: bool) -> SceneConfig {
        let model = ObjectModel::new("obj", prim, 500, 21).unwrap();
        let camera = CameraModel::looking_at(Vec3::new(0.0, -0.35, 0.55), pose.translation(), noise, culling).unwrap();
        SceneConfig::new(vec![SceneObject { model, pose }], camera, 0).unwrap()
    }

    #[test]
    fn mesh_pose_zero_noise_full_view() {
        let scene = one_object_scene(Primitive::Box { size: [0.1, 0.06, 0.04] }, Pose::identity(), 0.0, false);
        let obs = render_observation(&scene, 1).unwrap();
        let model = &scene.objects[0].model;
        let r = mesh_pose(model, &obs[0].1, &scene.camera, &CpdParams::default()).unwrap();
        assert!(add_s(&model.reference_points, &Pose::identity(), &r.pose).unwrap() < 1e-3);
    }

    #[test]
    fn mesh_pose_half_view_rotated() {
        let truth = Pose::from_axis_angle(Vec3::z(), 30f64.to_radians(), Vec3::new(0.05, 0.25, 0.03));
        let scene = one_object_scene(Primitive::Box { size: [0.12, 0.07, 0.05] }, truth, 0.001, true);
        let obs = render_observation(&scene, 2).unwrap();
        let model = &scene.objects[0].model;
        let r = mesh_pose(model, &obs[0].1, &scene.camera, &CpdParams::default()).unwrap();
        let err = add_s(&model.reference_points, &truth, &r.pose).unwrap();
        assert!(err < 0.02, "{err}");
    }

    #[test]
    fn wrong_model_fits_badly() {
        let truth = Pose::from_translation(Vec3::new(0.0, 0.25, 0.05));
        let scene = one_object_scene(Primitive::Sphere { radius: 0.05 }, truth, 0.001, true);
        let obs = render_observation(&scene, 3).unwrap();
        let cube = ObjectModel::new("cube", Primitive::cube(0.16), 500, 4).unwrap();
        let r = mesh_pose(&cube, &obs[0].1, &scene.camera, &CpdParams::default()).unwrap();
        let sphere = &scene.objects[0].model;
        // Distance between the true sphere and the fitted cube surface.
        let fitted = r.pose.transform_cloud(&cube.reference_points);
        let truth_cloud = truth.transform_cloud(&sphere.reference_points);
        let err = crate::metrics::cloud_add_s(&truth_cloud, &fitted).unwrap();
        assert!(err > 0.02, "{err}");
    }
}
