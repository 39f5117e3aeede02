//! Pose-error metrics: ADD-S, accuracy-threshold curves, AUC and the
//! fraction of estimates under a grasping tolerance.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Pose};
use crate::spatial::KdTree;

/// Maximum threshold of the accuracy curve, meters.
pub const AUC_MAX_THRESHOLD: f64 = 0.1;
/// Number of thresholds sampled over `[0, AUC_MAX_THRESHOLD]`.
pub const AUC_STEPS: usize = 1000;
/// Grasping tolerance used for the "below 2 cm" figure.
pub const GRASP_TOLERANCE: f64 = 0.02;

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorSample {
    pub object_label: String,
    pub add_s: f64,
    pub translation_error: f64,
    pub rotation_error: f64,
}

impl ErrorSample {
    pub fn evaluate(label: &str, model: &PointCloud, gt: &Pose, est: &Pose) -> Self {
        let (translation_error, rotation_error) = pose_errors(gt, est);
        ErrorSample {
            object_label: label.to_string(),
            add_s: add_s(model, gt, est).expect("point clouds are non-empty"),
            translation_error,
            rotation_error,
        }
    }
}

/// Mean over model points under `gt` of the distance to the closest model
/// point under `est`. Symmetric objects score zero for any pose in their
/// symmetry group.
pub fn add_s(model: &PointCloud, gt: &Pose, est: &Pose) -> Result<f64> {
    if model.is_empty() {
        return Err(Error::invalid("ADD-S needs a non-empty model"));
    }
    let estimated = est.transform_cloud(model);
    let tree = KdTree::build(estimated.points());
    let total: f64 = model
        .points()
        .iter()
        .map(|p| tree.nearest_dist2(&gt.transform_point(p)).sqrt())
        .sum();
    Ok(total / model.len() as f64)
}

fn mean_nearest(from: &PointCloud, to: &KdTree) -> f64 {
    from.points().iter().map(|p| to.nearest_dist2(p).sqrt()).sum::<f64>() / from.len() as f64
}

/// Symmetrised mean nearest-neighbour distance between two clouds.
pub fn cloud_add_s(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("cloud distance needs non-empty clouds"));
    }
    let ta = KdTree::build(a.points());
    let tb = KdTree::build(b.points());
    Ok(0.5 * (mean_nearest(a, &tb) + mean_nearest(b, &ta)))
}

/// Translation distance and geodesic rotation angle in `[0, pi]`.
pub fn pose_errors(gt: &Pose, est: &Pose) -> (f64, f64) {
    let t = (gt.translation() - est.translation()).norm();
    let r = gt.rotation().angle_to(&est.rotation());
    (t, r.clamp(0.0, std::f64::consts::PI))
}

/// Fraction of errors at or below `threshold` (inclusive).
pub fn pct_below(errors: &[f64], threshold: f64) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::invalid("pct_below needs at least one error"));
    }
    Ok(errors.iter().filter(|e| **e <= threshold).count() as f64 / errors.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AccuracyCurve {
    pub thresholds: Vec<f64>,
    pub accuracies: Vec<f64>,
    /// Trapezoidal area normalized by the maximum threshold.
    pub auc: f64,
}

/// Accuracy at `steps` evenly spaced thresholds from 0 to `max_threshold`
/// inclusive. Errors above the largest threshold never count as accurate.
pub fn accuracy_curve(errors: &[f64], max_threshold: f64, steps: usize) -> Result<AccuracyCurve> {
    if errors.is_empty() {
        return Err(Error::invalid("accuracy curve needs at least one error"));
    }
    if steps < 2 || !(max_threshold > 0.0) {
        return Err(Error::invalid("accuracy curve needs steps >= 2 and max_threshold > 0"));
    }
    let mut sorted = errors.to_vec();
    if sorted.iter().any(|e| e.is_nan()) {
        return Err(Error::invalid("errors must not be NaN"));
    }
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let thresholds: Vec<f64> = (0..steps)
        .map(|i| max_threshold * i as f64 / (steps - 1) as f64)
        .collect();
    let accuracies: Vec<f64> = thresholds
        .iter()
        .map(|t| sorted.partition_point(|e| e <= t) as f64 / n)
        .collect();
    let area: f64 = thresholds
        .windows(2)
        .zip(accuracies.windows(2))
        .map(|(t, a)| 0.5 * (a[0] + a[1]) * (t[1] - t[0]))
        .sum();
    Ok(AccuracyCurve {
        thresholds,
        accuracies,
        auc: (area / max_threshold).clamp(0.0, 1.0),
    })
}

/// AUC with the default 0.1 m / 1000-step settings.
pub fn auc(errors: &[f64]) -> Result<f64> {
    accuracy_curve(errors, AUC_MAX_THRESHOLD, AUC_STEPS).map(|c| c.auc)
}

impl AccuracyCurve {
    /// `threshold,accuracy` rows followed by a final `auc,<value>` line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e| Error::io("accuracy curve csv", e);
        writeln!(w, "threshold,accuracy").map_err(io)?;
        for (t, a) in self.thresholds.iter().zip(&self.accuracies) {
            writeln!(w, "{t},{a}").map_err(io)?;
        }
        writeln!(w, "auc,{}", self.auc).map_err(io)?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut thresholds = Vec::new();
        let mut accuracies = Vec::new();
        let mut auc = None;
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::io("accuracy curve csv", e))?;
            let bad = |m: &str| Error::Parse { location: format!("accuracy curve csv line {}", i + 1), message: m.into() };
            if i == 0 {
                if line.trim() != "threshold,accuracy" {
                    return Err(bad("expected header threshold,accuracy"));
                }
                continue;
            }
            let (a, b) = line.split_once(',').ok_or_else(|| bad("expected two fields"))?;
            let value: f64 = b.trim().parse().map_err(|_| bad("non-numeric value"))?;
            if a == "auc" {
                auc = Some(value);
            } else {
                thresholds.push(a.trim().parse().map_err(|_| bad("non-numeric threshold"))?);
                accuracies.push(value);
            }
        }
        let auc = auc.ok_or_else(|| Error::Parse { location: "accuracy curve csv".into(), message: "missing auc line".into() })?;
        Ok(AccuracyCurve { thresholds, accuracies, auc })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Point, Vec3};
    use crate::scene::{sample_surface_points, Primitive};
    use proptest::prelude::*;
    use rand::Rng as _;

    fn brute_add_s(model: &PointCloud, gt: &Pose, est: &Pose) -> f64 {
        let mut total = 0.0;
        for x1 in model.points() {
            let a = gt.transform_point(x1);
            let mut best = f64::INFINITY;
            for x2 in model.points() {
                best = best.min((a - est.transform_point(x2)).norm());
            }
            total += best;
        }
        total / model.len() as f64
    }

    fn random_pose(rng: &mut crate::rng::Rng) -> Pose {
        let axis = Vec3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
        let t = Vec3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * 0.2;
        Pose::from_axis_angle(axis, rng.random::<f64>() * 3.0, t)
    }

    #[test]
    fn add_s_basic_cases() {
        let cube = sample_surface_points(&Primitive::cube(0.1), 200, 1).unwrap();
        let p = Pose::from_axis_angle(Vec3::x(), 0.4, Vec3::new(0.1, 0.0, 0.0));
        assert_eq!(add_s(&cube, &p, &p).unwrap(), 0.0);
        let single = PointCloud::new(vec![Point::new(0.1, 0.2, 0.3)]).unwrap();
        let shifted = Pose::from_translation(Vec3::new(0.03, 0.0, 0.0));
        assert!((add_s(&single, &Pose::identity(), &shifted).unwrap() - 0.03).abs() < 1e-15);
    }

    #[test]
    fn add_s_matches_brute_force_on_cube() {
        let cube = sample_surface_points(&Primitive::cube(0.1), 200, 2).unwrap();
        let mut rng = crate::rng::stream(3, "test");
        let (gt, est) = (random_pose(&mut rng), random_pose(&mut rng));
        assert!((add_s(&cube, &gt, &est).unwrap() - brute_add_s(&cube, &gt, &est)).abs() < 1e-12);
    }

    #[test]
    fn add_s_sphere_rotation_invariance() {
        // The residual is the mean nearest-sample gap (~0.8 mm at this density).
        let sphere = sample_surface_points(&Primitive::Sphere { radius: 0.02 }, 2000, 4).unwrap();
        let gt = Pose::identity();
        for (i, angle) in [0.3, 1.2, 2.9].iter().enumerate() {
            let axis = Vec3::new(1.0, i as f64, 0.5);
            let est = Pose::from_axis_angle(axis, *angle, Vec3::zeros());
            let v = add_s(&sphere, &gt, &est).unwrap();
            assert!(v < 1e-3, "{v}");
        }
    }

    proptest! {
        #[test]
        fn add_s_left_invariant(seed in 0u64..1000) {
            let model = sample_surface_points(&Primitive::Box { size: [0.1, 0.05, 0.03] }, 80, seed).unwrap();
            let mut rng = crate::rng::stream(seed, "prop");
            let (gt, est, g) = (random_pose(&mut rng), random_pose(&mut rng), random_pose(&mut rng));
            let a = add_s(&model, &gt, &est).unwrap();
            let b = add_s(&model, &g.compose(&gt), &g.compose(&est)).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn add_s_bounded_by_translation_for_equal_rotations(seed in 0u64..1000) {
            let model = sample_surface_points(&Primitive::Cylinder { radius: 0.03, height: 0.1 }, 60, seed).unwrap();
            let mut rng = crate::rng::stream(seed, "prop2");
            let gt = random_pose(&mut rng);
            let shift = Vec3::new(rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()) * 0.05;
            let est = Pose::new(gt.rotation(), gt.translation() + shift);
            let v = add_s(&model, &gt, &est).unwrap();
            prop_assert!(v <= pose_errors(&gt, &est).0 + 1e-12);
            let max_pair = model.points().iter().flat_map(|a| model.points().iter().map(move |b| (a - b).norm())).fold(0.0, f64::max);
            prop_assert!(add_s(&model, &gt, &random_pose(&mut rng)).unwrap() <= max_pair + 0.5);
        }

        #[test]
        fn curve_monotone(errors in prop::collection::vec(0.0f64..0.2, 1..50), steps in 2usize..200) {
            let c = accuracy_curve(&errors, 0.1, steps).unwrap();
            prop_assert!(c.accuracies.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!((0.0..=1.0).contains(&c.auc));
            prop_assert_eq!(c.thresholds.len(), c.accuracies.len());
        }
    }

    #[test]
    fn cloud_add_s_cases() {
        let a = sample_surface_points(&Primitive::Sphere { radius: 0.1 }, 50, 1).unwrap();
        assert_eq!(cloud_add_s(&a, &a).unwrap(), 0.0);
        let p = PointCloud::new(vec![Point::new(0.0, 0.0, 0.0)]).unwrap();
        let q = PointCloud::new(vec![Point::new(0.0, 0.04, 0.0)]).unwrap();
        assert!((cloud_add_s(&p, &q).unwrap() - 0.04).abs() < 1e-15);

        let b = sample_surface_points(&Primitive::cube(0.2), 50, 9).unwrap();
        let one_way = |x: &PointCloud, y: &PointCloud| {
            x.points()
                .iter()
                .map(|p| y.points().iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min))
                .sum::<f64>()
                / x.len() as f64
        };
        let brute = 0.5 * (one_way(&a, &b) + one_way(&b, &a));
        assert!((cloud_add_s(&a, &b).unwrap() - brute).abs() < 1e-12);
    }

    #[test]
    fn curve_cases() {
        let c = accuracy_curve(&[0.0, 0.0], 0.1, 50).unwrap();
        assert!(c.accuracies.iter().all(|a| *a == 1.0));
        assert!((c.auc - 1.0).abs() < 1e-12);
        let c = accuracy_curve(&[0.2, 0.15], 0.1, 50).unwrap();
        assert!(c.accuracies.iter().all(|a| *a == 0.0));
        assert_eq!(c.auc, 0.0);
        let c = accuracy_curve(&[0.05], 0.1, 1001).unwrap();
        assert!((c.auc - 0.5).abs() <= 0.001, "{}", c.auc);
        assert!(accuracy_curve(&[], 0.1, 10).is_err());
        assert!(accuracy_curve(&[0.1], 0.1, 1).is_err());
    }

    #[test]
    fn curve_csv_round_trip() {
        let c = accuracy_curve(&[0.01, 0.03, 0.07], 0.1, 11).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).lines().last().unwrap().starts_with("auc,"));
        assert_eq!(AccuracyCurve::read_csv(buf.as_slice()).unwrap(), c);
    }

    #[test]
    fn pct_below_cases() {
        assert_eq!(pct_below(&[0.01, 0.03], 0.02).unwrap(), 0.5);
        assert_eq!(pct_below(&[0.0; 4], 0.02).unwrap(), 1.0);
        // 0.00, 0.01, 0.02 are at or below 2 cm.
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 100.0).collect();
        assert!((pct_below(&grid, 0.02).unwrap() - 3.0 / 11.0).abs() < 1e-15);
        assert!(pct_below(&[], 0.02).is_err());
    }

    #[test]
    fn pose_error_cases() {
        let p = Pose::from_axis_angle(Vec3::y(), 0.5, Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(pose_errors(&p, &p), (0.0, 0.0));
        let q = Pose::new(
            nalgebra::UnitQuaternion::from_axis_angle(&Vec3::z_axis(), std::f64::consts::FRAC_PI_2) * p.rotation(),
            p.translation(),
        );
        let (t, r) = pose_errors(&p, &q);
        assert_eq!(t, 0.0);
        assert!((r - std::f64::consts::FRAC_PI_2).abs() < 1e-12);

        let mut rng = crate::rng::stream(11, "pose-err");
        for _ in 0..50 {
            let (a, b) = (random_pose(&mut rng), random_pose(&mut rng));
            let dot = a.rotation().into_inner().coords.dot(&b.rotation().into_inner().coords).abs();
            let oracle = 2.0 * dot.min(1.0).acos();
            assert!((pose_errors(&a, &b).1 - oracle).abs() < 1e-9);
        }
    }
}
