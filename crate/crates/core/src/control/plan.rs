use nalgebra::{DMatrix, UnitQuaternion};

use super::TimingParams;
use crate::error::{Error, Result};
use crate::geometry::{Pose, Vec3};
use crate::scene::GraspDirection;

/// Robot end-effector rest position, across the desk from the user.
pub const ROBOT_HOME: Vec3 = Vec3::new(0.0, 0.6, 0.3);

/// Time-stamped end-effector waypoints.
#[derive(Clone, Debug, PartialEq)]
pub struct Plan {
    /// Times are relative to execution start.
    pub waypoints: Vec<(f64, Pose)>,
    /// Sum of squared second differences of the translation knots.
    pub planning_cost: f64,
    pub planning_time: f64,
}

impl Plan {
    pub fn path_length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| (w[1].1.translation() - w[0].1.translation()).norm()).sum()
    }

    pub fn duration(&self) -> f64 {
        self.waypoints.last().map_or(0.0, |w| w.0)
    }
}

/// Gripper pose for grasping at `point` from `direction`: approach axis
/// (gripper +z) pointing down for top grasps and along −x for right grasps.
pub fn gripper_goal(point: Vec3, direction: GraspDirection) -> Pose {
    let rot = match direction {
        GraspDirection::Top => UnitQuaternion::from_axis_angle(&Vec3::x_axis(), std::f64::consts::PI),
        GraspDirection::Right => UnitQuaternion::from_axis_angle(&Vec3::y_axis(), -std::f64::consts::FRAC_PI_2),
    };
    Pose::new(rot, point)
}

pub(crate) fn acceleration_cost(knots: &[Vec3]) -> f64 {
    knots.windows(3).map(|w| (w[2] - 2.0 * w[1] + w[0]).norm_squared()).sum()
}

/// Minimum-acceleration reach between fixed endpoints.
///
/// The interior translation knots minimise the summed squared second
/// differences, solved exactly through the normal equations. Rotation is
/// interpolated geodesically and knots are timed uniformly at the execution
/// speed.
pub fn plan_reach(current: &Pose, goal: &Pose, num_knots: usize, timing: &TimingParams) -> Result<Plan> {
    timing.validate()?;
    if num_knots < 3 {
        return Err(Error::invalid("a plan needs at least 3 knots"));
    }
    let n = num_knots;
    let interior = n - 2;
    // Second-difference operator split into interior and endpoint columns.
    let mut d_i = DMatrix::<f64>::zeros(n - 2, interior);
    let mut d_f = DMatrix::<f64>::zeros(n - 2, 2);
    for r in 0..n - 2 {
        for (c, w) in [(r, 1.0), (r + 1, -2.0), (r + 2, 1.0)] {
            match c {
                0 => d_f[(r, 0)] += w,
                c if c == n - 1 => d_f[(r, 1)] += w,
                c => d_i[(r, c - 1)] += w,
            }
        }
    }
    let normal = d_i.transpose() * &d_i;
    let chol = normal.cholesky().ok_or_else(|| Error::invalid("reach system is singular"))?;
    let (a, b) = (current.translation(), goal.translation());
    // Solved relative to the start so coincident endpoints give exact zeros.
    let delta = b - a;
    let ends = DMatrix::from_row_slice(2, 3, &[0.0, 0.0, 0.0, delta.x, delta.y, delta.z]);
    let rhs = -(d_i.transpose() * (&d_f * ends));
    let inner = chol.solve(&rhs);

    let mut knots = Vec::with_capacity(n);
    knots.push(a);
    for r in 0..interior {
        knots.push(a + Vec3::new(inner[(r, 0)], inner[(r, 1)], inner[(r, 2)]));
    }
    knots.push(b);

    let length: f64 = knots.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
    let total = (length / timing.execution_speed).max((n - 1) as f64 * timing.sim_tick);
    let (ra, rb) = (current.rotation(), goal.rotation());
    let waypoints = knots
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let s = i as f64 / (n - 1) as f64;
            let pose = if i == 0 {
                *current
            } else if i == n - 1 {
                *goal
            } else {
                Pose::new(ra.try_slerp(&rb, s, 1e-12).unwrap_or(rb), *p)
            };
            (total * s, pose)
        })
        .collect();
    Ok(Plan { waypoints, planning_cost: acceleration_cost(&knots), planning_time: timing.planning_budget })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn stationary_plan() {
        let p = Pose::from_translation(Vec3::new(0.1, 0.2, 0.3));
        let plan = plan_reach(&p, &p, 6, &TimingParams::default()).unwrap();
        assert_eq!(plan.planning_cost, 0.0);
        assert!(plan.waypoints.iter().all(|(_, w)| (w.translation() - p.translation()).norm() < 1e-12));
        assert!(plan.waypoints.windows(2).all(|w| w[1].0 > w[0].0));
    }

    #[test]
    fn straight_line_and_endpoints_exact() {
        let a = Pose::from_translation(Vec3::new(0.0, 0.6, 0.3));
        let b = gripper_goal(Vec3::new(-0.1, 0.25, 0.06), GraspDirection::Right);
        for n in [3, 5, 17] {
            let plan = plan_reach(&a, &b, n, &TimingParams::default()).unwrap();
            assert_eq!(plan.waypoints[0].1, a);
            assert_eq!(plan.waypoints[n - 1].1, b);
            for (i, (_, w)) in plan.waypoints.iter().enumerate() {
                let expect = a.translation().lerp(&b.translation(), i as f64 / (n - 1) as f64);
                assert!((w.translation() - expect).norm() < 1e-9);
            }
            assert!(plan.planning_cost < 1e-18);
            let len = (b.translation() - a.translation()).norm();
            assert!((plan.path_length() - len).abs() < 1e-9);
            assert!((plan.duration() - len / 0.15).abs() < 1e-9);
        }
    }

    #[test]
    fn optimal_against_random_knots() {
        let a = Pose::from_translation(Vec3::new(0.0, 0.6, 0.3));
        let b = Pose::from_translation(Vec3::new(0.2, 0.2, 0.05));
        let n = 8;
        let plan = plan_reach(&a, &b, n, &TimingParams::default()).unwrap();
        let mut rng = crate::rng::stream(7, "plan-test");
        for _ in 0..100 {
            let mut knots = vec![a.translation()];
            for _ in 0..n - 2 {
                knots.push(Vec3::from_fn(|_, _| rng.random_range(-0.5..0.5)));
            }
            knots.push(b.translation());
            assert!(plan.planning_cost <= acceleration_cost(&knots) + 1e-15);
        }
    }

    #[test]
    fn rejects_too_few_knots() {
        assert!(plan_reach(&Pose::identity(), &Pose::identity(), 2, &TimingParams::default()).is_err());
    }
}
