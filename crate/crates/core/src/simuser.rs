//! Synthetic reach-and-grasp demonstrations and virtual user models.
//!
//! A demonstration follows a minimum-jerk path from a rest position to the
//! grasp point of the target object, with a smooth low-frequency wobble
//! standing in for human variability. The palm rotates from a neutral,
//! forward-facing pose to the canonical orientation of the requested grasp.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Unit, UnitQuaternion};
use rand::Rng as _;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::{Pose, Vec3};
use crate::intent::{HandState, LabeledTrajectory, NUM_OBJECTS};
use crate::rng;
use crate::scene::{GraspDirection, SceneConfig};

/// Palm normal before the hand starts shaping the grasp.
pub const NEUTRAL_PALM_NORMAL: Vec3 = Vec3::new(0.0, 1.0, 0.0);
/// Pointing direction of the hand at rest (straight ahead, across the desk).
pub const NEUTRAL_HEADING: Vec3 = Vec3::new(0.0, 1.0, 0.0);
pub const DEFAULT_RATE: f64 = 180.0;
/// Number of seeded object layouts a dataset is spread over.
pub const NUM_LAYOUTS: usize = 4;

/// Closed-form minimum-jerk progress `10τ³ − 15τ⁴ + 6τ⁵`.
pub fn min_jerk(tau: f64) -> f64 {
    let t = tau.clamp(0.0, 1.0);
    t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
}

pub fn canonical_palm_normal(direction: GraspDirection) -> Vec3 {
    match direction {
        GraspDirection::Top => -Vec3::z(),
        GraspDirection::Right => -Vec3::x(),
    }
}

pub fn canonical_y_rotation(direction: GraspDirection) -> f64 {
    match direction {
        GraspDirection::Top => 0.0,
        GraspDirection::Right => FRAC_PI_2,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReachOptions {
    /// Upper bound on the wobble along each axis, meters.
    pub perturbation_amplitude: f64,
    /// Duration bounds used when no duration is given, seconds.
    pub duration_range: (f64, f64),
    /// Rest position the hand starts from before jitter.
    pub rest_position: Vec3,
    /// Half-width of the uniform start jitter per axis, meters.
    pub start_jitter: f64,
}

impl Default for ReachOptions {
    fn default() -> Self {
        ReachOptions {
            perturbation_amplitude: 0.01,
            duration_range: (2.0, 5.0),
            rest_position: Vec3::new(0.0, 0.0, 0.25),
            start_jitter: 0.03,
        }
    }
}

impl ReachOptions {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.duration_range;
        if !(self.perturbation_amplitude >= 0.0) || !(self.start_jitter >= 0.0) || !(lo > 0.0 && hi >= lo) {
            return Err(Error::invalid("reach options need non-negative amplitudes and 0 < min duration <= max"));
        }
        Ok(())
    }
}

/// What a single demonstration should do.
#[derive(Clone, Debug, PartialEq)]
pub struct ReachRequest {
    pub id: String,
    pub start: Vec3,
    pub target: usize,
    pub direction: GraspDirection,
    /// Drawn uniformly from the option bounds when `None`.
    pub duration: Option<f64>,
    pub rate: f64,
}

/// World-frame grasp point for `target` in `scene`.
pub fn grasp_point(scene: &SceneConfig, target: usize, direction: GraspDirection) -> Result<Vec3> {
    let obj = scene.objects.get(target).ok_or_else(|| Error::invalid(format!("no object {target} in scene")))?;
    Ok(obj.model.grasp_pose(&obj.pose, direction).translation())
}

fn pointing(from: &Vec3, to: &Vec3, fallback: Vec3) -> Vec3 {
    let d = to - from;
    let n = d.norm();
    if n > 1e-9 {
        d / n
    } else {
        fallback
    }
}

/// Hand pointing direction at reach progress `s`: turns from the neutral
/// heading toward the grasp point as the reach unfolds.
fn heading_at(position: &Vec3, goal: &Vec3, s: f64, previous: Vec3) -> Vec3 {
    let toward = Unit::new_normalize(pointing(position, goal, previous));
    let neutral = Unit::new_normalize(NEUTRAL_HEADING);
    let h = neutral.try_slerp(&toward, s, 1e-9).unwrap_or(toward).into_inner();
    h / h.norm()
}

/// Generates one labeled demonstration in `scene` (which must hold exactly
/// the classifier's object count).
pub fn generate_reach_trajectory(scene: &SceneConfig, request: &ReachRequest, options: &ReachOptions, seed: u64) -> Result<LabeledTrajectory> {
    options.validate()?;
    if scene.num_objects() != NUM_OBJECTS {
        return Err(Error::invalid(format!("scene must contain {NUM_OBJECTS} objects, found {}", scene.num_objects())));
    }
    if !(request.rate > 0.0 && request.rate.is_finite()) {
        return Err(Error::invalid("rate must be positive"));
    }
    let mut rng = rng::stream(seed, "reach");
    let duration = match request.duration {
        Some(d) if d > 0.0 && d.is_finite() => d,
        Some(_) => return Err(Error::invalid("duration must be positive")),
        None => rng.random_range(options.duration_range.0..=options.duration_range.1),
    };
    let goal = grasp_point(scene, request.target, request.direction)?;
    let start = request.start;
    let steps = (duration * request.rate).round().max(1.0) as usize;

    // Three sinusoids per axis with amplitudes summing to at most the bound.
    let mut waves = [[(0.0, 0.0, 0.0); 3]; 3];
    for axis in waves.iter_mut() {
        let raw: [f64; 3] = [rng.random(), rng.random(), rng.random()];
        let total: f64 = raw.iter().sum::<f64>().max(1e-12);
        let budget = options.perturbation_amplitude * rng.random_range(0.5..=1.0);
        for (w, r) in axis.iter_mut().zip(raw) {
            *w = (budget * r / total, rng.random_range(0.5..2.5), rng.random_range(0.0..2.0 * PI));
        }
    }
    let wobble = |tau: f64| {
        let window = (PI * tau).sin().powi(2);
        Vec3::from_fn(|a, _| waves[a].iter().map(|(amp, f, ph)| amp * (2.0 * PI * f * tau + ph).sin()).sum::<f64>() * window)
    };

    let neutral = Unit::new_normalize(NEUTRAL_PALM_NORMAL);
    let final_normal = Unit::new_normalize(canonical_palm_normal(request.direction));
    let final_yrot = canonical_y_rotation(request.direction);
    let mut states = Vec::with_capacity(steps + 1);
    let mut heading = NEUTRAL_HEADING;
    for i in 0..=steps {
        let tau = i as f64 / steps as f64;
        let s = min_jerk(tau);
        let position = if i == steps { goal } else { start + (goal - start) * s + wobble(tau) };
        heading = heading_at(&position, &goal, s, heading);
        let palm = neutral.slerp(&final_normal, s).into_inner();
        states.push(HandState {
            position,
            direction: heading,
            palm_normal: palm / palm.norm(),
            y_rotation: final_yrot * s,
            timestamp: i as f64 / request.rate,
        });
    }
    Ok(LabeledTrajectory {
        id: request.id.clone(),
        states,
        object_positions: scene.object_positions(),
        target_object: request.target,
        grasp_direction: request.direction,
        rate: request.rate,
        duration: steps as f64 / request.rate,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UserKind {
    Normal,
    Noisy,
    Biased,
}

impl UserKind {
    pub const ALL: [UserKind; 3] = [UserKind::Normal, UserKind::Noisy, UserKind::Biased];

    pub fn as_str(self) -> &'static str {
        match self {
            UserKind::Normal => "normal",
            UserKind::Noisy => "noisy",
            UserKind::Biased => "biased",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" => Some(UserKind::Normal),
            "noisy" => Some(UserKind::Noisy),
            "biased" => Some(UserKind::Biased),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UserModel {
    pub kind: UserKind,
    /// Per-sample position noise of the noisy user, meters.
    pub noise_sigma: f64,
    /// Per-trajectory constant offset scale of the biased user, meters.
    pub bias_sigma: f64,
    pub seed: u64,
}

impl UserModel {
    pub fn new(kind: UserKind, seed: u64) -> Self {
        UserModel { kind, noise_sigma: 0.01, bias_sigma: 0.02, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma >= 0.0 && self.bias_sigma >= 0.0) {
            return Err(Error::invalid("user sigmas must be >= 0"));
        }
        Ok(())
    }
}

/// Applies a user model to a clean demonstration. Only positions change;
/// pointing directions are re-derived against the original end point and
/// palm normals are re-normalized.
pub fn apply_user_model(traj: &LabeledTrajectory, user: &UserModel) -> Result<LabeledTrajectory> {
    traj.validate()?;
    user.validate()?;
    if user.kind == UserKind::Normal {
        return Ok(traj.clone());
    }
    let mut rng = rng::stream(user.seed, &format!("user/{}/{}", user.kind.as_str(), traj.id));
    let goal = traj.states.last().expect("validated").position;
    let mut out = traj.clone();
    let mut offsets: Box<dyn FnMut() -> Vec3> = match user.kind {
        UserKind::Noisy => {
            let n = Normal::new(0.0, user.noise_sigma).map_err(|e| Error::invalid(e.to_string()))?;
            Box::new(move || Vec3::from_fn(|_, _| n.sample(&mut rng)))
        }
        UserKind::Biased => {
            let n = Normal::new(0.0, user.bias_sigma).map_err(|e| Error::invalid(e.to_string()))?;
            let b = Vec3::from_fn(|_, _| n.sample(&mut rng));
            Box::new(move || b)
        }
        UserKind::Normal => unreachable!(),
    };
    let t0 = traj.states[0].timestamp;
    let span = (traj.states.last().expect("validated").timestamp - t0).max(f64::MIN_POSITIVE);
    let mut heading = traj.states[0].direction;
    for s in out.states.iter_mut() {
        s.position += offsets();
        heading = heading_at(&s.position, &goal, min_jerk((s.timestamp - t0) / span), heading);
        s.direction = heading;
        s.palm_normal /= s.palm_normal.norm();
    }
    Ok(out)
}

/// Seeded alternate layout: every object shifted in the table plane by up
/// to `spread` meters while keeping the scene valid.
pub fn layout(scene: &SceneConfig, index: usize, spread: f64, seed: u64) -> Result<SceneConfig> {
    if index == 0 || spread == 0.0 {
        return Ok(scene.clone());
    }
    let mut rng = rng::indexed_stream(seed, "layout", index as u64);
    for _ in 0..100 {
        let poses: Vec<Pose> = scene
            .objects
            .iter()
            .map(|o| {
                let shift = Vec3::new(rng.random_range(-spread..=spread), rng.random_range(-spread..=spread), 0.0);
                Pose::new(o.pose.rotation(), o.pose.translation() + shift)
            })
            .collect();
        if let Ok(s) = scene.with_poses(&poses) {
            return Ok(s);
        }
    }
    Err(Error::invalid("could not place a non-overlapping layout"))
}

fn jittered_start(options: &ReachOptions, rng: &mut rng::Rng) -> Vec3 {
    let j = options.start_jitter;
    options.rest_position + Vec3::from_fn(|_, _| if j > 0.0 { rng.random_range(-j..=j) } else { 0.0 })
}

/// `count` demonstrations balanced over the (object × direction) classes
/// and spread over [`NUM_LAYOUTS`] layouts of `scene`.
pub fn generate_dataset(scene: &SceneConfig, count: usize, rate: f64, options: &ReachOptions, seed: u64) -> Result<Vec<LabeledTrajectory>> {
    if count == 0 {
        return Err(Error::invalid("count must be >= 1"));
    }
    let layouts = (0..NUM_LAYOUTS).map(|l| layout(scene, l, 0.03, seed)).collect::<Result<Vec<_>>>()?;
    let classes = NUM_OBJECTS * GraspDirection::COUNT;
    let mut order: Vec<usize> = (0..count).map(|i| i % classes).collect();
    order.shuffle(&mut rng::stream(seed, "dataset-order"));
    order
        .iter()
        .enumerate()
        .map(|(i, &class)| {
            let traj_seed = rng::derive_seed(seed, "trajectory", i as u64);
            let mut r = rng::stream(traj_seed, "start");
            let request = ReachRequest {
                id: format!("traj-{i:04}"),
                start: jittered_start(options, &mut r),
                target: class / GraspDirection::COUNT,
                direction: GraspDirection::ALL[class % GraspDirection::COUNT],
                duration: None,
                rate,
            };
            generate_reach_trajectory(&layouts[i % NUM_LAYOUTS], &request, options, traj_seed)
        })
        .collect()
}

/// Three demonstrations covering every object once in a seeded order, as
/// performed by one user during an episode.
pub fn episode_demonstrations(scene: &SceneConfig, rate: f64, options: &ReachOptions, seed: u64) -> Result<Vec<LabeledTrajectory>> {
    let mut rng = rng::stream(seed, "episode");
    let mut targets: Vec<usize> = (0..NUM_OBJECTS).collect();
    targets.shuffle(&mut rng);
    targets
        .into_iter()
        .enumerate()
        .map(|(k, target)| {
            let request = ReachRequest {
                id: format!("episode-{seed}-{k}"),
                start: jittered_start(options, &mut rng),
                target,
                direction: GraspDirection::ALL[rng.random_range(0..GraspDirection::COUNT)],
                duration: None,
                rate,
            };
            generate_reach_trajectory(scene, &request, options, rng::derive_seed(seed, "episode-reach", k as u64))
        })
        .collect()
}

/// Rotation taking the neutral palm normal to `normal`; convenience for
/// visualisation.
pub fn palm_rotation(normal: &Vec3) -> UnitQuaternion<f64> {
    UnitQuaternion::rotation_between(&NEUTRAL_PALM_NORMAL, normal).unwrap_or_else(|| UnitQuaternion::from_axis_angle(&Vec3::z_axis(), PI))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(target: usize, dir: GraspDirection, duration: Option<f64>) -> ReachRequest {
        ReachRequest { id: "r".into(), start: Vec3::new(0.0, 0.0, 0.25), target, direction: dir, duration, rate: 180.0 }
    }

    #[test]
    fn ends_at_grasp_point() {
        let scene = SceneConfig::desk(1);
        for (t, d) in [(0, GraspDirection::Top), (2, GraspDirection::Right)] {
            let traj = generate_reach_trajectory(&scene, &request(t, d, None), &ReachOptions::default(), 5).unwrap();
            traj.validate().unwrap();
            let end = traj.states.last().unwrap();
            assert!((end.position - grasp_point(&scene, t, d).unwrap()).norm() <= 0.005);
            assert!((end.palm_normal - canonical_palm_normal(d)).norm() < 1e-9);
            assert!((2.0..=5.0).contains(&traj.duration));
        }
    }

    #[test]
    fn zero_perturbation_is_exact_min_jerk() {
        let scene = SceneConfig::desk(1);
        let opts = ReachOptions { perturbation_amplitude: 0.0, ..ReachOptions::default() };
        let req = request(1, GraspDirection::Top, Some(3.0));
        let traj = generate_reach_trajectory(&scene, &req, &opts, 2).unwrap();
        let goal = grasp_point(&scene, 1, GraspDirection::Top).unwrap();
        let n = traj.states.len() - 1;
        for (i, s) in traj.states.iter().enumerate() {
            let expect = req.start + (goal - req.start) * min_jerk(i as f64 / n as f64);
            assert!((s.position - expect).norm() < 1e-9);
        }
        let dt = 1.0 / req.rate;
        let v0 = (traj.states[1].position - traj.states[0].position).norm() / dt;
        let v1 = (traj.states[n].position - traj.states[n - 1].position).norm() / dt;
        // Finite-difference velocity at the ends scales with dt²; at 180 Hz it is ~1e-5.
        assert!(v0 < 1e-4 && v1 < 1e-4, "{v0} {v1}");
        assert_eq!(min_jerk(0.0), 0.0);
        assert_eq!(min_jerk(1.0), 1.0);
        let h = 1e-6;
        for tau in [0.0, 1.0] {
            let deriv = (min_jerk(tau + h) - min_jerk(tau - h)) / (2.0 * h);
            assert!(deriv.abs() < 1e-9);
        }
    }

    #[test]
    fn user_models() {
        let scene = SceneConfig::desk(1);
        let traj = generate_reach_trajectory(&scene, &request(0, GraspDirection::Right, Some(5.55)), &ReachOptions::default(), 9).unwrap();
        assert!(traj.states.len() >= 1000);
        assert_eq!(apply_user_model(&traj, &UserModel::new(UserKind::Normal, 1)).unwrap(), traj);

        let biased = apply_user_model(&traj, &UserModel::new(UserKind::Biased, 1)).unwrap();
        let b0 = biased.states[0].position - traj.states[0].position;
        assert!(b0.norm() > 0.0);
        for (a, b) in biased.states.iter().zip(&traj.states) {
            assert!(((a.position - b.position) - b0).norm() < 1e-12);
        }

        let noisy = apply_user_model(&traj, &UserModel::new(UserKind::Noisy, 1)).unwrap();
        let diffs: Vec<f64> = noisy.states.iter().zip(&traj.states).map(|(a, b)| a.position.x - b.position.x).collect();
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let std = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (diffs.len() - 1) as f64).sqrt();
        assert!((0.007..=0.013).contains(&std), "{std}");

        for t in [&biased, &noisy] {
            assert_eq!((t.states.len(), t.rate, t.duration, t.target_object, t.grasp_direction), (traj.states.len(), traj.rate, traj.duration, traj.target_object, traj.grasp_direction));
            t.validate().unwrap();
        }
    }

    #[test]
    fn dataset_balanced_and_deterministic() {
        let scene = SceneConfig::desk(3);
        let opts = ReachOptions { duration_range: (2.0, 2.2), ..ReachOptions::default() };
        let data = generate_dataset(&scene, 350, 60.0, &opts, 11).unwrap();
        assert_eq!(data.len(), 350);
        let mut counts = [0usize; 6];
        for t in &data {
            t.validate().unwrap();
            counts[t.target_object * 2 + t.grasp_direction.index()] += 1;
        }
        assert!(counts.iter().all(|&c| c == 58 || c == 59), "{counts:?}");
        let layouts: std::collections::BTreeSet<String> = data.iter().map(|t| format!("{:?}", t.object_positions)).collect();
        assert_eq!(layouts.len(), NUM_LAYOUTS);
        assert_eq!(generate_dataset(&scene, 350, 60.0, &opts, 11).unwrap(), data);
    }

    #[test]
    fn rejects_bad_requests() {
        let scene = SceneConfig::desk(1);
        let mut r = request(0, GraspDirection::Top, Some(0.0));
        assert!(generate_reach_trajectory(&scene, &r, &ReachOptions::default(), 0).is_err());
        r.duration = Some(2.0);
        r.rate = 0.0;
        assert!(generate_reach_trajectory(&scene, &r, &ReachOptions::default(), 0).is_err());
        assert!(generate_reach_trajectory(&SceneConfig::benchmark(0), &request(0, GraspDirection::Top, None), &ReachOptions::default(), 0).is_err());
    }

    #[test]
    fn episode_covers_each_object_once() {
        let demos = episode_demonstrations(&SceneConfig::desk(0), 180.0, &ReachOptions::default(), 4).unwrap();
        let mut targets: Vec<usize> = demos.iter().map(|t| t.target_object).collect();
        targets.sort();
        assert_eq!(targets, vec![0, 1, 2]);
    }
}
