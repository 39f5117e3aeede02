//! Particle-filter 6D pose refinement.
//!
//! Each step diffuses the particles, weights them by how well the model,
//! placed at the particle pose, explains the observed cloud, and resamples
//! when the effective sample size collapses. The distance is the
//! symmetrised mean nearest-point distance between the visible part of the
//! posed model and the observation.

use nalgebra::{Quaternion, UnitQuaternion};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::{Point, PointCloud, Pose, Vec3};
use crate::rng;
use crate::scene::{CameraModel, ObjectModel};
use crate::spatial::KdTree;

#[derive(Clone, Debug, PartialEq)]
pub struct TrackerConfig {
    pub num_particles: usize,
    /// Per-step translation diffusion std, meters.
    pub diffusion_trans: f64,
    /// Per-step rotation diffusion std, radians (axis-angle components).
    pub diffusion_rot: f64,
    pub likelihood_sigma: f64,
    /// Resample when the effective sample size drops below this fraction
    /// of the particle count.
    pub resample_threshold: f64,
    /// Model and observation clouds are thinned to at most this many points.
    pub max_model_points: usize,
    pub max_observed_points: usize,
    /// When set, only model points facing this camera enter the
    /// model-to-observation distance.
    pub camera: Option<CameraModel>,
    pub seed: u64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            num_particles: 200,
            diffusion_trans: 0.002,
            diffusion_rot: 1f64.to_radians(),
            likelihood_sigma: 0.005,
            resample_threshold: 0.5,
            max_model_points: 200,
            max_observed_points: 200,
            camera: None,
            seed: 0,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_particles < 2 {
            return Err(Error::invalid("num_particles must be at least 2"));
        }
        for (name, v) in [
            ("diffusion_trans", self.diffusion_trans),
            ("diffusion_rot", self.diffusion_rot),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be >= 0")));
            }
        }
        if !(self.likelihood_sigma > 0.0 && self.likelihood_sigma.is_finite()) {
            return Err(Error::invalid("likelihood_sigma must be positive"));
        }
        if !(self.resample_threshold > 0.0 && self.resample_threshold <= 1.0) {
            return Err(Error::invalid("resample_threshold must be in (0, 1]"));
        }
        if self.max_model_points == 0 || self.max_observed_points == 0 {
            return Err(Error::invalid("point limits must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Particle {
    pub pose: Pose,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSet {
    particles: Vec<Particle>,
    estimate: Pose,
    step_count: usize,
    config: TrackerConfig,
}

impl ParticleSet {
    /// Builds a set from explicit particles; weights are normalized.
    pub fn from_particles(particles: Vec<Particle>, estimate: Pose, config: TrackerConfig) -> Result<Self> {
        config.validate()?;
        if particles.is_empty() {
            return Err(Error::invalid("particle set must not be empty"));
        }
        let total: f64 = particles.iter().map(|p| p.weight).sum();
        if !(total > 0.0) || particles.iter().any(|p| !(p.weight >= 0.0)) {
            return Err(Error::invalid("particle weights must be non-negative with a positive sum"));
        }
        let particles = particles
            .into_iter()
            .map(|p| Particle { pose: p.pose, weight: p.weight / total })
            .collect();
        Ok(ParticleSet { particles, estimate, step_count: 0, config })
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    /// Current pose estimate.
    pub fn estimate(&self) -> Pose {
        self.estimate
    }

    pub fn effective_sample_size(&self) -> f64 {
        1.0 / self.particles.iter().map(|p| p.weight * p.weight).sum::<f64>()
    }
}

fn diffuse(pose: &Pose, config: &TrackerConfig, rng: &mut rng::Rng) -> Pose {
    if config.diffusion_trans == 0.0 && config.diffusion_rot == 0.0 {
        return *pose;
    }
    let nt = Normal::new(0.0, config.diffusion_trans).expect("validated std");
    let nr = Normal::new(0.0, config.diffusion_rot).expect("validated std");
    let dt = Vec3::new(nt.sample(rng), nt.sample(rng), nt.sample(rng));
    let dr = Vec3::new(nr.sample(rng), nr.sample(rng), nr.sample(rng));
    // Perturb about the object's own origin.
    Pose::new(UnitQuaternion::from_scaled_axis(dr) * pose.rotation(), pose.translation() + dt)
}

/// Samples the initial particle cloud around `init` with one diffusion step.
pub fn init_tracker(init: &Pose, config: TrackerConfig) -> Result<ParticleSet> {
    config.validate()?;
    let mut rng = rng::indexed_stream(config.seed, "tracker-init", 0);
    let w = 1.0 / config.num_particles as f64;
    let particles = (0..config.num_particles)
        .map(|_| Particle { pose: diffuse(init, &config, &mut rng), weight: w })
        .collect();
    Ok(ParticleSet { particles, estimate: *init, step_count: 0, config })
}

/// Weighted translation mean and sign-aligned, renormalized quaternion mean.
fn weighted_mean(particles: &[Particle]) -> Pose {
    let best = particles
        .iter()
        .max_by(|a, b| a.weight.total_cmp(&b.weight))
        .expect("non-empty");
    let reference = best.pose.rotation().into_inner();
    let mut t = Vec3::zeros();
    let mut q = Quaternion::new(0.0, 0.0, 0.0, 0.0);
    for p in particles {
        t += p.pose.translation() * p.weight;
        let qi = p.pose.rotation().into_inner();
        let sign = if qi.coords.dot(&reference.coords) < 0.0 { -1.0 } else { 1.0 };
        q += qi * (sign * p.weight);
    }
    let rotation = if q.norm() > 1e-12 {
        UnitQuaternion::from_quaternion(q)
    } else {
        best.pose.rotation()
    };
    Pose::new(rotation, t)
}

fn systematic_resample(particles: &[Particle], rng: &mut rng::Rng) -> Vec<Particle> {
    let n = particles.len();
    let step = 1.0 / n as f64;
    let start = rng.random::<f64>() * step;
    let w = step;
    let mut out = Vec::with_capacity(n);
    let mut cumulative = particles[0].weight;
    let mut i = 0;
    for k in 0..n {
        let u = start + k as f64 * step;
        while u > cumulative && i + 1 < n {
            i += 1;
            cumulative += particles[i].weight;
        }
        out.push(Particle { pose: particles[i].pose, weight: w });
    }
    out
}

/// Posed-model to observation distance used as the likelihood input.
struct LikelihoodModel<'a> {
    model_points: Vec<Point>,
    model_normals: Vec<Vec3>,
    model_tree: KdTree,
    observed: Vec<Point>,
    observed_tree: KdTree,
    camera: Option<&'a CameraModel>,
}

impl<'a> LikelihoodModel<'a> {
    fn new(model: &ObjectModel, observed: &PointCloud, config: &'a TrackerConfig) -> Self {
        let mi = rng::subsample_indices(model.reference_points.len(), config.max_model_points, config.seed, "tracker-model");
        let model_points: Vec<Point> = mi.iter().map(|&i| model.reference_points.points()[i]).collect();
        let model_normals: Vec<Vec3> = mi.iter().map(|&i| model.reference_normals[i]).collect();
        let oi = rng::subsample_indices(observed.len(), config.max_observed_points, config.seed, "tracker-observed");
        let observed: Vec<Point> = oi.iter().map(|&i| observed.points()[i]).collect();
        LikelihoodModel {
            model_tree: KdTree::build(&model_points),
            observed_tree: KdTree::build(&observed),
            model_points,
            model_normals,
            observed,
            camera: config.camera.as_ref(),
        }
    }

    fn distance(&self, pose: &Pose) -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for (p, n) in self.model_points.iter().zip(&self.model_normals) {
            let wp = pose.transform_point(p);
            if let Some(cam) = self.camera {
                if !cam.sees(&wp, &pose.transform_vector(n)) {
                    continue;
                }
            }
            sum += self.observed_tree.nearest_dist2(&wp).sqrt();
            count += 1;
        }
        let forward = if count > 0 { sum / count as f64 } else { f64::INFINITY };
        let inv = pose.inverse();
        let backward = self
            .observed
            .iter()
            .map(|o| self.model_tree.nearest_dist2(&inv.transform_point(o)).sqrt())
            .sum::<f64>()
            / self.observed.len() as f64;
        0.5 * (forward + backward)
    }
}

/// Advances the filter by one observation.
///
/// Fails with [`Error::TrackerDiverged`] when every particle has zero
/// likelihood; the error carries the last valid estimate.
pub fn track_step(state: &ParticleSet, model: &ObjectModel, observed: &PointCloud) -> Result<ParticleSet> {
    if observed.is_empty() {
        return Err(Error::invalid("observed cloud must not be empty"));
    }
    let config = &state.config;
    let step = state.step_count + 1;
    let mut rng = rng::indexed_stream(config.seed, "tracker-step", step as u64);

    let diffused: Vec<Pose> = state.particles.iter().map(|p| diffuse(&p.pose, config, &mut rng)).collect();
    let lik = LikelihoodModel::new(model, observed, config);
    let inv2s = 1.0 / (2.0 * config.likelihood_sigma * config.likelihood_sigma);
    let mut weights: Vec<f64> = diffused
        .iter()
        .zip(&state.particles)
        .map(|(pose, prev)| {
            let d = lik.distance(pose);
            prev.weight * (-d * d * inv2s).exp()
        })
        .collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::TrackerDiverged { step, last_estimate: state.estimate });
    }
    weights.iter_mut().for_each(|w| *w /= total);
    let particles: Vec<Particle> = diffused
        .into_iter()
        .zip(weights)
        .map(|(pose, weight)| Particle { pose, weight })
        .collect();
    let estimate = weighted_mean(&particles);

    let ess = 1.0 / particles.iter().map(|p| p.weight * p.weight).sum::<f64>();
    let particles = if ess < config.resample_threshold * particles.len() as f64 {
        systematic_resample(&particles, &mut rng)
    } else {
        particles
    };
    Ok(ParticleSet { particles, estimate, step_count: step, config: config.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::add_s;
    use crate::scene::Primitive;

    fn model() -> ObjectModel {
        ObjectModel::new("box", Primitive::Box { size: [0.12, 0.07, 0.05] }, 400, 1).unwrap()
    }

    #[test]
    fn init_uniform_weights() {
        let cfg = TrackerConfig { num_particles: 100, ..TrackerConfig::default() };
        let init = Pose::from_translation(Vec3::new(0.1, 0.2, 0.3));
        let s = init_tracker(&init, cfg.clone()).unwrap();
        assert_eq!(s.particles().len(), 100);
        assert!(s.particles().iter().all(|p| (p.weight - 0.01).abs() < 1e-15));
        assert_eq!(s.estimate(), init);
        assert_eq!(s, init_tracker(&init, cfg).unwrap());
        assert_eq!(s.estimate(), s.estimate());
    }

    #[test]
    fn zero_diffusion_particles_equal_init() {
        let cfg = TrackerConfig { diffusion_trans: 0.0, diffusion_rot: 0.0, ..TrackerConfig::default() };
        let init = Pose::from_axis_angle(Vec3::x(), 0.2, Vec3::new(0.0, 0.1, 0.0));
        let s = init_tracker(&init, cfg).unwrap();
        assert!(s.particles().iter().all(|p| p.pose == init));
        let obs = init.transform_cloud(&model().reference_points);
        let next = track_step(&s, &model(), &obs).unwrap();
        assert!((next.estimate().translation() - init.translation()).norm() < 1e-12);
        assert!(next.estimate().rotation().angle_to(&init.rotation()) < 1e-12);
    }

    #[test]
    fn weight_concentrates_on_exact_particle() {
        let m = model();
        let truth = Pose::from_translation(Vec3::new(0.0, 0.3, 0.05));
        let cfg = TrackerConfig { diffusion_trans: 0.0, diffusion_rot: 0.0, num_particles: 5, ..TrackerConfig::default() };
        let particles: Vec<Particle> = (0..5)
            .map(|i| Particle {
                pose: Pose::from_translation(truth.translation() + Vec3::new(0.004 * i as f64, 0.0, 0.0)),
                weight: 1.0,
            })
            .collect();
        let s = ParticleSet::from_particles(particles, truth, cfg).unwrap();
        let obs = truth.transform_cloud(&m.reference_points);
        let next = track_step(&s, &m, &obs).unwrap();
        let best = next
            .particles()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.weight.total_cmp(&b.1.weight))
            .unwrap();
        assert_eq!(best.1.pose, truth);
        let sum: f64 = next.particles().iter().map(|p| p.weight).sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn refines_static_object() {
        let m = model();
        let truth = Pose::from_axis_angle(Vec3::z(), 0.3, Vec3::new(0.0, 0.3, 0.025));
        let init = Pose::new(
            UnitQuaternion::from_axis_angle(&Vec3::x_axis(), 10f64.to_radians()) * truth.rotation(),
            truth.translation() + Vec3::new(0.02, 0.0, 0.0),
        );
        let mut s = init_tracker(&init, TrackerConfig { seed: 3, ..TrackerConfig::default() }).unwrap();
        let obs = truth.transform_cloud(&m.reference_points);
        let before = add_s(&m.reference_points, &truth, &s.estimate()).unwrap();
        for _ in 0..30 {
            s = track_step(&s, &m, &obs).unwrap();
            let sum: f64 = s.particles().iter().map(|p| p.weight).sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
        let after = add_s(&m.reference_points, &truth, &s.estimate()).unwrap();
        assert!(after < 0.01 && after < before, "{before} -> {after}");
    }

    #[test]
    fn teleported_object_diverges() {
        let m = model();
        let truth = Pose::from_translation(Vec3::new(0.0, 0.3, 0.025));
        let s = init_tracker(&truth, TrackerConfig::default()).unwrap();
        let far = Pose::from_translation(truth.translation() + Vec3::new(1.0, 0.0, 0.0));
        let obs = far.transform_cloud(&m.reference_points);
        match track_step(&s, &m, &obs) {
            Err(Error::TrackerDiverged { last_estimate, step }) => {
                assert_eq!(last_estimate, truth);
                assert_eq!(step, 1);
                // The caller keeps the old state, whose estimate is the last valid one.
                assert_eq!(s.estimate(), truth);
            }
            Ok(next) => assert!((next.estimate().translation() - far.translation()).norm() > 0.5),
            Err(e) => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn deterministic_trajectory() {
        let m = model();
        let truth = Pose::from_translation(Vec3::new(0.0, 0.3, 0.025));
        let init = Pose::from_translation(truth.translation() + Vec3::new(0.01, 0.0, 0.0));
        let obs = truth.transform_cloud(&m.reference_points);
        let run = || {
            let mut s = init_tracker(&init, TrackerConfig::default()).unwrap();
            (0..5)
                .map(|_| {
                    s = track_step(&s, &m, &obs).unwrap();
                    s.estimate()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn config_validation() {
        assert!(init_tracker(&Pose::identity(), TrackerConfig { num_particles: 1, ..TrackerConfig::default() }).is_err());
        assert!(init_tracker(&Pose::identity(), TrackerConfig { resample_threshold: 0.0, ..TrackerConfig::default() }).is_err());
        assert!(init_tracker(&Pose::identity(), TrackerConfig { diffusion_rot: -1.0, ..TrackerConfig::default() }).is_err());
    }
}
