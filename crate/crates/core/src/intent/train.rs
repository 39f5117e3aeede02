//! Seeded mini-batch SGD with momentum on the joint two-head loss.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;

use super::mlp::{Dense, MlpArchitecture, MlpParams};
use super::{FeatureVector, LabeledTrajectory, NUM_FEATURES};
use crate::error::{Error, Result};
use crate::rng;

/// One per-timestep training example; labels come from the trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Example {
    pub features: FeatureVector,
    pub object: usize,
    pub direction: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Keep every n-th timestep of each trajectory (the last is always kept).
    pub sample_stride: usize,
    pub architecture: MlpArchitecture,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            momentum: 0.9,
            epochs: 20,
            batch_size: 64,
            seed: 0,
            sample_stride: 4,
            architecture: MlpArchitecture::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must lie in [0, 1)"));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.sample_stride == 0 {
            return Err(Error::invalid("epochs, batch_size and sample_stride must be positive"));
        }
        if self.architecture.inputs != NUM_FEATURES {
            return Err(Error::invalid("architecture input size must equal the feature count"));
        }
        Ok(())
    }
}

/// Expands trajectories into per-timestep examples.
pub fn expand_examples(dataset: &[LabeledTrajectory], stride: usize) -> Result<Vec<Example>> {
    let stride = stride.max(1);
    let mut out = Vec::new();
    for traj in dataset {
        traj.validate()?;
        let feats = traj.features()?;
        let last = feats.len() - 1;
        for (i, f) in feats.into_iter().enumerate() {
            if i % stride == 0 || i == last {
                out.push(Example { features: f, object: traj.target_object, direction: traj.grasp_direction.index() });
            }
        }
    }
    Ok(out)
}

fn batch_matrix(examples: &[Example], idx: &[usize]) -> (DMatrix<f64>, Vec<usize>, Vec<usize>) {
    let mut x = DMatrix::zeros(NUM_FEATURES, idx.len());
    let mut o = Vec::with_capacity(idx.len());
    let mut d = Vec::with_capacity(idx.len());
    for (c, &i) in idx.iter().enumerate() {
        x.set_column(c, &DVector::from_column_slice(&examples[i].features.0));
        o.push(examples[i].object);
        d.push(examples[i].direction);
    }
    (x, o, d)
}

/// Trains on per-timestep examples expanded from `dataset`.
pub fn train(dataset: &[LabeledTrajectory], config: &TrainConfig) -> Result<MlpParams> {
    if dataset.is_empty() {
        return Err(Error::invalid("training dataset is empty"));
    }
    let examples = expand_examples(dataset, config.sample_stride)?;
    train_examples(&examples, config)
}

/// Trains directly on examples.
pub fn train_examples(examples: &[Example], config: &TrainConfig) -> Result<MlpParams> {
    config.validate()?;
    if examples.is_empty() {
        return Err(Error::invalid("no training examples"));
    }
    let arch = &config.architecture;
    if examples.iter().any(|e| e.object >= arch.num_objects || e.direction >= arch.num_directions) {
        return Err(Error::invalid("example label out of range for the architecture"));
    }
    if examples.iter().any(|e| e.features.0.iter().any(|v| !v.is_finite())) {
        return Err(Error::invalid("training features must be finite"));
    }
    let mut params = MlpParams::random(arch, config.seed)?;

    let n = examples.len() as f64;
    let mut mean = DVector::zeros(NUM_FEATURES);
    for e in examples {
        mean += DVector::from_column_slice(&e.features.0);
    }
    mean /= n;
    let mut var = DVector::<f64>::zeros(NUM_FEATURES);
    for e in examples {
        let d = DVector::from_column_slice(&e.features.0) - &mean;
        var += d.component_mul(&d);
    }
    params.input_mean = mean;
    params.input_scale = (var / n).map(|v| if v.sqrt() > 1e-9 { v.sqrt() } else { 1.0 });

    let mut warnings = Vec::new();
    let single = |f: &dyn Fn(&Example) -> usize| examples.iter().all(|e| f(e) == f(&examples[0]));
    if single(&|e| e.object) {
        warnings.push(format!("degenerate dataset: every example targets object {}", examples[0].object));
    }
    if single(&|e| e.direction) {
        warnings.push(format!("degenerate dataset: every example has direction {}", examples[0].direction));
    }
    for w in &warnings {
        log::warn!("{w}");
    }

    let zero_like = |l: &Dense| Dense { weights: DMatrix::zeros(l.outputs(), l.inputs()), bias: DVector::zeros(l.outputs()) };
    let mut vel_trunk: Vec<Dense> = params.trunk.iter().map(zero_like).collect();
    let mut vel_obj = zero_like(&params.object_head);
    let mut vel_dir = zero_like(&params.direction_head);
    let step = |p: &mut Dense, v: &mut Dense, g: &Dense| {
        v.weights *= config.momentum;
        v.weights -= &g.weights * config.learning_rate;
        v.bias *= config.momentum;
        v.bias -= &g.bias * config.learning_rate;
        p.weights += &v.weights;
        p.bias += &v.bias;
    };

    let mut shuffle_rng = rng::stream(config.seed, "train-shuffle");
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(config.batch_size) {
            let (x, o, d) = batch_matrix(examples, chunk);
            let (_, g) = params.loss_and_gradient(&x, &o, &d);
            for ((p, v), gl) in params.trunk.iter_mut().zip(vel_trunk.iter_mut()).zip(&g.trunk) {
                step(p, v, gl);
            }
            step(&mut params.object_head, &mut vel_obj, &g.object_head);
            step(&mut params.direction_head, &mut vel_dir, &g.direction_head);
        }
    }

    let mut total = 0.0;
    for chunk in (0..examples.len()).collect::<Vec<_>>().chunks(1024) {
        let (x, o, d) = batch_matrix(examples, chunk);
        total += params.loss(&x, &o, &d) * chunk.len() as f64;
    }
    let final_loss = total / n;
    if !final_loss.is_finite() {
        return Err(Error::invalid("training diverged (non-finite loss); lower the learning rate"));
    }
    params.metadata.final_loss = Some(final_loss);
    params.metadata.warnings = warnings;
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::intent::{predict, HandState};
    use crate::scene::GraspDirection;

    fn toy_traj(target: usize, dir: GraspDirection, x_end: f64) -> LabeledTrajectory {
        let objects = vec![Vec3::new(-0.2, 0.3, 0.0), Vec3::new(0.0, 0.3, 0.0), Vec3::new(0.2, 0.3, 0.0)];
        let normal = if dir == GraspDirection::Top { -Vec3::z() } else { -Vec3::x() };
        let states = (0..50)
            .map(|i| {
                let s = i as f64 / 49.0;
                HandState {
                    position: Vec3::new(x_end * s, 0.3 * s, 0.2),
                    direction: Vec3::y(),
                    palm_normal: normal,
                    y_rotation: 0.0,
                    timestamp: i as f64 * 0.01,
                }
            })
            .collect();
        LabeledTrajectory {
            id: format!("toy-{target}"),
            states,
            object_positions: objects,
            target_object: target,
            grasp_direction: dir,
            rate: 100.0,
            duration: 0.49,
        }
    }

    fn toy_config() -> TrainConfig {
        TrainConfig { epochs: 200, sample_stride: 1, batch_size: 16, seed: 3, ..TrainConfig::default() }
    }

    #[test]
    fn separable_toy_fits() {
        let data = vec![toy_traj(0, GraspDirection::Top, -0.2), toy_traj(2, GraspDirection::Right, 0.2)];
        let p = train(&data, &toy_config()).unwrap();
        for t in &data {
            let f = t.features().unwrap();
            let pred = predict(&p, f.last().unwrap(), None).unwrap();
            assert_eq!(pred.object, t.target_object);
            assert_eq!(pred.direction, t.grasp_direction);
        }
        assert!(p.metadata.final_loss.unwrap() < 0.1);
        assert!(p.metadata.warnings.is_empty());
    }

    #[test]
    fn training_is_deterministic() {
        let data = vec![toy_traj(0, GraspDirection::Top, -0.2), toy_traj(1, GraspDirection::Right, 0.0)];
        let cfg = TrainConfig { epochs: 5, ..toy_config() };
        let a = train(&data, &cfg).unwrap();
        let b = train(&data, &cfg).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        let c = train(&data, &TrainConfig { seed: 4, ..cfg }).unwrap();
        assert_ne!(a.to_text(), c.to_text());
    }

    #[test]
    fn single_class_dataset_warns() {
        let data = vec![toy_traj(1, GraspDirection::Top, 0.0)];
        let p = train(&data, &TrainConfig { epochs: 2, ..toy_config() }).unwrap();
        assert_eq!(p.metadata.warnings.len(), 2);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(train(&[], &TrainConfig::default()).is_err());
        let data = vec![toy_traj(1, GraspDirection::Top, 0.0)];
        assert!(train(&data, &TrainConfig { batch_size: 0, ..TrainConfig::default() }).is_err());
    }
}
