//! Grasp-intent prediction from hand motion.
//!
//! Eight hand features feed a small MLP with two classification heads
//! (target object, grasp direction). A commitment gate turns the noisy
//! per-sample predictions into a single goal once the same answer has been
//! produced for enough consecutive samples after a warm-up.

mod dataset;
mod eval;
mod gate;
mod mlp;
mod train;

pub use dataset::{read_dataset, write_dataset, DATASET_COLUMNS};
pub use eval::{accuracy_in_progress_range, accuracy_over_progress, predict, read_progress_csv, write_progress_csv, BinAccuracy};
pub use gate::{Commitment, GateConfig, GateState, Prediction};
pub use mlp::{
    mlp_forward, softmax, Activation, Dense, Gradients, MlpArchitecture, MlpParams, TrainingMetadata,
    MODEL_FORMAT_VERSION,
};
pub use train::{expand_examples, train, train_examples, Example, TrainConfig};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::scene::GraspDirection;

/// Number of candidate objects the classifier distinguishes.
pub const NUM_OBJECTS: usize = 3;
pub const NUM_FEATURES: usize = 8;

/// One sample of hand tracking.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HandState {
    pub position: Vec3,
    /// Unit vector the hand points along.
    pub direction: Vec3,
    /// Unit palm normal.
    pub palm_normal: Vec3,
    /// Rotation of the hand about the y axis, radians.
    pub y_rotation: f64,
    pub timestamp: f64,
}

impl HandState {
    pub fn validate(&self) -> Result<()> {
        let finite = self.position.iter().chain(self.direction.iter()).chain(self.palm_normal.iter()).all(|v| v.is_finite())
            && self.y_rotation.is_finite()
            && self.timestamp.is_finite();
        if !finite {
            return Err(Error::invalid("hand state contains non-finite values"));
        }
        if (self.direction.norm() - 1.0).abs() > 1e-6 || (self.palm_normal.norm() - 1.0).abs() > 1e-6 {
            return Err(Error::invalid("hand direction and palm normal must be unit vectors"));
        }
        Ok(())
    }
}

/// `[d_obj1, d_obj2, d_obj3, pos_x, dir_x, normal_x, normal_y, y_rotation]`.
/// The order is part of the model contract.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureVector(pub [f64; NUM_FEATURES]);

impl FeatureVector {
    pub fn values(&self) -> &[f64; NUM_FEATURES] {
        &self.0
    }
}

/// Distances from the hand to each object centre, then the hand-pose
/// components in the fixed order of [`FeatureVector`]. All quantities are
/// in the world frame.
pub fn extract_features(hand: &HandState, object_positions: &[Vec3]) -> Result<FeatureVector> {
    if object_positions.len() != NUM_OBJECTS {
        return Err(Error::invalid(format!(
            "expected {NUM_OBJECTS} object positions, got {}",
            object_positions.len()
        )));
    }
    let d = |i: usize| (hand.position - object_positions[i]).norm();
    Ok(FeatureVector([
        d(0),
        d(1),
        d(2),
        hand.position.x,
        hand.direction.x,
        hand.palm_normal.x,
        hand.palm_normal.y,
        hand.y_rotation,
    ]))
}

/// A reach-and-grasp demonstration labeled with its goal.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledTrajectory {
    pub id: String,
    pub states: Vec<HandState>,
    /// Object centres of the layout the demonstration was recorded in.
    pub object_positions: Vec<Vec3>,
    pub target_object: usize,
    pub grasp_direction: GraspDirection,
    /// Sample rate, Hz.
    pub rate: f64,
    pub duration: f64,
}

impl LabeledTrajectory {
    pub fn validate(&self) -> Result<()> {
        if self.states.len() < 2 {
            return Err(Error::invalid(format!("trajectory {} has fewer than 2 states", self.id)));
        }
        if self.object_positions.len() != NUM_OBJECTS || self.target_object >= NUM_OBJECTS {
            return Err(Error::invalid(format!("trajectory {} has an invalid object layout or target", self.id)));
        }
        if !(self.rate > 0.0) || !(self.duration > 0.0) {
            return Err(Error::invalid(format!("trajectory {} needs positive rate and duration", self.id)));
        }
        for s in &self.states {
            s.validate()?;
        }
        if self.states.windows(2).any(|w| w[1].timestamp < w[0].timestamp) {
            return Err(Error::invalid(format!("trajectory {} timestamps decrease", self.id)));
        }
        Ok(())
    }

    pub fn features(&self) -> Result<Vec<FeatureVector>> {
        self.states.iter().map(|s| extract_features(s, &self.object_positions)).collect()
    }
}
