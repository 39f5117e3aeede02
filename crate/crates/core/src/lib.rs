//! Traded-control teleoperation toolkit.
//!
//! The crate covers the whole loop of a desk-scale pick-up task driven by
//! hand gestures:
//!
//! * [`scene`]: parametric objects, a synthetic depth camera and a
//!   segmentation stand-in.
//! * [`registration`]: centroid (`mask_pose`) and rigid coherent point
//!   drift (`mesh_pose`) initial pose estimates.
//! * [`tracker`]: particle-filter pose refinement over depth frames.
//! * [`metrics`]: ADD-S, accuracy-threshold curves, AUC.
//! * [`intent`]: hand features, a two-head MLP intent classifier and the
//!   commitment gate.
//! * [`simuser`]: synthetic reach-and-grasp demonstrations and the
//!   Normal/Noisy/Biased user models.
//! * [`control`]: reach planning and the Early/Late traded-control
//!   episode simulator.
//! * [`harness`]: configuration, experiment orchestration, exports and
//!   the live session service.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod intent;
pub mod metrics;
pub mod registration;
pub mod rng;
pub mod scene;
pub mod simuser;
pub mod spatial;
pub mod tracker;

pub use error::{Error, Result};
pub use geometry::{Point, PointCloud, Pose, Vec3};
pub use scene::{CameraModel, GraspDirection, ObjectModel, Primitive, SceneConfig};
