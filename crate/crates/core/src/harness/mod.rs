//! Configuration, experiment orchestration, file exports and the live
//! session service.

pub mod commands;
pub mod config;
pub mod pipeline;
pub mod server;
pub mod session;

pub use config::{load_scene, ExperimentConfig, DEFAULT_BIND, ENV_BIND, ENV_OUTPUT_DIR};
pub use pipeline::{run_pipeline_eval, MethodSummary, PipelineReport, PipelineSettings};
pub use session::{ClientMessage, ServerMessage, Session, SessionContext};
