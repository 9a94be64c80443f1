//! Privacy-preserving radiation absence verification by a mobile inspector.

pub mod coverage;
pub mod discretization;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod policy;
pub mod sensing;
pub mod stats;

pub use error::{Error, Result};
pub use geometry::{MapSpec, Obstacle, Pose, SourceSpec, Vec2};
pub use policy::{AlgoParams, Decision, InspectorMemory, TrialResult};
