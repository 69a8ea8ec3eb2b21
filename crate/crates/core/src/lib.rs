//! Floating-base character physics, contact estimation and IMU calibration.

pub mod calibration;
pub mod contact;
pub mod dynamics;
pub mod error;
pub mod gravity;
pub mod io;
pub mod math;
pub mod metrics;
pub mod pipeline;
pub mod solver;
pub mod synth;
pub mod skeleton;
pub mod tracking;
pub mod translation;

pub use dynamics::DynamicsModel;
pub use error::{Error, Result};
pub use skeleton::{CharacterState, Endpoint, SkeletonModel};
pub use translation::EstimatorFrame;
