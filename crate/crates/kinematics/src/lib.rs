//! Kinematic model of a closed-chain, two-actuator hip module.
//!
//! Each leg's hip is driven by two parallel linear actuators whose shafts
//! meet at a hinge on the thigh link. Moving both shafts in the same
//! direction flexes the hip; moving them in opposite directions abducts it.
//! This crate maps between hip joint angles and shaft lengths in both
//! directions, with loop-closure residuals reported on every solution.

pub mod chain;
pub mod geometry;
pub mod rotation;

pub use chain::{
    forward_kinematics, inverse_kinematics, pose_top_branch, ChainSolution, ForwardSolution,
    InverseSolution, TopBranch, CLOSURE_TOLERANCE,
};
pub use geometry::{ActuatorState, ExoGeometry, HipJointAngles, PelvisPose, Side};

#[derive(Debug, thiserror::Error)]
pub enum KinematicsError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid geometry config: {0}")]
    InvalidConfig(String),
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("Unreachable: {0}")]
    Unreachable(String),
    #[error("StrokeLimit: {actuator} = {value:.6} m outside [{min}, {max}]")]
    StrokeLimit {
        actuator: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("NoConvergence: residual {residual:.3e} m after {iterations} iterations")]
    NoConvergence { iterations: usize, residual: f64 },
}
