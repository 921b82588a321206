//! Simulated self/other distinction by active inference.
//!
//! A seven-joint arm waves in front of a mirror (or watches another
//! agent), learns a mixture-density forward model from the hand's image
//! position, drives itself by free-energy descent and accumulates
//! likelihood evidence to decide whether the moving blob is itself.

pub mod contingency;
pub mod error;
pub mod evidence;
pub mod harness;
pub mod inference;
pub mod mdn;
pub mod nn;
pub mod rng;
pub mod schedule;
pub mod simworld;
pub mod weights;

pub use error::{Error, Result};

/// Joint count of the simulated arm.
pub const DOF: usize = 7;
/// Bins in the flow-direction histogram.
pub const HIST_BINS: usize = 10;

/// Joint angles, velocities or gradients.
pub type Joints = nalgebra::SVector<f64, DOF>;
/// Normalized image coordinates in `[0,1]²`.
pub type ImagePoint = nalgebra::Vector2<f64>;
/// `∂g/∂μ`, image coordinates per radian.
pub type ImageJacobian = nalgebra::SMatrix<f64, 2, DOF>;
pub type Histogram = [f64; HIST_BINS];
