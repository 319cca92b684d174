//! Motion compensation for a shoulder-mounted 6-DoF arm.
//!
//! A person wearing an arm on their shoulder is a floating-base robot whose
//! base moves with the torso. This crate plans joint velocities that hold
//! the arm's end-effector still in space while the wearer moves: it models
//! the floating-base velocity kinematics, converts streamed torso poses into
//! local compensation errors, solves the resulting task-priority inverse
//! kinematics with two planners (nullspace projection and a reconstructed
//! 5x6 Jacobian), filters singular values so commands stay bounded near
//! singularities, clamps joint motion to its limits, and simulates the whole
//! closed loop deterministically for evaluation.

pub mod error;
pub mod floating_base;
pub mod frames;
pub mod io;
pub mod kinematics;
pub mod limits;
pub mod metrics;
pub mod planner;
pub mod sim;

pub use error::{Error, Result};

/// Version string recorded in manifests and log headers.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
