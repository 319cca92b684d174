//! Local home frame and the streamed-pose-to-error pipeline.
//!
//! Compensation happens around a working position. When the wearer stands
//! still there, the torso frame at that instant is frozen as the local home
//! frame, and from then on every streamed torso pose is converted to
//! home-frame quantities: the base displacement (home minus current, so a
//! forward step reads negative), the base velocity, and the end-effector
//! position and orientation errors that the planners drive to zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{
    forward_kinematics, quat_error, ArmModel, JointVector, Mat3, OrientationError, Pose, UnitQuat,
    Vec3,
};

/// Torso speed below which the wearer counts as standing still for home
/// capture.
pub const QUIESCENCE_SPEED: f64 = 0.02;

/// One streamed torso pose sample in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HumanSample {
    /// Seconds since the start of the stream.
    pub t: f64,
    /// Torso position (m).
    pub position: Vec3,
    /// Torso orientation.
    pub orientation: UnitQuat,
    /// Torso linear velocity (m/s).
    pub velocity: Vec3,
}

/// The frozen local working frame: torso pose at capture time plus the arm's
/// end-effector pose at that instant. Immutable once captured.
#[derive(Debug, Clone, Copy)]
pub struct HomeFrame {
    /// Torso position at capture, world frame.
    pub torso_position: Vec3,
    /// Rotation taking world-frame vectors into the home frame (the
    /// transpose of the torso orientation at capture).
    pub world_to_home: Mat3,
    /// End-effector pose in the arm base frame at capture.
    pub ee_home: Pose,
}

impl HomeFrame {
    /// End-effector orientation in the arm base frame at capture.
    pub fn ee_orientation(&self) -> UnitQuat {
        self.ee_home.orientation
    }
}

/// Freezes the home frame from a quiescent sample, using the default
/// stillness threshold.
pub fn capture_home(sample: &HumanSample, model: &ArmModel, theta: &JointVector) -> Result<HomeFrame> {
    capture_home_with_threshold(sample, model, theta, QUIESCENCE_SPEED)
}

/// Freezes the home frame, rejecting the sample if the torso is moving
/// faster than `threshold` (m/s).
pub fn capture_home_with_threshold(
    sample: &HumanSample,
    model: &ArmModel,
    theta: &JointVector,
    threshold: f64,
) -> Result<HomeFrame> {
    let speed = sample.velocity.norm();
    if speed >= threshold {
        return Err(Error::NotAtRest { speed, threshold });
    }
    Ok(HomeFrame {
        torso_position: sample.position,
        world_to_home: sample
            .orientation
            .to_rotation_matrix()
            .into_inner()
            .transpose(),
        ee_home: forward_kinematics(model, theta),
    })
}

/// Base displacement in the home frame, oriented home-minus-current: a step
/// forward along world x with an identity home orientation yields a negative
/// x component.
pub fn base_displacement(home: &HomeFrame, sample: &HumanSample) -> Vec3 {
    home.world_to_home * (home.torso_position - sample.position)
}

/// Torso (equals base) velocity expressed in the home frame.
pub fn base_velocity_local(home: &HomeFrame, sample: &HumanSample) -> Vec3 {
    home.world_to_home * sample.velocity
}

/// End-effector position error the planner drives to zero.
///
/// The base term is home-minus-current and the arm term must match that
/// orientation, so the arm's contribution enters as (home minus current)
/// too: the error vanishes exactly when the arm's reach change cancels the
/// base displacement, and proportional feedback on it pushes the loop
/// toward that point.
pub fn ee_position_variation(home: &HomeFrame, sample: &HumanSample, fk_now: &Pose) -> Vec3 {
    base_displacement(home, sample) + (home.ee_home.position - fk_now.position)
}

/// Orientation error between the captured and current end-effector
/// orientation, both in the arm base frame. With the torso orientation held
/// steady, base-frame control is equivalent to home-frame control.
pub fn ee_orientation_error(home: &HomeFrame, ee_orientation_now: &UnitQuat) -> OrientationError {
    quat_error(&home.ee_home.orientation, ee_orientation_now)
}

/// Angular speed implied by two consecutive orientation samples, used to
/// flag ticks where the steady-torso assumption does not hold.
pub fn angular_speed_between(prev: &UnitQuat, next: &UnitQuat, dt: f64) -> f64 {
    if dt <= 0.0 {
        return 0.0;
    }
    prev.angle_to(next) / dt
}

/// Serializable form of a torso sample, shared by the trace file formats.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HumanSampleRecord {
    pub t: f64,
    pub px: f64,
    pub py: f64,
    pub pz: f64,
    pub qw: f64,
    pub qx: f64,
    pub qy: f64,
    pub qz: f64,
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
}

impl From<&HumanSample> for HumanSampleRecord {
    fn from(s: &HumanSample) -> Self {
        let q = s.orientation.into_inner();
        HumanSampleRecord {
            t: s.t,
            px: s.position.x,
            py: s.position.y,
            pz: s.position.z,
            qw: q.w,
            qx: q.i,
            qy: q.j,
            qz: q.k,
            vx: s.velocity.x,
            vy: s.velocity.y,
            vz: s.velocity.z,
        }
    }
}

impl From<&HumanSampleRecord> for HumanSample {
    fn from(r: &HumanSampleRecord) -> Self {
        HumanSample {
            t: r.t,
            position: Vec3::new(r.px, r.py, r.pz),
            orientation: UnitQuat::new_normalize(nalgebra::Quaternion::new(
                r.qw, r.qx, r.qy, r.qz,
            )),
            velocity: Vec3::new(r.vx, r.vy, r.vz),
        }
    }
}
