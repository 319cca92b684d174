//! Velocity-level kinematics of the arm on its moving base.
//!
//! The wearer's torso is the base of the kinematic chain, so end-effector
//! velocity is the sum of what the base motion drags along and what the
//! joints add. With the torso orientation held steady the angular part of
//! the base twist vanishes and the model collapses to
//! `[v_E; w_E] = [v_B; 0] + J_M * theta_dot`, which is the form every
//! planner in this crate consumes.

use crate::error::{Error, Result};
use crate::kinematics::{
    forward_kinematics, geometric_jacobian, skew, ArmModel, JointVector, Mat3, Mat6, Twist, Vec3,
};

/// Pose-rate state of the arm base (the torso mount) in the world frame.
#[derive(Debug, Clone, Copy)]
pub struct BaseState {
    pub rotation: Mat3,
    pub linear_velocity: Vec3,
    pub angular_velocity: Vec3,
}

impl BaseState {
    /// Checks that `rotation` is a proper rotation matrix.
    pub fn new(rotation: Mat3, linear_velocity: Vec3, angular_velocity: Vec3) -> Result<Self> {
        let defect = (rotation * rotation.transpose() - Mat3::identity()).norm();
        if defect > 1e-9 || (rotation.determinant() - 1.0).abs() > 1e-9 {
            return Err(Error::Model(format!(
                "base rotation is not orthonormal (defect {defect:.3e}, det {})",
                rotation.determinant()
            )));
        }
        Ok(BaseState {
            rotation,
            linear_velocity,
            angular_velocity,
        })
    }
}

/// Base and manipulator Jacobians of the floating-base model, with the
/// base-to-end-effector lever arm they were built from.
#[derive(Debug, Clone)]
pub struct FloatingJacobians {
    /// Maps the base twist to the end-effector twist it induces.
    pub base: Mat6,
    /// Manipulator Jacobian rotated into the world frame.
    pub manipulator: Mat6,
    /// Base-to-end-effector vector in the world frame.
    pub lever_arm: Vec3,
}

/// Jacobian of the base twist: `[[I, -skew(R_B * p_BE_body)], [0, I]]`.
///
/// `p_be_body` is the base-to-end-effector vector expressed in the base
/// frame; the lever arm couples base rotation into end-effector translation.
pub fn base_jacobian(r_b: &Mat3, p_be_body: &Vec3) -> Mat6 {
    let mut j = Mat6::identity();
    let lever = skew(&(r_b * p_be_body));
    j.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-lever));
    j
}

/// Rotates a base-frame Jacobian into the world frame:
/// `blockdiag(R_B, R_B) * J_body`.
pub fn world_jacobian(r_b: &Mat3, j_body: &Mat6) -> Mat6 {
    let mut out = Mat6::zeros();
    let jv = j_body.fixed_view::<3, 6>(0, 0);
    let jw = j_body.fixed_view::<3, 6>(3, 0);
    out.fixed_view_mut::<3, 6>(0, 0).copy_from(&(r_b * jv));
    out.fixed_view_mut::<3, 6>(3, 0).copy_from(&(r_b * jw));
    out
}

/// End-effector twist under the simplified model (base angular velocity
/// treated as zero): linear part rides the base, angular part comes from the
/// joints alone.
pub fn ee_twist(v_b: &Vec3, j_m: &Mat6, theta_dot: &JointVector) -> Twist {
    let full = j_m * theta_dot;
    Twist {
        linear: v_b + full.fixed_view::<3, 1>(0, 0).into_owned(),
        angular: full.fixed_view::<3, 1>(3, 0).into_owned(),
    }
}

/// Builds both Jacobians of the floating-base model at the given joint
/// configuration.
pub fn floating_jacobians(
    base: &BaseState,
    model: &ArmModel,
    theta: &JointVector,
) -> FloatingJacobians {
    let fk = forward_kinematics(model, theta);
    let lever_arm = base.rotation * fk.position;
    FloatingJacobians {
        base: base_jacobian(&base.rotation, &fk.position),
        manipulator: world_jacobian(&base.rotation, &geometric_jacobian(model, theta)),
        lever_arm,
    }
}
