//! Rigid-body math and serial-arm kinematics.
//!
//! Everything here is a pure function over immutable values: forward
//! kinematics, the geometric Jacobian in the arm base frame, quaternion
//! algebra with a fixed shorter-rotation sign convention, and the
//! skew-symmetric (cross-product) operator.

use nalgebra as na;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = na::Vector3<f64>;
pub type Mat3 = na::Matrix3<f64>;
pub type Mat6 = na::Matrix6<f64>;
pub type Mat3x6 = na::Matrix3x6<f64>;
pub type Mat5x6 = na::SMatrix<f64, 5, 6>;
pub type JointVector = na::Vector6<f64>;
pub type UnitQuat = na::UnitQuaternion<f64>;
pub type Iso3 = na::Isometry3<f64>;

/// Number of joints; the whole crate is specialized to 6-DoF serial arms.
pub const JOINT_COUNT: usize = 6;

/// Rigid-body position and orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: UnitQuat,
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            position: Vec3::zeros(),
            orientation: UnitQuat::identity(),
        }
    }

    pub fn from_isometry(iso: &Iso3) -> Self {
        Pose {
            position: iso.translation.vector,
            orientation: iso.rotation,
        }
    }

    pub fn to_isometry(&self) -> Iso3 {
        Iso3::from_parts(self.position.into(), self.orientation)
    }
}

/// 6-D spatial velocity, split into linear and angular parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Twist {
    pub linear: Vec3,
    pub angular: Vec3,
}

impl Twist {
    pub fn zero() -> Self {
        Twist {
            linear: Vec3::zeros(),
            angular: Vec3::zeros(),
        }
    }
}

/// Cross-product matrix: `skew(k) * v == k.cross(&v)` for every `v`.
pub fn skew(k: &Vec3) -> Mat3 {
    Mat3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0)
}

/// Hamilton product of two unit quaternions, renormalized to absorb
/// floating-point drift.
pub fn quat_multiply(a: &UnitQuat, b: &UnitQuat) -> UnitQuat {
    let raw = a.into_inner() * b.into_inner();
    UnitQuat::new_normalize(raw)
}

/// Scalar and vector parts of an orientation error quaternion.
///
/// The scalar part is always non-negative: of the two quaternions that
/// represent the same rotation, the one commanding the shorter rotation is
/// returned, so proportional feedback on `vector` never takes the long way
/// around.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientationError {
    pub scalar: f64,
    pub vector: Vec3,
}

impl OrientationError {
    pub fn zero() -> Self {
        OrientationError {
            scalar: 1.0,
            vector: Vec3::zeros(),
        }
    }
}

/// Error rotation taking `current` onto `desired`: desired ⊗ current⁻¹.
pub fn quat_error(desired: &UnitQuat, current: &UnitQuat) -> OrientationError {
    let dq = quat_multiply(desired, &current.inverse());
    let q = dq.into_inner();
    // Unit quaternions double-cover rotations; pin the scalar part >= 0.
    let sign = if q.w < 0.0 { -1.0 } else { 1.0 };
    OrientationError {
        scalar: sign * q.w,
        vector: sign * q.imag(),
    }
}

/// One revolute joint: a fixed transform from the previous frame followed by
/// a rotation about `axis` through the joint variable.
#[derive(Debug, Clone, PartialEq)]
pub struct JointParam {
    pub origin: Iso3,
    pub axis: na::Unit<Vec3>,
}

/// Kinematic description of a 6-DoF serial arm with revolute joints.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmModel {
    joints: Vec<JointParam>,
    ee_offset: Iso3,
    pos_min: JointVector,
    pos_max: JointVector,
    vel_min: JointVector,
    vel_max: JointVector,
}

impl ArmModel {
    pub fn new(
        joints: Vec<JointParam>,
        ee_offset: Iso3,
        pos_min: JointVector,
        pos_max: JointVector,
        vel_min: JointVector,
        vel_max: JointVector,
    ) -> Result<Self> {
        if joints.len() != JOINT_COUNT {
            return Err(Error::Model(format!(
                "expected {JOINT_COUNT} joints, got {}",
                joints.len()
            )));
        }
        for i in 0..JOINT_COUNT {
            if !(pos_min[i] < pos_max[i]) {
                return Err(Error::Model(format!(
                    "joint {}: position limits must satisfy min < max (got {} >= {})",
                    i + 1,
                    pos_min[i],
                    pos_max[i]
                )));
            }
            if !(vel_min[i] < 0.0 && vel_max[i] > 0.0) {
                return Err(Error::Model(format!(
                    "joint {}: velocity limits must straddle zero (got [{}, {}])",
                    i + 1,
                    vel_min[i],
                    vel_max[i]
                )));
            }
        }
        Ok(ArmModel {
            joints,
            ee_offset,
            pos_min,
            pos_max,
            vel_min,
            vel_max,
        })
    }

    pub fn joints(&self) -> &[JointParam] {
        &self.joints
    }

    pub fn ee_offset(&self) -> &Iso3 {
        &self.ee_offset
    }

    pub fn pos_min(&self) -> &JointVector {
        &self.pos_min
    }

    pub fn pos_max(&self) -> &JointVector {
        &self.pos_max
    }

    pub fn vel_min(&self) -> &JointVector {
        &self.vel_min
    }

    pub fn vel_max(&self) -> &JointVector {
        &self.vel_max
    }

    /// True when every component of `theta` is strictly inside the position
    /// limits.
    pub fn within_limits(&self, theta: &JointVector) -> bool {
        (0..JOINT_COUNT).all(|i| self.pos_min[i] < theta[i] && theta[i] < self.pos_max[i])
    }
}

/// Frame of each joint axis (after the fixed offset, before the joint
/// rotation) plus the end-effector frame, all in the arm base frame.
fn chain_frames(model: &ArmModel, theta: &JointVector) -> (Vec<Iso3>, Iso3) {
    let mut frames = Vec::with_capacity(JOINT_COUNT);
    let mut acc = Iso3::identity();
    for (i, joint) in model.joints.iter().enumerate() {
        let joint_frame = acc * joint.origin;
        frames.push(joint_frame);
        let spin = UnitQuat::from_axis_angle(&joint.axis, theta[i]);
        acc = joint_frame * Iso3::from_parts(na::Translation3::identity(), spin);
    }
    (frames, acc * model.ee_offset)
}

/// End-effector pose in the arm base frame.
pub fn forward_kinematics(model: &ArmModel, theta: &JointVector) -> Pose {
    let (_, ee) = chain_frames(model, theta);
    Pose::from_isometry(&ee)
}

/// Geometric Jacobian in the arm base frame: rows 1-3 map joint rates to
/// end-effector linear velocity, rows 4-6 to angular velocity. Column i is
/// `[z_i x (p_E - p_i); z_i]` with `z_i` the i-th joint axis direction and
/// `p_i` a point on that axis.
pub fn geometric_jacobian(model: &ArmModel, theta: &JointVector) -> Mat6 {
    let (frames, ee) = chain_frames(model, theta);
    let p_e = ee.translation.vector;
    let mut j = Mat6::zeros();
    for (i, frame) in frames.iter().enumerate() {
        let z = frame.rotation * model.joints[i].axis.into_inner();
        let p = frame.translation.vector;
        let linear = z.cross(&(p_e - p));
        j.fixed_view_mut::<3, 1>(0, i).copy_from(&linear);
        j.fixed_view_mut::<3, 1>(3, i).copy_from(&z);
    }
    j
}

/// Split a full Jacobian into its translational (top) and rotational
/// (bottom) 3x6 blocks.
pub fn split_jacobian(j: &Mat6) -> (Mat3x6, Mat3x6) {
    (
        j.fixed_view::<3, 6>(0, 0).into_owned(),
        j.fixed_view::<3, 6>(3, 0).into_owned(),
    )
}

fn translation(x: f64, y: f64, z: f64) -> Iso3 {
    Iso3::translation(x, y, z)
}

/// The arm shipped with the repo: a shoulder-mounted 6R chain reaching
/// forward along +x, with a yaw/pitch shoulder, an elbow, and a
/// roll-pitch-roll wrist. All-zero joint angles stretch the arm flat, which
/// puts both the elbow and the wrist at singular configurations; working
/// configurations bend well away from that. The link lengths are sized so
/// the default torso motions stay trackable under the 0.1 rad/s joint
/// velocity caps.
pub fn default_model() -> ArmModel {
    let x = na::Unit::new_normalize(Vec3::x());
    let y = na::Unit::new_normalize(Vec3::y());
    let z = na::Unit::new_normalize(Vec3::z());
    let joints = vec![
        JointParam {
            origin: translation(0.0, 0.0, 0.05),
            axis: z,
        },
        JointParam {
            origin: translation(0.05, 0.0, 0.05),
            axis: y,
        },
        JointParam {
            origin: translation(0.50, 0.0, 0.0),
            axis: y,
        },
        JointParam {
            origin: translation(0.40, 0.0, 0.0),
            axis: x,
        },
        JointParam {
            origin: translation(0.10, 0.0, 0.0),
            axis: y,
        },
        JointParam {
            origin: translation(0.05, 0.0, 0.0),
            axis: x,
        },
    ];
    let ee_offset = translation(0.08, 0.0, 0.0);
    let pos_min = JointVector::repeat(-2.9);
    let pos_max = JointVector::repeat(2.9);
    let vel_min = JointVector::repeat(-0.1);
    let vel_max = JointVector::repeat(0.1);
    ArmModel::new(joints, ee_offset, pos_min, pos_max, vel_min, vel_max)
        .expect("default model is valid")
}
