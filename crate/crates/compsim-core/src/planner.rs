//! Differential IK: pseudo-inversion with and without singular-value
//! filtering, and the two task-priority planners.
//!
//! The nullspace method (NBM) feeds the base velocity through the
//! translational Jacobian and keeps the end-effector orientation as a
//! secondary task projected into the translational nullspace; it has no
//! position feedback, so any velocity it fails to track is lost. The
//! reconstructed-Jacobian method (RJM) stacks the three translational rows
//! with two of the rotational rows into a single 5x6 task and closes the
//! loop with proportional feedback on the position error.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kinematics::{JointVector, Mat5x6, Mat6, OrientationError, Vec3};

/// Condition-number ceiling above which [`pinv`] refuses to invert.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Parameters of the singular-value filter
/// `f(s) = (s^3 + shape*s^2 + 2s + 2*sigma_min) / (s^2 + shape*s + 2)`.
///
/// `f(0) = sigma_min` exactly, `f(s) = s + 2*sigma_min/(s^2 + shape*s + 2)`
/// everywhere, so filtered singular values never fall below their unfiltered
/// value and large ones pass through nearly unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvfParams {
    /// Floor that zero singular values are lifted to.
    pub sigma_min: f64,
    /// Shape factor controlling how sharply the filter fades out.
    pub shape: f64,
}

impl Default for SvfParams {
    fn default() -> Self {
        SvfParams {
            sigma_min: 0.01,
            shape: 10.0,
        }
    }
}

/// Filtered singular value; see [`SvfParams`].
pub fn svf_filter(sigma: f64, params: &SvfParams) -> f64 {
    let s = sigma;
    let v = params.shape;
    (s * s * s + v * s * s + 2.0 * s + 2.0 * params.sigma_min) / (s * s + v * s + 2.0)
}

/// Which pseudo-inverse the planners use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PinvStrategy {
    /// Singular-value-filtered inverse: bounded near singularities.
    #[default]
    Svf,
    /// Plain SVD inverse (zero singular values dropped, small ones kept):
    /// exact away from singularities, unbounded near them.
    Unfiltered,
}

impl fmt::Display for PinvStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PinvStrategy::Svf => write!(f, "svf"),
            PinvStrategy::Unfiltered => write!(f, "unfiltered"),
        }
    }
}

impl FromStr for PinvStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "svf" => Ok(PinvStrategy::Svf),
            "unfiltered" => Ok(PinvStrategy::Unfiltered),
            other => Err(Error::Config(format!(
                "unknown pseudo-inverse strategy '{other}' (expected svf or unfiltered)"
            ))),
        }
    }
}

/// The two planners.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Nbm,
    Rjm,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Nbm => write!(f, "nbm"),
            Method::Rjm => write!(f, "rjm"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nbm" => Ok(Method::Nbm),
            "rjm" => Ok(Method::Rjm),
            other => Err(Error::Config(format!(
                "unknown method '{other}' (expected nbm or rjm)"
            ))),
        }
    }
}

/// A Cartesian rotation axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    /// The two axes kept when this one is released, in x-before-y-before-z
    /// order.
    pub fn kept(self) -> [Axis; 2] {
        match self {
            Axis::X => [Axis::Y, Axis::Z],
            Axis::Y => [Axis::X, Axis::Z],
            Axis::Z => [Axis::X, Axis::Y],
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Axis::X => write!(f, "x"),
            Axis::Y => write!(f, "y"),
            Axis::Z => write!(f, "z"),
        }
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            "z" => Ok(Axis::Z),
            other => Err(Error::Config(format!(
                "unknown axis '{other}' (expected x, y or z)"
            ))),
        }
    }
}

/// Proportional gains, applied componentwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    /// Position-error gain (RJM only; NBM has no position feedback).
    pub k_pos: Vec3,
    /// Orientation-error gain on the error quaternion's vector part.
    pub k_ori: Vec3,
}

impl Default for Gains {
    fn default() -> Self {
        Gains {
            k_pos: Vec3::repeat(1.0),
            k_ori: Vec3::repeat(1.0),
        }
    }
}

/// One planner output: the commanded joint rates before limiting, plus the
/// smallest singular value of the task Jacobian the step inverted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerCommand {
    pub theta_dot: JointVector,
    pub sigma_min: f64,
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.ncols())
        .map(|c| m.column(c).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Moore-Penrose pseudo-inverse through the normal equations:
/// `A^T (A A^T)^-1` for wide matrices, `(A^T A)^-1 A^T` for tall ones.
/// Refuses (rather than amplifies noise) when the Gram matrix's 1-norm
/// condition estimate exceeds [`CONDITION_LIMIT`].
pub fn pinv(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let wide = m.nrows() <= m.ncols();
    let gram = if wide { m * m.transpose() } else { m.transpose() * m };
    let inv = gram
        .clone()
        .lu()
        .try_inverse()
        .ok_or(Error::NearSingular { cond: f64::INFINITY })?;
    let cond = one_norm(&gram) * one_norm(&inv);
    if !cond.is_finite() || cond > CONDITION_LIMIT {
        return Err(Error::NearSingular { cond });
    }
    Ok(if wide {
        m.transpose() * inv
    } else {
        inv * m.transpose()
    })
}

/// Damped pseudo-inverse `sum_i s_i / (s_i^2 + lambda^2) v_i u_i^T`.
/// Exactly-zero singular values contribute nothing; with `lambda = 0` this
/// reduces to the plain SVD pseudo-inverse.
pub fn damped_pinv(m: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("svd with u requested");
    let v_t = svd.v_t.expect("svd with v_t requested");
    let coeffs = svd.singular_values.map(|s| {
        if s == 0.0 {
            0.0
        } else {
            s / (s * s + lambda * lambda)
        }
    });
    v_t.transpose() * DMatrix::from_diagonal(&coeffs) * u.transpose()
}

/// Plain SVD pseudo-inverse with no filtering: `1/s` for every nonzero
/// singular value, however small. Blows up near singularities by design —
/// it is the baseline the filtered inverse is compared against.
pub fn unfiltered_pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    damped_pinv(m, 0.0)
}

/// The matrix rebuilt from its SVD with every singular value passed through
/// the filter: `sum_i f(s_i) u_i v_i^T` over all `min(m, n)` triplets,
/// zero singular values included.
pub fn svf_jacobian(m: &DMatrix<f64>, params: &SvfParams) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("svd with u requested");
    let v_t = svd.v_t.expect("svd with v_t requested");
    let filtered = svd.singular_values.map(|s| svf_filter(s, params));
    u * DMatrix::from_diagonal(&filtered) * v_t
}

/// Pseudo-inverse of the filtered matrix: `sum_i 1/f(s_i) v_i u_i^T`.
/// Since `f(s) >= sigma_min > 0` for every `s >= 0`, this is always finite,
/// with spectral norm at most `1/sigma_min`.
pub fn svf_pinv(m: &DMatrix<f64>, params: &SvfParams) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("svd with u requested");
    let v_t = svd.v_t.expect("svd with v_t requested");
    let coeffs = svd.singular_values.map(|s| 1.0 / svf_filter(s, params));
    v_t.transpose() * DMatrix::from_diagonal(&coeffs) * u.transpose()
}

/// Smallest singular value.
pub fn min_singular_value(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.min()
}

/// Nullspace projector `I - pinv(J) * J` of a task Jacobian.
pub fn nullspace_projector(j_pinv: &DMatrix<f64>, j: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::identity(j.ncols(), j.ncols()) - j_pinv * j
}

fn strategy_pinv(m: &DMatrix<f64>, strategy: PinvStrategy, svf: &SvfParams) -> DMatrix<f64> {
    match strategy {
        PinvStrategy::Svf => svf_pinv(m, svf),
        PinvStrategy::Unfiltered => unfiltered_pinv(m),
    }
}

fn dyn_rows(m: &Mat6, rows: std::ops::Range<usize>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows.len(), 6);
    for (k, r) in rows.enumerate() {
        for c in 0..6 {
            out[(k, c)] = m[(r, c)];
        }
    }
    out
}

fn joint_vector_from(v: &DVector<f64>) -> JointVector {
    JointVector::from_column_slice(v.as_slice())
}

/// Nullspace-based step. Primary task: make the end-effector's linear
/// velocity cancel the base's (`Jv theta_dot = -v_base`). Secondary task:
/// orientation restoration, projected into the primary task's nullspace so
/// it can never disturb the linear tracking.
pub fn nbm_step(
    jacobian: &Mat6,
    base_velocity: &Vec3,
    orientation_error: &OrientationError,
    gains: &Gains,
    strategy: PinvStrategy,
    svf: &SvfParams,
) -> PlannerCommand {
    let jv = dyn_rows(jacobian, 0..3);
    let jw = dyn_rows(jacobian, 3..6);
    let jv_pinv = strategy_pinv(&jv, strategy, svf);
    let jw_pinv = strategy_pinv(&jw, strategy, svf);
    let primary = &jv_pinv * DVector::from_column_slice((-base_velocity).as_slice());
    let xi0 = jw_pinv
        * DVector::from_column_slice(gains.k_ori.component_mul(&orientation_error.vector).as_slice());
    let theta_dot = primary + nullspace_projector(&jv_pinv, &jv) * xi0;
    PlannerCommand {
        theta_dot: joint_vector_from(&theta_dot),
        sigma_min: min_singular_value(&jv),
    }
}

/// The 5x6 reconstructed Jacobian: all three translational rows stacked on
/// the two rotational rows kept after releasing `released`.
pub fn reconstruct_jacobian(jacobian: &Mat6, released: Axis) -> Mat5x6 {
    let mut out = Mat5x6::zeros();
    for r in 0..3 {
        for c in 0..6 {
            out[(r, c)] = jacobian[(r, c)];
        }
    }
    for (k, axis) in released.kept().into_iter().enumerate() {
        for c in 0..6 {
            out[(3 + k, c)] = jacobian[(3 + axis.index(), c)];
        }
    }
    out
}

/// Reconstructed-Jacobian step. A single 5-dimensional task: the three
/// linear rows track `-v_base` plus proportional position-error feedback,
/// and the two kept rotational rows take proportional orientation-error
/// feedback. The released rotation axis is left free.
pub fn rjm_step(
    jacobian: &Mat6,
    base_velocity: &Vec3,
    position_error: &Vec3,
    orientation_error: &OrientationError,
    gains: &Gains,
    released: Axis,
    strategy: PinvStrategy,
    svf: &SvfParams,
) -> PlannerCommand {
    let jr_fixed = reconstruct_jacobian(jacobian, released);
    let jr = DMatrix::from_column_slice(5, 6, jr_fixed.as_slice());
    let jr_pinv = strategy_pinv(&jr, strategy, svf);
    let linear = -base_velocity + gains.k_pos.component_mul(position_error);
    let mut target = DVector::zeros(5);
    for i in 0..3 {
        target[i] = linear[i];
    }
    for (k, axis) in released.kept().into_iter().enumerate() {
        let i = axis.index();
        target[3 + k] = gains.k_ori[i] * orientation_error.vector[i];
    }
    let theta_dot = jr_pinv * target;
    PlannerCommand {
        theta_dot: joint_vector_from(&theta_dot),
        sigma_min: min_singular_value(&jr),
    }
}
