//! Joint velocity and position limiting.
//!
//! Commanded rates are clipped componentwise into the model's velocity
//! range, joints sitting on a position bound are deactivated, and the Euler
//! update clips any residual overshoot back onto the bound. Deactivation is
//! strict by default — a joint exactly on a bound stays held even if the
//! command points back inside — with an opt-in direction-aware mode that
//! releases a joint whose command retreats from the bound.

use serde::{Deserialize, Serialize};

use crate::kinematics::{ArmModel, JointVector, JOINT_COUNT};

/// How joints at a position bound are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LimitMode {
    /// A joint on (or past) a bound is held regardless of the command.
    #[default]
    Literal,
    /// A joint on a bound moves again as soon as the command points back
    /// into the valid range.
    DirectionAware,
}

impl std::fmt::Display for LimitMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LimitMode::Literal => "literal",
            LimitMode::DirectionAware => "direction-aware",
        })
    }
}

impl std::str::FromStr for LimitMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "literal" => Ok(LimitMode::Literal),
            "direction-aware" => Ok(LimitMode::DirectionAware),
            other => Err(crate::Error::Config(format!(
                "unknown limit mode {other:?} (expected literal or direction-aware)"
            ))),
        }
    }
}

/// Componentwise clip of a commanded rate into the model's velocity range.
/// The flag is true when any component was reduced.
pub fn clamp_velocity(model: &ArmModel, theta_dot: &JointVector) -> (JointVector, bool) {
    let mut out = *theta_dot;
    let mut saturated = false;
    for i in 0..JOINT_COUNT {
        let lo = model.vel_min()[i];
        let hi = model.vel_max()[i];
        if out[i] < lo {
            out[i] = lo;
            saturated = true;
        } else if out[i] > hi {
            out[i] = hi;
            saturated = true;
        }
    }
    (out, saturated)
}

/// Per-joint activation: true only while the joint is strictly inside its
/// position bounds.
pub fn activation_flags(model: &ArmModel, theta: &JointVector) -> [bool; JOINT_COUNT] {
    let mut h = [false; JOINT_COUNT];
    for i in 0..JOINT_COUNT {
        h[i] = model.pos_min()[i] < theta[i] && theta[i] < model.pos_max()[i];
    }
    h
}

/// Activation that also re-admits a joint on a bound when its commanded
/// rate points back into the valid range.
pub fn activation_flags_direction_aware(
    model: &ArmModel,
    theta: &JointVector,
    theta_dot: &JointVector,
) -> [bool; JOINT_COUNT] {
    let mut h = activation_flags(model, theta);
    for i in 0..JOINT_COUNT {
        if !h[i] {
            let escaping_low = theta[i] <= model.pos_min()[i] && theta_dot[i] > 0.0;
            let escaping_high = theta[i] >= model.pos_max()[i] && theta_dot[i] < 0.0;
            h[i] = escaping_low || escaping_high;
        }
    }
    h
}

/// Outcome of one limited Euler step.
#[derive(Debug, Clone, Copy)]
pub struct StepResult {
    /// Joint positions after the step, guaranteed inside the position range.
    pub theta: JointVector,
    /// The rate actually applied: clamped command with held joints zeroed.
    pub applied_rate: JointVector,
    /// True when the velocity clamp reduced any component.
    pub saturated: bool,
    /// Activation flags used for this step.
    pub active: [bool; JOINT_COUNT],
}

/// One Euler step under the full limiting scheme: clamp the rate, zero the
/// rate of deactivated joints, integrate, and clip overshoot back onto the
/// position bounds.
pub fn integrate_step(
    model: &ArmModel,
    theta: &JointVector,
    theta_dot: &JointVector,
    dt: f64,
    mode: LimitMode,
) -> StepResult {
    let (clamped, saturated) = clamp_velocity(model, theta_dot);
    let active = match mode {
        LimitMode::Literal => activation_flags(model, theta),
        LimitMode::DirectionAware => activation_flags_direction_aware(model, theta, &clamped),
    };
    let mut applied = clamped;
    for i in 0..JOINT_COUNT {
        if !active[i] {
            applied[i] = 0.0;
        }
    }
    let mut next = theta + applied * dt;
    for i in 0..JOINT_COUNT {
        next[i] = next[i].clamp(model.pos_min()[i], model.pos_max()[i]);
    }
    StepResult {
        theta: next,
        applied_rate: applied,
        saturated,
        active,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::default_model;
    use approx::assert_abs_diff_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn clamp_passes_in_range_rates_untouched() {
        let model = default_model();
        let rate = JointVector::from_row_slice(&[0.05, -0.03, 0.0, 0.099, -0.1, 0.1]);
        let (out, saturated) = clamp_velocity(&model, &rate);
        assert_eq!(out, rate);
        assert!(!saturated);
    }

    #[test]
    fn clamp_clips_each_component_to_its_bound() {
        let model = default_model();
        let rate = JointVector::from_row_slice(&[0.5, -0.5, 0.1, -0.1, 2.0, 0.0]);
        let (out, saturated) = clamp_velocity(&model, &rate);
        let expected = JointVector::from_row_slice(&[0.1, -0.1, 0.1, -0.1, 0.1, 0.0]);
        assert_eq!(out, expected);
        assert!(saturated);
    }

    #[test]
    fn activation_is_strict_at_the_bound() {
        let model = default_model();
        let mut theta = JointVector::zeros();
        assert_eq!(activation_flags(&model, &theta), [true; 6]);
        theta[2] = model.pos_max()[2]; // exactly on the bound: held
        let h = activation_flags(&model, &theta);
        assert!(!h[2]);
        assert!(h[0] && h[1] && h[3] && h[4] && h[5]);
        theta[2] = model.pos_max()[2] - 1e-12; // a hair inside: active
        assert!(activation_flags(&model, &theta)[2]);
    }

    #[test]
    fn direction_aware_releases_a_retreating_joint() {
        let model = default_model();
        let mut theta = JointVector::zeros();
        theta[1] = model.pos_max()[1];
        let mut rate = JointVector::zeros();
        rate[1] = -0.05;
        assert!(activation_flags_direction_aware(&model, &theta, &rate)[1]);
        rate[1] = 0.05; // still pushing outward: held
        assert!(!activation_flags_direction_aware(&model, &theta, &rate)[1]);
        theta[1] = model.pos_min()[1];
        rate[1] = 0.05;
        assert!(activation_flags_direction_aware(&model, &theta, &rate)[1]);
    }

    #[test]
    fn literal_mode_holds_the_joint_even_when_retreating() {
        let model = default_model();
        let mut theta = JointVector::zeros();
        theta[3] = model.pos_max()[3];
        let mut rate = JointVector::zeros();
        rate[3] = -0.05;
        let step = integrate_step(&model, &theta, &rate, 1.0 / 60.0, LimitMode::Literal);
        assert_eq!(step.theta[3], model.pos_max()[3]);
        assert_eq!(step.applied_rate[3], 0.0);
        let step = integrate_step(&model, &theta, &rate, 1.0 / 60.0, LimitMode::DirectionAware);
        assert!(step.theta[3] < model.pos_max()[3]);
    }

    #[test]
    fn euler_step_hand_check() {
        let model = default_model();
        let theta = JointVector::from_row_slice(&[0.1, 0.2, -0.3, 0.0, 0.5, -0.6]);
        let rate = JointVector::from_row_slice(&[0.06, -0.06, 0.0, 0.1, -0.1, 0.03]);
        let dt = 1.0 / 60.0;
        let step = integrate_step(&model, &theta, &rate, dt, LimitMode::Literal);
        assert_abs_diff_eq!(step.theta, theta + rate * dt, epsilon = 1e-15);
        assert!(!step.saturated);
        assert_eq!(step.active, [true; 6]);
    }

    #[test]
    fn overshoot_is_clipped_onto_the_bound() {
        let model = default_model();
        let mut theta = JointVector::zeros();
        theta[0] = model.pos_max()[0] - 1e-4; // inside, but a step would cross
        let mut rate = JointVector::zeros();
        rate[0] = 0.1;
        let step = integrate_step(&model, &theta, &rate, 1.0, LimitMode::Literal);
        assert_eq!(step.theta[0], model.pos_max()[0]);
    }

    #[test]
    fn random_walk_never_leaves_the_box() {
        let model = default_model();
        let mut rng = StdRng::seed_from_u64(23);
        let mut theta = JointVector::zeros();
        for k in 0..10_000 {
            let mut rate = JointVector::zeros();
            for i in 0..JOINT_COUNT {
                // Rates well beyond the velocity limits, and a drift so the
                // walk actually reaches the position bounds.
                rate[i] = rng.random_range(-3.0..3.0) + 2.0;
            }
            let mode = if k % 2 == 0 {
                LimitMode::Literal
            } else {
                LimitMode::DirectionAware
            };
            let step = integrate_step(&model, &theta, &rate, 0.5, mode);
            theta = step.theta;
            for i in 0..JOINT_COUNT {
                assert!(theta[i] >= model.pos_min()[i] && theta[i] <= model.pos_max()[i]);
                assert!(step.applied_rate[i].abs() <= model.vel_max()[i].max(-model.vel_min()[i]) + 1e-15);
            }
        }
    }

    #[test]
    fn zero_dt_does_not_move() {
        let model = default_model();
        let theta = JointVector::from_row_slice(&[0.1, 0.2, -0.3, 0.0, 0.5, -0.6]);
        let rate = JointVector::repeat(0.1);
        let step = integrate_step(&model, &theta, &rate, 0.0, LimitMode::Literal);
        assert_eq!(step.theta, theta);
    }
}
