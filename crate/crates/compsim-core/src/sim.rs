//! Synthetic torso motion, the closed compensation loop, and batch runs.
//!
//! This module stands in for the wearer and the hardware: it synthesizes
//! torso-motion traces (single-axis strokes and a seeded band-limited 3D
//! wander), runs the capture-errors-plan-integrate loop at a fixed rate,
//! and logs everything each tick — including the ground-truth end-effector
//! world position, the simulation's stand-in for an external tracker.
//!
//! One session is strictly sequential (each tick depends on the last), but
//! sessions are independent: [`run_batch`] fans a job list across threads
//! when the `parallel` feature is on, and [`run_batch_sequential`] is the
//! always-available ordered fallback.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::frames::{
    angular_speed_between, base_velocity_local, capture_home, ee_orientation_error,
    ee_position_variation, HumanSample,
};
use crate::kinematics::{
    forward_kinematics, geometric_jacobian, ArmModel, JointVector, UnitQuat, Vec3, JOINT_COUNT,
};
use crate::limits::{integrate_step, LimitMode};
use crate::planner::{nbm_step, rjm_step, Axis, Gains, Method, PinvStrategy, SvfParams};
use crate::TOOL_VERSION;

/// Loop and trace rate (Hz) used throughout unless overridden.
pub const DEFAULT_RATE: f64 = 60.0;

/// Arm-base origin in the torso frame (right-shoulder mount), meters.
pub const DEFAULT_MOUNT_OFFSET: [f64; 3] = [0.0, -0.18, 0.25];

/// Torso angular speed (rad/s) above which the steady-orientation
/// assumption is flagged as violated for that tick.
pub const STEADY_TORSO_LIMIT: f64 = 0.05;

/// Speed ceiling (m/s) the seeded 3D wander is scaled to respect, keeping
/// its demands trackable under the default joint velocity limits.
pub const RANDOM3D_SPEED_CAP: f64 = 0.08;

/// Joint configuration simulations start from: shoulder yawed and pitched
/// with the elbow folded deep, placing the end-effector ahead of the
/// wearer with translational authority in all directions and a wide margin
/// from the stretched-arm singularity across the default motion amplitudes.
pub const DEFAULT_INITIAL_THETA: [f64; 6] = [0.6, 1.0, -2.0, 0.0, 0.3, 0.0];

/// Commanded-rate magnitude treated as numerical divergence.
const DIVERGENCE_LIMIT: f64 = 1e12;

/// The synthetic torso-motion families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotionKind {
    /// Up-down stroke: main axis z.
    Ud,
    /// Left-right stroke: main axis y.
    Lr,
    /// Forward-backward stroke: main axis x.
    Fb,
    /// Seeded band-limited wander on all three axes.
    Rand3d,
}

impl MotionKind {
    /// Index of the stroke's main axis; `None` for the 3D wander.
    pub fn main_axis(self) -> Option<usize> {
        match self {
            MotionKind::Ud => Some(2),
            MotionKind::Lr => Some(1),
            MotionKind::Fb => Some(0),
            MotionKind::Rand3d => None,
        }
    }
}

impl fmt::Display for MotionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MotionKind::Ud => write!(f, "ud"),
            MotionKind::Lr => write!(f, "lr"),
            MotionKind::Fb => write!(f, "fb"),
            MotionKind::Rand3d => write!(f, "rand3d"),
        }
    }
}

impl FromStr for MotionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ud" => Ok(MotionKind::Ud),
            "lr" => Ok(MotionKind::Lr),
            "fb" => Ok(MotionKind::Fb),
            "rand3d" => Ok(MotionKind::Rand3d),
            other => Err(Error::Config(format!(
                "unknown motion '{other}' (expected ud, lr, fb or rand3d)"
            ))),
        }
    }
}

/// Parameters of a synthetic torso motion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionSpec {
    pub kind: MotionKind,
    /// Peak excursion from the start position (m).
    pub amplitude: f64,
    /// Stroke period; also the ramp-in time of the 3D wander (s).
    pub period: f64,
    /// Trace length (s).
    pub duration: f64,
    /// Seed for the 3D wander; ignored by the single-axis strokes.
    pub seed: u64,
    /// Fraction of the main-axis profile leaked onto the other two axes
    /// (single-axis strokes only), in [0, 0.3].
    pub cross_coupling: f64,
}

impl MotionSpec {
    pub fn new(kind: MotionKind) -> Self {
        MotionSpec {
            kind,
            amplitude: 0.15,
            period: 5.0,
            duration: 30.0,
            seed: 42,
            cross_coupling: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude >= 0.0) {
            return Err(Error::Config(format!(
                "amplitude must be non-negative, got {}",
                self.amplitude
            )));
        }
        if !(self.period > 0.0) {
            return Err(Error::Config(format!("period must be positive, got {}", self.period)));
        }
        if !(self.duration > 0.0) {
            return Err(Error::Config(format!(
                "duration must be positive, got {}",
                self.duration
            )));
        }
        if !(0.0..=0.3).contains(&self.cross_coupling) {
            return Err(Error::Config(format!(
                "cross_coupling must lie in [0, 0.3], got {}",
                self.cross_coupling
            )));
        }
        Ok(())
    }
}

/// One band-limited sinusoid component of the 3D wander.
struct WanderTone {
    omega: f64,
    phase: f64,
    coeff: f64,
}

/// Synthesizes a torso trace on a uniform grid at `rate` Hz. Positions are
/// C1 with zero initial position and velocity, velocities are the analytic
/// derivatives, and the orientation is held constant (identity), matching
/// the steady-torso assumption the planners rely on.
pub fn generate_motion(spec: &MotionSpec, rate: f64) -> Result<Vec<HumanSample>> {
    spec.validate()?;
    if !(rate > 0.0) {
        return Err(Error::Config(format!("rate must be positive, got {rate}")));
    }
    let n = (spec.duration * rate).round() as usize + 1;
    let dt = 1.0 / rate;
    let mut samples = Vec::with_capacity(n);

    match spec.kind {
        MotionKind::Ud | MotionKind::Lr | MotionKind::Fb => {
            let main = spec.kind.main_axis().expect("stroke kinds have a main axis");
            for k in 0..n {
                let t = k as f64 * dt;
                // Raised cosine: starts and peaks with zero velocity, peak
                // excursion exactly `amplitude`.
                let phase = 2.0 * PI * t / spec.period;
                let p_main = spec.amplitude / 2.0 * (1.0 - phase.cos());
                let v_main = spec.amplitude * PI / spec.period * phase.sin();
                let mut p = Vec3::repeat(spec.cross_coupling * p_main);
                let mut v = Vec3::repeat(spec.cross_coupling * v_main);
                p[main] = p_main;
                v[main] = v_main;
                samples.push(HumanSample {
                    t,
                    position: p,
                    orientation: UnitQuat::identity(),
                    velocity: v,
                });
            }
        }
        MotionKind::Rand3d => {
            // Per axis, a sum of four sinusoids with frequencies drawn from
            // a fixed low band, faded in by a raised-cosine ramp so the
            // trace starts at rest. One shared scale pins the peak
            // excursion to `amplitude` unless the speed cap binds first.
            let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
            let tones: Vec<Vec<WanderTone>> = (0..3)
                .map(|_| {
                    (0..4)
                        .map(|_| WanderTone {
                            omega: rng.random_range(2.0 * PI / 20.0..2.0 * PI / 6.0),
                            phase: rng.random_range(0.0..2.0 * PI),
                            coeff: rng.random_range(-1.0..1.0),
                        })
                        .collect()
                })
                .collect();
            let ramp = spec.period.min(spec.duration);
            let envelope = |t: f64| -> (f64, f64) {
                if t < ramp {
                    let e = 0.5 * (1.0 - (PI * t / ramp).cos());
                    let de = 0.5 * PI / ramp * (PI * t / ramp).sin();
                    (e, de)
                } else {
                    (1.0, 0.0)
                }
            };
            let raw = |axis: usize, t: f64| -> (f64, f64) {
                let mut x = 0.0;
                let mut dx = 0.0;
                for tone in &tones[axis] {
                    x += tone.coeff * (tone.omega * t + tone.phase).sin();
                    dx += tone.coeff * tone.omega * (tone.omega * t + tone.phase).cos();
                }
                (x, dx)
            };
            let mut unscaled: Vec<(f64, Vec3, Vec3)> = Vec::with_capacity(n);
            let mut max_p: f64 = 0.0;
            let mut max_v: f64 = 0.0;
            for k in 0..n {
                let t = k as f64 * dt;
                let (e, de) = envelope(t);
                let mut p = Vec3::zeros();
                let mut v = Vec3::zeros();
                for axis in 0..3 {
                    let (x, dx) = raw(axis, t);
                    p[axis] = e * x;
                    v[axis] = de * x + e * dx;
                }
                max_p = max_p.max(p.norm());
                max_v = max_v.max(v.norm());
                unscaled.push((t, p, v));
            }
            let scale = if max_p > 0.0 && max_v > 0.0 {
                (spec.amplitude / max_p).min(RANDOM3D_SPEED_CAP / max_v)
            } else {
                0.0
            };
            for (t, p, v) in unscaled {
                samples.push(HumanSample {
                    t,
                    position: p * scale,
                    orientation: UnitQuat::identity(),
                    velocity: v * scale,
                });
            }
        }
    }
    Ok(samples)
}

/// Resamples a trace onto a uniform grid at `rate` Hz spanning the original
/// time range: positions and velocities linearly interpolated, orientations
/// spherically interpolated. Resampling at a trace's own uniform rate is
/// the identity.
pub fn resample_trace(trace: &[HumanSample], rate: f64) -> Result<Vec<HumanSample>> {
    if trace.is_empty() {
        return Err(Error::Trace {
            line: None,
            message: "cannot resample an empty trace".into(),
        });
    }
    if !(rate > 0.0) {
        return Err(Error::Config(format!("rate must be positive, got {rate}")));
    }
    for k in 1..trace.len() {
        if trace[k].t <= trace[k - 1].t {
            return Err(Error::Trace {
                line: Some(k),
                message: format!(
                    "timestamps must be strictly increasing ({} after {})",
                    trace[k].t,
                    trace[k - 1].t
                ),
            });
        }
    }
    let t0 = trace[0].t;
    let span = trace.last().unwrap().t - t0;
    let n = (span * rate + 1e-9).floor() as usize + 1;
    let mut out = Vec::with_capacity(n);
    let mut seg = 0usize;
    for k in 0..n {
        let t = t0 + k as f64 / rate;
        while seg + 2 < trace.len() && trace[seg + 1].t < t {
            seg += 1;
        }
        let a = &trace[seg];
        let b = &trace[(seg + 1).min(trace.len() - 1)];
        let alpha = if b.t > a.t { ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0) } else { 0.0 };
        let orientation = a
            .orientation
            .try_slerp(&b.orientation, alpha, 1e-12)
            .unwrap_or(a.orientation);
        out.push(HumanSample {
            t,
            position: a.position.lerp(&b.position, alpha),
            orientation,
            velocity: a.velocity.lerp(&b.velocity, alpha),
        });
    }
    Ok(out)
}

/// Everything a compensation run needs besides the arm model and the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub method: Method,
    /// Loop rate (Hz); the trace must sit on this uniform grid.
    pub rate: f64,
    pub gains: Gains,
    pub svf: SvfParams,
    pub strategy: PinvStrategy,
    /// Rotation axis the reconstructed-Jacobian method leaves free.
    pub released: Axis,
    pub limit_mode: LimitMode,
    /// Starting joint configuration; must be inside the position limits.
    pub initial_theta: [f64; JOINT_COUNT],
    /// Arm-base origin in the torso frame (m).
    pub mount_offset: [f64; 3],
    /// Standard deviation of additive Gaussian noise on measured torso
    /// positions (m); 0 disables the noise path entirely.
    pub noise_std: f64,
    /// Seed for the measurement noise stream.
    pub noise_seed: u64,
    /// Diagnostic mode: plan normally but command zero rates, so the
    /// end-effector rides the torso rigidly (the no-compensation baseline).
    pub hold_joints: bool,
}

impl SimConfig {
    pub fn new(method: Method) -> Self {
        SimConfig {
            method,
            rate: DEFAULT_RATE,
            gains: Gains::default(),
            svf: SvfParams::default(),
            strategy: PinvStrategy::default(),
            released: Axis::X,
            limit_mode: LimitMode::default(),
            initial_theta: DEFAULT_INITIAL_THETA,
            mount_offset: DEFAULT_MOUNT_OFFSET,
            noise_std: 0.0,
            noise_seed: 0,
            hold_joints: false,
        }
    }
}

/// One logged tick. Field names double as the CSV column names.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickRow {
    pub t: f64,
    // Torso sample (world frame): position, orientation, velocity.
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
    // Base velocity in the home frame.
    pub vbx: f64,
    pub vby: f64,
    pub vbz: f64,
    // End-effector position error the planner saw (home frame).
    pub epx: f64,
    pub epy: f64,
    pub epz: f64,
    // Orientation error vector (base frame).
    pub eox: f64,
    pub eoy: f64,
    pub eoz: f64,
    // Joint positions at the start of the tick.
    pub th1: f64,
    pub th2: f64,
    pub th3: f64,
    pub th4: f64,
    pub th5: f64,
    pub th6: f64,
    // Planner-commanded joint rates, before any limiting.
    pub cmd1: f64,
    pub cmd2: f64,
    pub cmd3: f64,
    pub cmd4: f64,
    pub cmd5: f64,
    pub cmd6: f64,
    // Applied joint rates, after the velocity clamp and activation mask.
    pub act1: f64,
    pub act2: f64,
    pub act3: f64,
    pub act4: f64,
    pub act5: f64,
    pub act6: f64,
    // End-effector pose in the arm base frame.
    pub ebx: f64,
    pub eby: f64,
    pub ebz: f64,
    pub ebqw: f64,
    pub ebqx: f64,
    pub ebqy: f64,
    pub ebqz: f64,
    // Ground-truth end-effector position in the world frame.
    pub rx: f64,
    pub ry: f64,
    pub rz: f64,
    // Smallest singular value of the task Jacobian this tick.
    pub sig: f64,
    // 1 when the velocity clamp reduced any joint's command.
    pub sat: u8,
    // 1 when the torso's angular speed exceeded the steady-torso limit.
    pub p1: u8,
}

/// Run-level tags stored alongside the rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub tool_version: String,
    pub method: Method,
    pub strategy: PinvStrategy,
    pub released: Axis,
    pub rate: f64,
    /// Label of the motion scenario the trace came from.
    pub scenario: String,
    /// Seed of the synthetic motion, when one was used.
    pub seed: Option<u64>,
    pub samples: usize,
    /// True when any tick exceeded the steady-torso angular-speed limit.
    pub p1_violated: bool,
    /// Number of ticks where the velocity clamp was active.
    pub saturated_ticks: usize,
}

/// A complete logged run.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceLog {
    pub meta: RunMeta,
    pub rows: Vec<TickRow>,
}

fn check_uniform_grid(trace: &[HumanSample], rate: f64) -> Result<()> {
    let dt = 1.0 / rate;
    let t0 = trace[0].t;
    for (k, s) in trace.iter().enumerate() {
        if (s.t - t0 - k as f64 * dt).abs() > 1e-6 {
            return Err(Error::Trace {
                line: Some(k),
                message: format!(
                    "trace is not on a uniform {rate} Hz grid at sample {k} (t = {}); \
                     resample it first",
                    s.t
                ),
            });
        }
    }
    Ok(())
}

/// Runs the closed compensation loop over a torso trace.
///
/// Per tick: measure the torso (optionally with noise), form the home-frame
/// errors, plan joint rates with the configured method, guard against
/// numerical divergence, clamp and integrate. The ground-truth end-effector
/// world position is composed from the true torso pose each tick, playing
/// the role of an external tracker.
pub fn run_compensation(
    model: &ArmModel,
    config: &SimConfig,
    trace: &[HumanSample],
    scenario: &str,
    seed: Option<u64>,
) -> Result<TraceLog> {
    if trace.is_empty() {
        return Err(Error::Trace {
            line: None,
            message: "trace is empty".into(),
        });
    }
    if !(config.rate > 0.0) {
        return Err(Error::Config(format!("rate must be positive, got {}", config.rate)));
    }
    if !(config.noise_std >= 0.0) {
        return Err(Error::Config(format!(
            "noise_std must be non-negative, got {}",
            config.noise_std
        )));
    }
    let mut theta = JointVector::from_row_slice(&config.initial_theta);
    if !model.within_limits(&theta) {
        return Err(Error::Config(
            "initial joint configuration violates the position limits".into(),
        ));
    }
    check_uniform_grid(trace, config.rate)?;

    let dt = 1.0 / config.rate;
    let mount = Vec3::from_row_slice(&config.mount_offset);
    let mut noise = if config.noise_std > 0.0 {
        let normal = Normal::new(0.0, config.noise_std)
            .map_err(|e| Error::Config(format!("invalid noise_std: {e}")))?;
        Some((ChaCha12Rng::seed_from_u64(config.noise_seed), normal))
    } else {
        None
    };
    let mut measure = |s: &HumanSample| -> HumanSample {
        match &mut noise {
            None => *s,
            Some((rng, normal)) => {
                let mut m = *s;
                for i in 0..3 {
                    m.position[i] += normal.sample(rng);
                }
                m
            }
        }
    };

    let first = measure(&trace[0]);
    let home = capture_home(&first, model, &theta)?;

    let mut rows = Vec::with_capacity(trace.len());
    let mut saturated_ticks = 0usize;
    for (k, s_true) in trace.iter().enumerate() {
        let s = if k == 0 { first } else { measure(s_true) };
        let fk_now = forward_kinematics(model, &theta);
        let jac = geometric_jacobian(model, &theta);
        let vb = base_velocity_local(&home, &s);
        let dp = ee_position_variation(&home, &s, &fk_now);
        let de = ee_orientation_error(&home, &fk_now.orientation);
        let cmd = match config.method {
            Method::Nbm => nbm_step(&jac, &vb, &de, &config.gains, config.strategy, &config.svf),
            Method::Rjm => rjm_step(
                &jac,
                &vb,
                &dp,
                &de,
                &config.gains,
                config.released,
                config.strategy,
                &config.svf,
            ),
        };
        let raw = if config.hold_joints {
            JointVector::zeros()
        } else {
            cmd.theta_dot
        };
        let max_rate = raw.amax();
        if !max_rate.is_finite() || max_rate > DIVERGENCE_LIMIT {
            return Err(Error::PlannerDiverged { tick: k, max_rate });
        }
        let step = integrate_step(model, &theta, &raw, dt, config.limit_mode);
        if step.saturated {
            saturated_ticks += 1;
        }
        let p1_exceeded = k > 0
            && angular_speed_between(&trace[k - 1].orientation, &s_true.orientation, dt)
                > STEADY_TORSO_LIMIT;
        let rho = s_true.position
            + s_true.orientation.to_rotation_matrix() * (mount + fk_now.position);
        let q = s_true.orientation.into_inner();
        let ebq = fk_now.orientation.into_inner();
        rows.push(TickRow {
            t: s_true.t,
            px: s_true.position.x,
            py: s_true.position.y,
            pz: s_true.position.z,
            qw: q.w,
            qx: q.i,
            qy: q.j,
            qz: q.k,
            vx: s_true.velocity.x,
            vy: s_true.velocity.y,
            vz: s_true.velocity.z,
            vbx: vb.x,
            vby: vb.y,
            vbz: vb.z,
            epx: dp.x,
            epy: dp.y,
            epz: dp.z,
            eox: de.vector.x,
            eoy: de.vector.y,
            eoz: de.vector.z,
            th1: theta[0],
            th2: theta[1],
            th3: theta[2],
            th4: theta[3],
            th5: theta[4],
            th6: theta[5],
            cmd1: raw[0],
            cmd2: raw[1],
            cmd3: raw[2],
            cmd4: raw[3],
            cmd5: raw[4],
            cmd6: raw[5],
            act1: step.applied_rate[0],
            act2: step.applied_rate[1],
            act3: step.applied_rate[2],
            act4: step.applied_rate[3],
            act5: step.applied_rate[4],
            act6: step.applied_rate[5],
            ebx: fk_now.position.x,
            eby: fk_now.position.y,
            ebz: fk_now.position.z,
            ebqw: ebq.w,
            ebqx: ebq.i,
            ebqy: ebq.j,
            ebqz: ebq.k,
            rx: rho.x,
            ry: rho.y,
            rz: rho.z,
            sig: cmd.sigma_min,
            sat: step.saturated as u8,
            p1: p1_exceeded as u8,
        });
        theta = step.theta;
    }

    let p1_violated = rows.iter().any(|r| r.p1 == 1);
    Ok(TraceLog {
        meta: RunMeta {
            tool_version: TOOL_VERSION.to_string(),
            method: config.method,
            strategy: config.strategy,
            released: config.released,
            rate: config.rate,
            scenario: scenario.to_string(),
            seed,
            samples: rows.len(),
            p1_violated,
            saturated_ticks,
        },
        rows,
    })
}

/// One entry of a batch: a config, the trace to run it on, and its
/// scenario label.
#[derive(Debug, Clone)]
pub struct SimJob {
    pub config: SimConfig,
    pub trace: Vec<HumanSample>,
    pub scenario: String,
    pub seed: Option<u64>,
}

fn run_job(model: &ArmModel, job: &SimJob) -> Result<TraceLog> {
    run_compensation(model, &job.config, &job.trace, &job.scenario, job.seed)
}

/// Runs every job in order on the current thread.
pub fn run_batch_sequential(model: &ArmModel, jobs: &[SimJob]) -> Vec<Result<TraceLog>> {
    jobs.iter().map(|job| run_job(model, job)).collect()
}

/// Runs the jobs across threads (results stay in job order). With the
/// `parallel` feature disabled this is the sequential runner.
#[cfg(feature = "parallel")]
pub fn run_batch(model: &ArmModel, jobs: &[SimJob]) -> Vec<Result<TraceLog>> {
    jobs.par_iter().map(|job| run_job(model, job)).collect()
}

/// Runs the jobs across threads (results stay in job order). With the
/// `parallel` feature disabled this is the sequential runner.
#[cfg(not(feature = "parallel"))]
pub fn run_batch(model: &ArmModel, jobs: &[SimJob]) -> Vec<Result<TraceLog>> {
    run_batch_sequential(model, jobs)
}
