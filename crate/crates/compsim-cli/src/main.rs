//! Command-line front end: forward kinematics, single planner steps, the
//! closed-loop compensation simulator, and report evaluation/comparison.
//!
//! Exit codes: 0 on success, 1 on bad input (files, flags, validation),
//! 2 on numerical failure (near-singular solve, diverged planner).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use compsim_core::error::{Error, Result};
use compsim_core::frames::HumanSample;
use compsim_core::io;
use compsim_core::kinematics::{
    default_model, forward_kinematics, geometric_jacobian, ArmModel, JointVector,
    OrientationError, Vec3, JOINT_COUNT,
};
use compsim_core::limits::LimitMode;
use compsim_core::metrics::{self, DEFAULT_BASELINE_WINDOW};
use compsim_core::planner::{nbm_step, rjm_step, Axis, Gains, Method, SvfParams};
use compsim_core::sim::{
    generate_motion, resample_trace, run_compensation, MotionKind, MotionSpec, SimConfig,
};

/// Name of the environment variable that overrides the random-motion seed.
const SEED_ENV: &str = "COMPSIM_SEED";

#[derive(Parser)]
#[command(
    name = "compsim",
    version,
    about = "Torso-motion compensation simulator for a shoulder-mounted 6-DoF arm"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the end-effector pose of a joint configuration.
    Fk(FkArgs),
    /// Run a single planner step from explicit inputs.
    Plan(PlanArgs),
    /// Run the closed-loop compensation simulation and write a log.
    Simulate(SimulateArgs),
    /// Evaluate a run log into a JSON report.
    Evaluate(EvaluateArgs),
    /// Evaluate two logs of the same scenario and report the differences.
    Compare(CompareArgs),
}

fn parse_theta(s: &str) -> std::result::Result<Theta, String> {
    let values: std::result::Result<Vec<f64>, _> =
        s.split(',').map(|v| v.trim().parse::<f64>()).collect();
    let values = values.map_err(|e| format!("bad joint value: {e}"))?;
    if values.len() != JOINT_COUNT {
        return Err(format!(
            "expected {JOINT_COUNT} joint values, got {}",
            values.len()
        ));
    }
    let mut out = [0.0; JOINT_COUNT];
    out.copy_from_slice(&values);
    Ok(Theta(out))
}

fn parse_triple(s: &str) -> std::result::Result<Triple, String> {
    let values: std::result::Result<Vec<f64>, _> =
        s.split(',').map(|v| v.trim().parse::<f64>()).collect();
    let values = values.map_err(|e| format!("bad value: {e}"))?;
    if values.len() != 3 {
        return Err(format!("expected 3 values, got {}", values.len()));
    }
    Ok(Triple([values[0], values[1], values[2]]))
}

fn parse_quadruple(s: &str) -> std::result::Result<Quad, String> {
    let values: std::result::Result<Vec<f64>, _> =
        s.split(',').map(|v| v.trim().parse::<f64>()).collect();
    let values = values.map_err(|e| format!("bad value: {e}"))?;
    if values.len() != 4 {
        return Err(format!("expected 4 values (w,x,y,z), got {}", values.len()));
    }
    Ok(Quad([values[0], values[1], values[2], values[3]]))
}

#[derive(Clone, Copy)]
struct Theta([f64; JOINT_COUNT]);

#[derive(Clone, Copy)]
struct Triple([f64; 3]);

#[derive(Clone, Copy)]
struct Quad([f64; 4]);

#[derive(Args)]
struct FkArgs {
    /// Joint angles in radians, comma-separated ("0.1,0.2,...").
    #[arg(long, value_parser = parse_theta)]
    theta: Theta,
    /// Arm model TOML; the built-in default arm when omitted.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct PlanArgs {
    /// Planner: "nbm" (nullspace) or "rjm" (reconstructed Jacobian).
    #[arg(long, value_parser = Method::from_str_arg)]
    method: Method,
    /// Joint angles in radians, comma-separated.
    #[arg(long, value_parser = parse_theta)]
    theta: Theta,
    /// Base linear velocity to compensate, local frame, m/s ("vx,vy,vz").
    #[arg(long, value_parser = parse_triple, default_value = "0,0,0")]
    base_velocity: Triple,
    /// End-effector position error in the base frame, m ("x,y,z").
    #[arg(long, value_parser = parse_triple, default_value = "0,0,0")]
    position_error: Triple,
    /// End-effector orientation error quaternion ("w,x,y,z").
    #[arg(long, value_parser = parse_quadruple, default_value = "1,0,0,0")]
    orientation_error: Quad,
    /// Position gain per axis ("kx,ky,kz").
    #[arg(long, value_parser = parse_triple, default_value = "1,1,1")]
    k_pos: Triple,
    /// Orientation gain per axis ("kx,ky,kz").
    #[arg(long, value_parser = parse_triple, default_value = "1,1,1")]
    k_ori: Triple,
    /// Rotation axis the reconstructed-Jacobian planner leaves free.
    #[arg(long, value_parser = Axis::from_str_arg, default_value = "x")]
    released: Axis,
    /// Arm model TOML; the built-in default arm when omitted.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Planner: "nbm" or "rjm". Required unless the config file sets one.
    #[arg(long, value_parser = Method::from_str_arg)]
    method: Option<Method>,
    /// Synthetic torso motion: ud, lr, fb, or rand3d.
    #[arg(long, value_parser = MotionKind::from_str_arg, conflicts_with = "trace")]
    motion: Option<MotionKind>,
    /// Torso motion trace CSV (t,px,py,pz,qw,qx,qy,qz[,vx,vy,vz]).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Resample an off-grid trace onto the loop rate instead of rejecting it.
    #[arg(long, requires = "trace")]
    resample: bool,
    /// Peak excursion of the synthetic motion, m.
    #[arg(long, conflicts_with = "trace")]
    amplitude: Option<f64>,
    /// Period of the synthetic stroke, s.
    #[arg(long, conflicts_with = "trace")]
    period: Option<f64>,
    /// Length of the synthetic motion, s.
    #[arg(long, conflicts_with = "trace")]
    duration: Option<f64>,
    /// Seed of the random 3D motion (also settable via COMPSIM_SEED).
    #[arg(long, conflicts_with = "trace")]
    seed: Option<u64>,
    /// Fraction of the stroke leaked onto the other two axes.
    #[arg(long, conflicts_with = "trace")]
    cross_coupling: Option<f64>,
    /// Loop rate, Hz.
    #[arg(long)]
    rate: Option<f64>,
    /// Rotation axis the reconstructed-Jacobian planner leaves free.
    #[arg(long, value_parser = Axis::from_str_arg)]
    released: Option<Axis>,
    /// Joint limiting at the bounds: "literal" or "direction-aware".
    #[arg(long, value_parser = LimitMode::from_str_arg)]
    limit_mode: Option<LimitMode>,
    /// Position gain per axis ("kx,ky,kz").
    #[arg(long, value_parser = parse_triple)]
    k_pos: Option<Triple>,
    /// Orientation gain per axis ("kx,ky,kz").
    #[arg(long, value_parser = parse_triple)]
    k_ori: Option<Triple>,
    /// Gaussian noise on measured torso positions, standard deviation in m.
    #[arg(long)]
    noise_std: Option<f64>,
    /// Seed of the measurement-noise stream.
    #[arg(long)]
    noise_seed: Option<u64>,
    /// Plan normally but command zero rates (rigid-ride baseline).
    #[arg(long)]
    hold_joints: bool,
    /// Scenario TOML carrying any of [model], [sim], [motion].
    #[arg(long)]
    config: Option<PathBuf>,
    /// Arm model TOML; overrides the config file's model.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Output log CSV.
    #[arg(long)]
    out: PathBuf,
    /// Also write a run manifest JSON (tool version, seed, config digest).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Also write the torso trace that was simulated against.
    #[arg(long)]
    dump_trace: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Run log CSV produced by `simulate`.
    log: PathBuf,
    /// Baseline window at the start of the run, s.
    #[arg(long, default_value_t = DEFAULT_BASELINE_WINDOW)]
    window: f64,
    /// Report JSON path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// First run log CSV.
    first: PathBuf,
    /// Second run log CSV (same scenario tag).
    second: PathBuf,
    /// Baseline window at the start of each run, s.
    #[arg(long, default_value_t = DEFAULT_BASELINE_WINDOW)]
    window: f64,
    /// Comparison JSON path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// clap-friendly wrappers over the library's FromStr implementations.
trait FromStrArg: Sized {
    fn from_str_arg(s: &str) -> std::result::Result<Self, String>;
}

macro_rules! from_str_arg {
    ($($ty:ty),*) => {$(
        impl FromStrArg for $ty {
            fn from_str_arg(s: &str) -> std::result::Result<Self, String> {
                s.parse::<$ty>().map_err(|e| e.to_string())
            }
        }
    )*};
}

from_str_arg!(Method, Axis, MotionKind, LimitMode);

fn load_model_or_default(
    flag: Option<&Path>,
    config: Option<&io::ScenarioFile>,
) -> Result<ArmModel> {
    if let Some(path) = flag {
        return io::load_model(path);
    }
    if let Some(spec) = config.and_then(|c| c.model.as_ref()) {
        return spec.to_model();
    }
    Ok(default_model())
}

#[derive(Serialize)]
struct FkOutput {
    position: [f64; 3],
    orientation: [f64; 4],
}

fn cmd_fk(args: &FkArgs) -> Result<()> {
    let model = load_model_or_default(args.model.as_deref(), None)?;
    let theta = JointVector::from(args.theta.0);
    if !model.within_limits(&theta) {
        return Err(Error::Config(
            "joint angles are outside the model's position limits".to_string(),
        ));
    }
    let pose = forward_kinematics(&model, &theta);
    let q = pose.orientation.quaternion();
    let out = FkOutput {
        position: pose.position.into(),
        orientation: [q.w, q.i, q.j, q.k],
    };
    println!("{}", serde_json::to_string_pretty(&out).expect("serialize"));
    Ok(())
}

#[derive(Serialize)]
struct PlanOutput {
    theta_dot: [f64; JOINT_COUNT],
    sigma_min: f64,
}

fn cmd_plan(args: &PlanArgs) -> Result<()> {
    let model = load_model_or_default(args.model.as_deref(), None)?;
    let theta = JointVector::from(args.theta.0);
    if !model.within_limits(&theta) {
        return Err(Error::Config(
            "joint angles are outside the model's position limits".to_string(),
        ));
    }
    let jacobian = geometric_jacobian(&model, &theta);
    let gains = Gains {
        k_pos: Vec3::from(args.k_pos.0),
        k_ori: Vec3::from(args.k_ori.0),
    };
    let svf = SvfParams::default();
    let strategy = Default::default();
    let [w, x, y, z] = args.orientation_error.0;
    let orientation_error = OrientationError {
        scalar: w,
        vector: Vec3::new(x, y, z),
    };
    let base_velocity = Vec3::from(args.base_velocity.0);
    let command = match args.method {
        Method::Nbm => nbm_step(
            &jacobian,
            &base_velocity,
            &orientation_error,
            &gains,
            strategy,
            &svf,
        ),
        Method::Rjm => rjm_step(
            &jacobian,
            &base_velocity,
            &Vec3::from(args.position_error.0),
            &orientation_error,
            &gains,
            args.released,
            strategy,
            &svf,
        ),
    };
    let out = PlanOutput {
        theta_dot: command.theta_dot.into(),
        sigma_min: command.sigma_min,
    };
    println!("{}", serde_json::to_string_pretty(&out).expect("serialize"));
    Ok(())
}

/// Resolved motion input: a trace plus the scenario tag and optional seed.
struct MotionInput {
    trace: Vec<HumanSample>,
    scenario: String,
    seed: Option<u64>,
    spec: Option<MotionSpec>,
}

fn resolve_motion(args: &SimulateArgs, config: Option<&io::ScenarioFile>, rate: f64) -> Result<MotionInput> {
    if let Some(path) = &args.trace {
        let mut trace = io::load_trace(path)?;
        if args.resample {
            trace = resample_trace(&trace, rate)?;
        }
        let scenario = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "trace".to_string());
        return Ok(MotionInput {
            trace,
            scenario: format!("trace:{scenario}"),
            seed: None,
            spec: None,
        });
    }

    let mut spec = match (args.motion, config.and_then(|c| c.motion)) {
        (Some(kind), None) => MotionSpec::new(kind),
        (Some(kind), Some(base)) if base.kind == kind => base,
        (Some(kind), Some(_)) => MotionSpec::new(kind),
        (None, Some(base)) => base,
        (None, None) => {
            return Err(Error::Config(
                "no motion given: pass --motion/--trace or a config with [motion]".to_string(),
            ))
        }
    };
    if let Some(v) = args.amplitude {
        spec.amplitude = v;
    }
    if let Some(v) = args.period {
        spec.period = v;
    }
    if let Some(v) = args.duration {
        spec.duration = v;
    }
    if let Some(v) = args.seed {
        spec.seed = v;
    }
    if let Some(v) = args.cross_coupling {
        spec.cross_coupling = v;
    }
    if spec.kind == MotionKind::Rand3d {
        if let Ok(raw) = std::env::var(SEED_ENV) {
            spec.seed = raw.trim().parse::<u64>().map_err(|_| {
                Error::Config(format!("{SEED_ENV}: cannot parse {raw:?} as an unsigned seed"))
            })?;
        }
    }
    let trace = generate_motion(&spec, rate)?;
    let seed = (spec.kind == MotionKind::Rand3d).then_some(spec.seed);
    Ok(MotionInput {
        trace,
        scenario: spec.kind.to_string(),
        seed,
        spec: Some(spec),
    })
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let scenario_file = match &args.config {
        Some(path) => Some(io::load_scenario(path)?),
        None => None,
    };
    let model = load_model_or_default(args.model.as_deref(), scenario_file.as_ref())?;

    let mut sim = match (args.method, scenario_file.as_ref().and_then(|c| c.sim.clone())) {
        (_, Some(base)) => base,
        (Some(method), None) => SimConfig::new(method),
        (None, None) => {
            return Err(Error::Config(
                "no method given: pass --method or a config with [sim]".to_string(),
            ))
        }
    };
    if let Some(method) = args.method {
        sim.method = method;
    }
    if let Some(rate) = args.rate {
        sim.rate = rate;
    }
    if let Some(released) = args.released {
        sim.released = released;
    }
    if let Some(mode) = args.limit_mode {
        sim.limit_mode = mode;
    }
    if let Some(k) = args.k_pos {
        sim.gains.k_pos = Vec3::from(k.0);
    }
    if let Some(k) = args.k_ori {
        sim.gains.k_ori = Vec3::from(k.0);
    }
    if let Some(v) = args.noise_std {
        sim.noise_std = v;
    }
    if let Some(v) = args.noise_seed {
        sim.noise_seed = v;
    }
    if args.hold_joints {
        sim.hold_joints = true;
    }

    let motion = resolve_motion(args, scenario_file.as_ref(), sim.rate)?;
    let log = run_compensation(&model, &sim, &motion.trace, &motion.scenario, motion.seed)?;

    io::save_log(&args.out, &log)?;
    if let Some(path) = &args.dump_trace {
        io::save_trace(path, &motion.trace)?;
    }
    if let Some(path) = &args.manifest {
        let manifest = io::manifest_for(&log, &sim, motion.spec.as_ref());
        io::save_json(path, &manifest)?;
    }
    println!(
        "wrote {} ticks to {} (method {}, scenario {}, saturated {} ticks, p1 {})",
        log.rows.len(),
        args.out.display(),
        log.meta.method,
        log.meta.scenario,
        log.meta.saturated_ticks,
        if log.meta.p1_violated { "violated" } else { "held" },
    );
    Ok(())
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            io::save_json(path, value)?;
            println!("wrote {}", path.display());
        }
        None => println!(
            "{}",
            serde_json::to_string_pretty(value).expect("serialize")
        ),
    }
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let log = io::load_log(&args.log)?;
    let report = metrics::evaluate_log(&log, args.window)?;
    emit_json(&report, args.out.as_deref())
}

fn cmd_compare(args: &CompareArgs) -> Result<()> {
    let first = io::load_log(&args.first)?;
    let second = io::load_log(&args.second)?;
    let report = metrics::compare_report(&first, &second, args.window)?;
    emit_json(&report, args.out.as_deref())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Fk(args) => cmd_fk(args),
        Command::Plan(args) => cmd_plan(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Compare(args) => cmd_compare(args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
