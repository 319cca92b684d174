use thiserror::Error;

/// All failure modes surfaced by this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Kinematic model construction or validation failed.
    #[error("invalid model: {0}")]
    Model(String),

    /// A trace or log file failed schema validation. `line` is 1-based and
    /// refers to the physical line of the offending record when known.
    #[error("invalid trace{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Trace {
        line: Option<usize>,
        message: String,
    },

    /// Home capture was attempted while the torso was still moving.
    #[error("not at rest: torso speed {speed:.4} m/s exceeds threshold {threshold:.4} m/s")]
    NotAtRest { speed: f64, threshold: f64 },

    /// The plain pseudo-inverse was asked to invert a (near-)rank-deficient
    /// matrix. Use the filtered variant near singularities.
    #[error("near-singular matrix: condition estimate {cond:.3e}")]
    NearSingular { cond: f64 },

    /// The planner produced a non-finite joint velocity; the simulation stops
    /// at the reported tick. `max_rate` is the largest finite |joint velocity|
    /// seen in raw planner output before the abort.
    #[error("planner diverged at tick {tick}: non-finite joint velocity (max raw rate so far {max_rate:.3e} rad/s)")]
    PlannerDiverged { tick: usize, max_rate: f64 },

    /// Metric evaluation was asked for something it cannot compute.
    #[error("metrics: {0}")]
    Metrics(String),

    /// Two logs with different scenario tags were compared.
    #[error("scenario mismatch: {a:?} vs {b:?}")]
    ScenarioMismatch { a: String, b: String },

    /// Malformed configuration file.
    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Exit-code class for the CLI: 1 for bad inputs, 2 for numerical failure.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NearSingular { .. } | Error::PlannerDiverged { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
