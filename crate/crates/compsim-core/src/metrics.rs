//! Evaluation indices for compensation runs and the method-comparison
//! report.
//!
//! The per-axis indices are the mean and sample standard deviation of the
//! ground-truth end-effector world position over a run, plus the absolute
//! gap between that mean and the baseline mean taken over the opening
//! window (default 3 s) — the interval the wearer holds still in, so the
//! baseline mean is where the end-effector is supposed to stay. The 3D
//! index folds the three per-axis gaps into one normalized score in [0, 1],
//! 0 meaning perfect stabilization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::Vec3;
use crate::planner::{Axis, Method, PinvStrategy};
use crate::sim::TraceLog;
use crate::TOOL_VERSION;

/// Default baseline window (s): the opening still interval of a run.
pub const DEFAULT_BASELINE_WINDOW: f64 = 3.0;

/// Per-axis statistics of one position series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisStats {
    /// Mean over the whole series (m).
    pub mean: f64,
    /// Sample standard deviation, n-1 denominator (m).
    pub std: f64,
    /// Mean over the opening baseline window (m).
    pub baseline_mean: f64,
    /// |mean - baseline_mean| (m).
    pub mean_error: f64,
}

/// Number of leading samples inside a baseline window at a given rate
/// (the sample at t = 0 always counts).
pub fn baseline_samples(window: f64, rate: f64) -> usize {
    (window * rate).round() as usize + 1
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Mean, sample standard deviation, and baseline gap of one axis series.
/// The baseline window must be shorter than the series.
pub fn axis_stats(series: &[f64], baseline_window: f64, rate: f64) -> Result<AxisStats> {
    if series.len() < 2 {
        return Err(Error::Metrics(format!(
            "need at least 2 samples, got {}",
            series.len()
        )));
    }
    if !(baseline_window >= 0.0) || !(rate > 0.0) {
        return Err(Error::Metrics(format!(
            "invalid baseline window {baseline_window} or rate {rate}"
        )));
    }
    let n_base = baseline_samples(baseline_window, rate);
    if n_base >= series.len() {
        return Err(Error::Metrics(format!(
            "baseline window ({n_base} samples) must be shorter than the series ({})",
            series.len()
        )));
    }
    let m = mean(series);
    let var = series.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (series.len() - 1) as f64;
    let baseline_mean = mean(&series[..n_base]);
    Ok(AxisStats {
        mean: m,
        std: var.sqrt(),
        baseline_mean,
        mean_error: (m - baseline_mean).abs(),
    })
}

/// Normalized 3D residual-displacement index.
///
/// Per axis, the baseline gap e is divided against the worst deviation of
/// any sample from the series mean, e_max; the index is the ratio of the
/// two 3-vector norms, so it is scale-free, translation-invariant, and 0
/// exactly when the run's mean ends where the baseline sat. An
/// all-constant series (0/0) scores 0: perfect stabilization.
pub fn distance_index(points: &[Vec3], baseline_window: f64, rate: f64) -> Result<f64> {
    let mut e2 = 0.0;
    let mut e_max2 = 0.0;
    for axis in 0..3 {
        let series: Vec<f64> = points.iter().map(|p| p[axis]).collect();
        let stats = axis_stats(&series, baseline_window, rate)?;
        let e_max = series
            .iter()
            .map(|x| (x - stats.mean).abs())
            .fold(0.0, f64::max);
        if stats.mean_error > e_max + 1e-12 {
            return Err(Error::Metrics(format!(
                "axis {axis}: baseline gap {} exceeds the worst in-series deviation {e_max}",
                stats.mean_error
            )));
        }
        e2 += stats.mean_error * stats.mean_error;
        e_max2 += e_max * e_max;
    }
    if e_max2 == 0.0 {
        return Ok(0.0);
    }
    Ok((e2.sqrt() / e_max2.sqrt()).min(1.0))
}

/// The full evaluation of one logged run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tool_version: String,
    pub method: Method,
    pub strategy: PinvStrategy,
    pub released: Axis,
    pub scenario: String,
    pub seed: Option<u64>,
    pub rate: f64,
    pub samples: usize,
    pub baseline_window: f64,
    pub baseline_samples: usize,
    pub x: AxisStats,
    pub y: AxisStats,
    pub z: AxisStats,
    pub distance_index: f64,
    pub p1_violated: bool,
    pub saturated_ticks: usize,
}

/// Evaluates the ground-truth end-effector world positions of a run.
pub fn evaluate_log(log: &TraceLog, baseline_window: f64) -> Result<EvalReport> {
    let points: Vec<Vec3> = log
        .rows
        .iter()
        .map(|r| Vec3::new(r.rx, r.ry, r.rz))
        .collect();
    let rate = log.meta.rate;
    let per_axis = |axis: usize| -> Result<AxisStats> {
        let series: Vec<f64> = points.iter().map(|p| p[axis]).collect();
        axis_stats(&series, baseline_window, rate)
    };
    Ok(EvalReport {
        tool_version: TOOL_VERSION.to_string(),
        method: log.meta.method,
        strategy: log.meta.strategy,
        released: log.meta.released,
        scenario: log.meta.scenario.clone(),
        seed: log.meta.seed,
        rate,
        samples: log.rows.len(),
        baseline_window,
        baseline_samples: baseline_samples(baseline_window, rate),
        x: per_axis(0)?,
        y: per_axis(1)?,
        z: per_axis(2)?,
        distance_index: distance_index(&points, baseline_window, rate)?,
        p1_violated: log.meta.p1_violated,
        saturated_ticks: log.meta.saturated_ticks,
    })
}

/// Per-metric differences, second run minus first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompareDeltas {
    pub mean_error: [f64; 3],
    pub std: [f64; 3],
    pub distance_index: f64,
}

/// Two evaluations of the same scenario, side by side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub scenario: String,
    pub first: EvalReport,
    pub second: EvalReport,
    pub deltas: CompareDeltas,
}

/// Evaluates two runs of the same scenario and reports the differences.
pub fn compare_report(a: &TraceLog, b: &TraceLog, baseline_window: f64) -> Result<CompareReport> {
    if a.meta.scenario != b.meta.scenario {
        return Err(Error::ScenarioMismatch {
            a: a.meta.scenario.clone(),
            b: b.meta.scenario.clone(),
        });
    }
    let first = evaluate_log(a, baseline_window)?;
    let second = evaluate_log(b, baseline_window)?;
    let deltas = CompareDeltas {
        mean_error: [
            second.x.mean_error - first.x.mean_error,
            second.y.mean_error - first.y.mean_error,
            second.z.mean_error - first.z.mean_error,
        ],
        std: [
            second.x.std - first.x.std,
            second.y.std - first.y.std,
            second.z.std - first.z.std,
        ],
        distance_index: second.distance_index - first.distance_index,
    };
    Ok(CompareReport {
        scenario: first.scenario.clone(),
        first,
        second,
        deltas,
    })
}
