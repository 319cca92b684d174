//! File formats: TOML scenario/model files, CSV motion traces, CSV run
//! logs with an embedded metadata line, JSON reports, and run manifests.
//!
//! All numeric round-trips are bit-exact: floats are written with
//! shortest-round-trip formatting and parsed back to the identical bits,
//! so a saved file reloads to equal values and repeated runs produce
//! byte-identical outputs.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use nalgebra as na;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::frames::HumanSample;
use crate::kinematics::{ArmModel, Iso3, JointParam, JointVector, UnitQuat, Vec3, JOINT_COUNT};
use crate::sim::{MotionSpec, RunMeta, SimConfig, TickRow, TraceLog};
use crate::TOOL_VERSION;

/// Column names of a motion-trace CSV. The three velocity columns are
/// optional on input; when absent, velocities are derived by central
/// differences.
pub const TRACE_COLUMNS: [&str; 11] = [
    "t", "px", "py", "pz", "qw", "qx", "qy", "qz", "vx", "vy", "vz",
];

// ---------------------------------------------------------------------------
// Scenario files (TOML)
// ---------------------------------------------------------------------------

fn identity_rotation() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

/// A fixed frame: translation plus an optional unit quaternion (w, x, y, z),
/// identity when omitted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameSpec {
    pub translation: [f64; 3],
    #[serde(default = "identity_rotation")]
    pub rotation: [f64; 4],
}

impl FrameSpec {
    fn to_iso(self, what: &str) -> Result<Iso3> {
        let [w, x, y, z] = self.rotation;
        let q = na::Quaternion::new(w, x, y, z);
        if q.norm() < 1e-9 {
            return Err(Error::Model(format!("{what}: rotation has zero norm")));
        }
        Ok(Iso3::from_parts(
            na::Translation3::from(Vec3::from(self.translation)),
            UnitQuat::new_normalize(q),
        ))
    }

    fn from_iso(iso: &Iso3) -> Self {
        let q = iso.rotation;
        FrameSpec {
            translation: iso.translation.vector.into(),
            rotation: [q.w, q.i, q.j, q.k],
        }
    }
}

/// One revolute joint of the model file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    pub translation: [f64; 3],
    #[serde(default = "identity_rotation")]
    pub rotation: [f64; 4],
    pub axis: [f64; 3],
}

/// Joint position and velocity boxes, all six entries per bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitsSpec {
    pub pos_min: [f64; JOINT_COUNT],
    pub pos_max: [f64; JOINT_COUNT],
    pub vel_min: [f64; JOINT_COUNT],
    pub vel_max: [f64; JOINT_COUNT],
}

/// Serializable mirror of [`ArmModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(rename = "joint")]
    pub joints: Vec<JointSpec>,
    pub end_effector: FrameSpec,
    pub limits: LimitsSpec,
}

impl ModelSpec {
    pub fn to_model(&self) -> Result<ArmModel> {
        let mut joints = Vec::with_capacity(self.joints.len());
        for (i, j) in self.joints.iter().enumerate() {
            let origin = FrameSpec {
                translation: j.translation,
                rotation: j.rotation,
            }
            .to_iso(&format!("joint {}", i + 1))?;
            let axis = na::Unit::try_new(Vec3::from(j.axis), 1e-9).ok_or_else(|| {
                Error::Model(format!("joint {}: axis has zero norm", i + 1))
            })?;
            joints.push(JointParam { origin, axis });
        }
        ArmModel::new(
            joints,
            self.end_effector.to_iso("end_effector")?,
            JointVector::from(self.limits.pos_min),
            JointVector::from(self.limits.pos_max),
            JointVector::from(self.limits.vel_min),
            JointVector::from(self.limits.vel_max),
        )
    }

    pub fn from_model(model: &ArmModel) -> Self {
        let joints = model
            .joints()
            .iter()
            .map(|j| {
                let f = FrameSpec::from_iso(&j.origin);
                JointSpec {
                    translation: f.translation,
                    rotation: f.rotation,
                    axis: j.axis.into_inner().into(),
                }
            })
            .collect();
        ModelSpec {
            joints,
            end_effector: FrameSpec::from_iso(model.ee_offset()),
            limits: LimitsSpec {
                pos_min: (*model.pos_min()).into(),
                pos_max: (*model.pos_max()).into(),
                vel_min: (*model.vel_min()).into(),
                vel_max: (*model.vel_max()).into(),
            },
        }
    }
}

/// One TOML file that can carry any combination of an arm model, a
/// simulation configuration, and a synthetic-motion description.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScenarioFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub motion: Option<MotionSpec>,
}

pub fn load_scenario(path: &Path) -> Result<ScenarioFile> {
    let text = fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn save_scenario(path: &Path, file: &ScenarioFile) -> Result<()> {
    let text =
        toml::to_string(file).map_err(|e| Error::Config(format!("serialize: {e}")))?;
    fs::write(path, text)?;
    Ok(())
}

/// Loads the `[model]` section of a scenario file as an [`ArmModel`].
pub fn load_model(path: &Path) -> Result<ArmModel> {
    let file = load_scenario(path)?;
    let spec = file.model.ok_or_else(|| {
        Error::Config(format!("{}: no [model] section", path.display()))
    })?;
    spec.to_model()
}

// ---------------------------------------------------------------------------
// Motion traces (CSV)
// ---------------------------------------------------------------------------

fn write_f64(buf: &mut String, v: f64) {
    if v == v.trunc() && v.abs() < 1e16 {
        // Integral values print without an exponent and with one decimal,
        // matching how the standard float formatter round-trips them.
        let _ = write!(buf, "{v:.1}");
    } else {
        let _ = write!(buf, "{v}");
    }
}

/// Saves a motion trace with all eleven columns.
pub fn save_trace(path: &Path, trace: &[HumanSample]) -> Result<()> {
    let mut text = String::new();
    text.push_str(&TRACE_COLUMNS.join(","));
    text.push('\n');
    for s in trace {
        let q = s.orientation.quaternion();
        let fields = [
            s.t,
            s.position.x,
            s.position.y,
            s.position.z,
            q.w,
            q.i,
            q.j,
            q.k,
            s.velocity.x,
            s.velocity.y,
            s.velocity.z,
        ];
        for (k, v) in fields.iter().enumerate() {
            if k > 0 {
                text.push(',');
            }
            write_f64(&mut text, *v);
        }
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

fn parse_field(record: &csv::StringRecord, idx: usize, name: &str, line: usize) -> Result<f64> {
    let raw = record.get(idx).ok_or_else(|| Error::Trace {
        line: Some(line),
        message: format!("missing column {name}"),
    })?;
    f64::from_str(raw.trim()).map_err(|_| Error::Trace {
        line: Some(line),
        message: format!("column {name}: cannot parse {raw:?} as a number"),
    })
}

/// Loads a motion trace. The header must be the eight pose columns,
/// optionally followed by the three velocity columns; when velocities are
/// absent they are derived by central differences (one-sided at the ends).
pub fn load_trace(path: &Path) -> Result<Vec<HumanSample>> {
    let text = fs::read_to_string(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Trace {
            line: Some(1),
            message: e.to_string(),
        })?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    let has_velocity = match cols.len() {
        8 if cols == TRACE_COLUMNS[..8] => false,
        11 if cols == TRACE_COLUMNS => true,
        _ => {
            return Err(Error::Trace {
                line: Some(1),
                message: format!(
                    "expected header {:?} (velocity columns optional), got {:?}",
                    TRACE_COLUMNS.join(","),
                    cols.join(",")
                ),
            })
        }
    };

    let mut samples = Vec::new();
    for item in reader.records() {
        let record = item.map_err(|e| Error::Trace {
            line: e.position().map(|p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(samples.len() + 2);
        let t = parse_field(&record, 0, "t", line)?;
        if let Some(prev) = samples.last().map(|s: &HumanSample| s.t) {
            if t <= prev {
                return Err(Error::Trace {
                    line: Some(line),
                    message: format!("time must increase strictly ({t} after {prev})"),
                });
            }
        }
        let position = Vec3::new(
            parse_field(&record, 1, "px", line)?,
            parse_field(&record, 2, "py", line)?,
            parse_field(&record, 3, "pz", line)?,
        );
        let q = na::Quaternion::new(
            parse_field(&record, 4, "qw", line)?,
            parse_field(&record, 5, "qx", line)?,
            parse_field(&record, 6, "qy", line)?,
            parse_field(&record, 7, "qz", line)?,
        );
        if q.norm() < 1e-9 {
            return Err(Error::Trace {
                line: Some(line),
                message: "orientation quaternion has zero norm".to_string(),
            });
        }
        let velocity = if has_velocity {
            Vec3::new(
                parse_field(&record, 8, "vx", line)?,
                parse_field(&record, 9, "vy", line)?,
                parse_field(&record, 10, "vz", line)?,
            )
        } else {
            Vec3::zeros()
        };
        samples.push(HumanSample {
            t,
            position,
            orientation: UnitQuat::new_normalize(q),
            velocity,
        });
    }
    if samples.is_empty() {
        return Err(Error::Trace {
            line: None,
            message: "trace has no samples".to_string(),
        });
    }
    if !has_velocity {
        if samples.len() < 2 {
            return Err(Error::Trace {
                line: None,
                message: "need at least 2 samples to derive velocities".to_string(),
            });
        }
        let n = samples.len();
        let mut velocities = Vec::with_capacity(n);
        for i in 0..n {
            let (a, b) = if i == 0 {
                (0, 1)
            } else if i == n - 1 {
                (n - 2, n - 1)
            } else {
                (i - 1, i + 1)
            };
            let dt = samples[b].t - samples[a].t;
            velocities.push((samples[b].position - samples[a].position) / dt);
        }
        for (s, v) in samples.iter_mut().zip(velocities) {
            s.velocity = v;
        }
    }
    Ok(samples)
}

// ---------------------------------------------------------------------------
// Run logs (CSV with a metadata comment line)
// ---------------------------------------------------------------------------

const META_PREFIX: &str = "# meta ";

/// Saves a run log: a `# meta {json}` line, then one CSV row per tick.
pub fn save_log(path: &Path, log: &TraceLog) -> Result<()> {
    let mut file = fs::File::create(path)?;
    let meta = serde_json::to_string(&log.meta)
        .map_err(|e| Error::Config(format!("serialize meta: {e}")))?;
    writeln!(file, "{META_PREFIX}{meta}")?;
    let mut writer = csv::Writer::from_writer(file);
    for row in &log.rows {
        writer
            .serialize(row)
            .map_err(|e| Error::Config(format!("serialize log row: {e}")))?;
    }
    writer
        .flush()
        .map_err(|e| Error::Config(format!("flush log: {e}")))?;
    Ok(())
}

/// Loads a run log saved by [`save_log`].
pub fn load_log(path: &Path) -> Result<TraceLog> {
    let text = fs::read_to_string(path)?;
    let (first, rest) = text.split_once('\n').ok_or_else(|| Error::Trace {
        line: Some(1),
        message: "empty log file".to_string(),
    })?;
    let meta_json = first.strip_prefix(META_PREFIX).ok_or_else(|| Error::Trace {
        line: Some(1),
        message: format!("expected a `{META_PREFIX}{{...}}` line"),
    })?;
    let meta: RunMeta = serde_json::from_str(meta_json).map_err(|e| Error::Trace {
        line: Some(1),
        message: format!("bad meta line: {e}"),
    })?;
    let mut reader = csv::Reader::from_reader(rest.as_bytes());
    let mut rows = Vec::new();
    for item in reader.deserialize::<TickRow>() {
        // The meta line is not visible to the CSV reader, so its line
        // numbers are short by one.
        let row = item.map_err(|e| Error::Trace {
            line: e.position().map(|p| p.line() as usize + 1),
            message: e.to_string(),
        })?;
        rows.push(row);
    }
    Ok(TraceLog { meta, rows })
}

// ---------------------------------------------------------------------------
// JSON reports
// ---------------------------------------------------------------------------

/// Writes any serializable value as pretty JSON with a trailing newline.
pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("serialize: {e}")))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Reads any deserializable value from a JSON file.
pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// Run manifests
// ---------------------------------------------------------------------------

/// Identifying record for one simulation run. Two runs with equal manifests
/// are byte-identical reproductions of each other.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub scenario: String,
    pub seed: Option<u64>,
    pub samples: usize,
    /// SHA-256 over the canonical JSON of the simulation configuration and
    /// the motion description (if the trace was synthesized).
    pub config_sha256: String,
}

/// Canonical digest of a run setup.
pub fn config_digest(config: &SimConfig, motion: Option<&MotionSpec>) -> String {
    let blob = serde_json::to_vec(&(config, motion)).expect("config serializes");
    let digest = Sha256::digest(&blob);
    digest.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Builds the manifest for a finished run.
pub fn manifest_for(log: &TraceLog, config: &SimConfig, motion: Option<&MotionSpec>) -> RunManifest {
    RunManifest {
        tool_version: TOOL_VERSION.to_string(),
        scenario: log.meta.scenario.clone(),
        seed: log.meta.seed,
        samples: log.rows.len(),
        config_sha256: config_digest(config, motion),
    }
}
