//! Activation traces and their on-disk container.
//!
//! A container is a directory holding `manifest.json` and one raw
//! little-endian `f32` payload per field, laid out row-major as
//! `[example, position, dim]`. Each payload's CRC32 is recorded in the
//! manifest.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array3, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{LocalityError, Result};

pub const TRACE_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Level {
    L,
    H,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::L => "L",
            Self::H => "H",
        }
    }
}

impl FromStr for Level {
    type Err = LocalityError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "L" | "l" => Ok(Self::L),
            "H" | "h" => Ok(Self::H),
            other => Err(LocalityError::InvalidParameter(format!(
                "unknown level `{other}`"
            ))),
        }
    }
}

/// A capture site in the recursion: high phase `n`, low call `m`, and the
/// level whose update produced the state.
///
/// Ordering is `(phase, call, level)` with the L update of a call before the
/// H update that consumes it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CycleLabel {
    pub phase: usize,
    pub call: usize,
    pub level: Level,
}

impl CycleLabel {
    pub fn new(phase: usize, call: usize, level: Level) -> Self {
        Self { phase, call, level }
    }

    /// The `HnLm` part without the level.
    pub fn cycle(&self) -> String {
        format!("H{}L{}", self.phase, self.call)
    }

    pub fn with_level(self, level: Level) -> Self {
        Self { level, ..self }
    }

    /// Parses `HnLm` plus a separate level.
    pub fn parse_cycle(cycle: &str, level: Level) -> Result<Self> {
        let bad = || LocalityError::InvalidParameter(format!("bad cycle label `{cycle}`"));
        let rest = cycle.strip_prefix('H').ok_or_else(bad)?;
        let (n, m) = rest.split_once('L').ok_or_else(bad)?;
        Ok(Self {
            phase: n.parse().map_err(|_| bad())?,
            call: m.parse().map_err(|_| bad())?,
            level,
        })
    }
}

impl fmt::Display for CycleLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "H{}L{}/{}", self.phase, self.call, self.level.as_str())
    }
}

impl FromStr for CycleLabel {
    type Err = LocalityError;

    /// Parses `HnLm/X`.
    fn from_str(s: &str) -> Result<Self> {
        let (cycle, level) = s.split_once('/').ok_or_else(|| {
            LocalityError::InvalidParameter(format!("label `{s}` lacks a `/L` or `/H` level"))
        })?;
        Self::parse_cycle(cycle, level.parse()?)
    }
}

impl Serialize for CycleLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CycleLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Captured states of one site for every example: `[E, T, D]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationField {
    pub label: CycleLabel,
    pub data: Array3<f32>,
}

impl ActivationField {
    pub fn examples(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn positions(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn dims(&self) -> usize {
        self.data.shape()[2]
    }

    /// `[T, D]` view of one example.
    pub fn example(&self, e: usize) -> ArrayView2<'_, f32> {
        self.data.index_axis(ndarray::Axis(0), e)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub task: String,
    pub model: String,
    /// `[high phases, low calls]`.
    pub schedule: [usize; 2],
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace {
    pub meta: TraceMeta,
    pub fields: Vec<ActivationField>,
}

impl ActivationTrace {
    pub fn new(meta: TraceMeta, fields: Vec<ActivationField>) -> Result<Self> {
        let trace = Self { meta, fields };
        trace.validate()?;
        Ok(trace)
    }

    pub fn validate(&self) -> Result<()> {
        let [phases, calls] = self.meta.schedule;
        let Some(first) = self.fields.first() else {
            return Ok(());
        };
        let shape = first.data.shape().to_vec();
        for (i, f) in self.fields.iter().enumerate() {
            if f.data.shape() != shape.as_slice() {
                return Err(LocalityError::Validation(format!(
                    "field {} has shape {:?}, expected {:?}",
                    f.label,
                    f.data.shape(),
                    shape
                )));
            }
            if f.label.phase >= phases || f.label.call >= calls {
                return Err(LocalityError::Validation(format!(
                    "field {} lies outside schedule {phases}x{calls}",
                    f.label
                )));
            }
            if i > 0 {
                let prev = self.fields[i - 1].label;
                if prev == f.label {
                    return Err(LocalityError::Validation(format!(
                        "duplicate field label {}",
                        f.label
                    )));
                }
                if prev > f.label {
                    return Err(LocalityError::Validation(format!(
                        "field {} is out of cycle order after {prev}",
                        f.label
                    )));
                }
            }
            let data = f.data.as_slice().ok_or_else(|| {
                LocalityError::Validation(format!("field {} is not contiguous", f.label))
            })?;
            if let Some(k) = data.iter().position(|x| !x.is_finite()) {
                return Err(LocalityError::Validation(format!(
                    "field {} has non-finite value at flat index {k}",
                    f.label
                )));
            }
        }
        Ok(())
    }

    pub fn field(&self, label: CycleLabel) -> Option<&ActivationField> {
        self.fields.iter().find(|f| f.label == label)
    }

    /// Fields of one level in cycle order.
    pub fn level_fields(&self, level: Level) -> impl Iterator<Item = &ActivationField> {
        self.fields.iter().filter(move |f| f.label.level == level)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    meta: TraceMeta,
    fields: Vec<FieldEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FieldEntry {
    label: String,
    level: Level,
    shape: [usize; 3],
    file: String,
    crc32: u32,
    #[serde(default = "default_dtype", skip_serializing_if = "is_default_dtype")]
    dtype: String,
}

fn default_dtype() -> String {
    "f32".into()
}

fn is_default_dtype(s: &str) -> bool {
    s == "f32"
}

/// Writes `data` as little-endian `f32` and returns its CRC32.
pub(crate) fn write_payload(path: &Path, data: &[f32]) -> Result<u32> {
    let bytes: Vec<u8> = data.iter().flat_map(|x| x.to_le_bytes()).collect();
    fs::write(path, &bytes).map_err(|e| LocalityError::io(path, e))?;
    Ok(crc32fast::hash(&bytes))
}

/// Reads a payload of exactly `len` floats and checks its CRC32.
pub(crate) fn read_payload(path: &Path, len: usize, crc: u32) -> Result<Vec<f32>> {
    if !path.exists() {
        return Err(LocalityError::MissingPayload(path.to_path_buf()));
    }
    let bytes = fs::read(path).map_err(|e| LocalityError::io(path, e))?;
    if bytes.len() != len * 4 {
        return Err(LocalityError::Shape(format!(
            "{}: payload holds {} bytes, manifest shape needs {}",
            path.display(),
            bytes.len(),
            len * 4
        )));
    }
    let actual = crc32fast::hash(&bytes);
    if actual != crc {
        return Err(LocalityError::Checksum {
            file: path.display().to_string(),
            expected: crc,
            actual,
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect())
}

/// Validates and writes `trace` into directory `dir` (created if needed).
pub fn write_trace(trace: &ActivationTrace, dir: &Path) -> Result<()> {
    trace.validate()?;
    fs::create_dir_all(dir).map_err(|e| LocalityError::io(dir, e))?;
    let mut entries = Vec::with_capacity(trace.fields.len());
    for (i, f) in trace.fields.iter().enumerate() {
        let file = format!("{i:03}_{}_{}.f32", f.label.cycle(), f.label.level.as_str());
        let data = f
            .data
            .as_slice()
            .ok_or_else(|| LocalityError::Validation("non-contiguous field".into()))?;
        let crc32 = write_payload(&dir.join(&file), data)?;
        let s = f.data.shape();
        entries.push(FieldEntry {
            label: f.label.cycle(),
            level: f.label.level,
            shape: [s[0], s[1], s[2]],
            file,
            crc32,
            dtype: default_dtype(),
        });
    }
    let manifest = Manifest {
        version: TRACE_VERSION,
        meta: trace.meta.clone(),
        fields: entries,
    };
    let path = dir.join(MANIFEST);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| LocalityError::io(&path, e))
}

pub fn read_trace(dir: &Path) -> Result<ActivationTrace> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| LocalityError::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.version != TRACE_VERSION {
        return Err(LocalityError::Validation(format!(
            "unsupported trace version {}",
            manifest.version
        )));
    }
    let mut fields = Vec::with_capacity(manifest.fields.len());
    for entry in manifest.fields {
        if entry.dtype != "f32" {
            return Err(LocalityError::UnknownDtype(entry.dtype));
        }
        let [e, t, d] = entry.shape;
        let data = read_payload(&dir.join(&entry.file), e * t * d, entry.crc32)?;
        let data = Array3::from_shape_vec((e, t, d), data)
            .map_err(|err| LocalityError::Shape(err.to_string()))?;
        fields.push(ActivationField {
            label: CycleLabel::parse_cycle(&entry.label, entry.level)?,
            data,
        });
    }
    ActivationTrace::new(manifest.meta, fields)
}

/// Mean per-step state change of one level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaCurve {
    pub level: Level,
    /// Label of the later state of each step.
    pub labels: Vec<CycleLabel>,
    pub deltas: Vec<f64>,
    /// `per_example[e][step]`: mean over positions for one example.
    pub per_example: Vec<Vec<f64>>,
}

/// For consecutive same-level fields, the mean over examples and positions
/// of `‖z_next[e,t] − z_prev[e,t]‖₂`.
pub fn state_delta_curve(trace: &ActivationTrace, level: Level) -> Result<DeltaCurve> {
    let fields: Vec<&ActivationField> = trace.level_fields(level).collect();
    if fields.len() < 2 {
        return Err(LocalityError::InsufficientData(format!(
            "need at least two {} fields, found {}",
            level.as_str(),
            fields.len()
        )));
    }
    let (e_count, t_count) = (fields[0].examples(), fields[0].positions());
    let mut per_example = vec![Vec::with_capacity(fields.len() - 1); e_count];
    let mut labels = Vec::with_capacity(fields.len() - 1);
    let mut deltas = Vec::with_capacity(fields.len() - 1);
    for pair in fields.windows(2) {
        let mut total = 0.0;
        for (e, row) in per_example.iter_mut().enumerate() {
            let (a, b) = (pair[0].example(e), pair[1].example(e));
            let mut ex = 0.0;
            for t in 0..t_count {
                let sq: f64 = a
                    .row(t)
                    .iter()
                    .zip(b.row(t))
                    .map(|(&x, &y)| {
                        let d = y as f64 - x as f64;
                        d * d
                    })
                    .sum();
                ex += sq.sqrt();
            }
            let ex = ex / t_count as f64;
            row.push(ex);
            total += ex;
        }
        labels.push(pair[1].label);
        deltas.push(total / e_count as f64);
    }
    Ok(DeltaCurve {
        level,
        labels,
        deltas,
        per_example,
    })
}
