//! Finite-noise activation patching: impact fields, locality scores,
//! noise calibration, reliability diagnostics and object zero-ablation.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{LocalityError, Result};
use crate::geometry::{baseline_local_fraction, near_pair_baseline, Geometry, ObjectScene};
use crate::rng::{gaussian_vec, stream, Domain};
use crate::stats::{bootstrap_ci, BootstrapSpec, ConfidenceInterval};
use crate::toymodel::{Injection, ToyConfig, ToyModel};
use crate::trace::{ActivationField, CycleLabel, Level};

pub const DEFAULT_TARGET_DROP: f64 = 0.30;
pub const CALIBRATION_TOLERANCE: f64 = 0.02;
pub const CALIBRATION_DRAWS: usize = 8;
pub const CALIBRATION_MAX_ITER: usize = 60;
pub const DILUTION_THRESHOLD: f64 = 0.1;
const SIGMA_BRACKET: (f64, f64) = (1e-6, 1e3);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelKind {
    /// `H(c−1) → L(c)`: the low update's read of the high state.
    #[serde(rename = "within-L")]
    WithinL,
    /// `L(c) → H(c)`: the high update's read of the low state.
    #[serde(rename = "within-H")]
    WithinH,
    /// `H(c−1) → H(c)`.
    #[serde(rename = "cross-HH")]
    CrossHH,
    /// `L(c−1) → L(c)`.
    CrossCycle,
    Custom,
}

impl ChannelKind {
    pub const STANDARD: [ChannelKind; 4] =
        [Self::WithinL, Self::WithinH, Self::CrossHH, Self::CrossCycle];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::WithinL => "within-L",
            Self::WithinH => "within-H",
            Self::CrossHH => "cross-HH",
            Self::CrossCycle => "cross-cycle",
            Self::Custom => "custom",
        }
    }

    /// Parses a comma-separated list such as `within-L,within-H`.
    pub fn parse_list(s: &str) -> Result<Vec<ChannelKind>> {
        s.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect()
    }
}

impl FromStr for ChannelKind {
    type Err = LocalityError;

    fn from_str(s: &str) -> Result<Self> {
        Self::STANDARD
            .into_iter()
            .chain([Self::Custom])
            .find(|k| k.as_str() == s)
            .ok_or_else(|| LocalityError::InvalidParameter(format!("unknown channel `{s}`")))
    }
}

/// An ordered source → destination pair of capture sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Channel {
    pub kind: ChannelKind,
    pub src: CycleLabel,
    pub dst: CycleLabel,
}

impl Channel {
    pub fn new(kind: ChannelKind, src: CycleLabel, dst: CycleLabel) -> Result<Self> {
        if src >= dst {
            return Err(LocalityError::InvalidParameter(format!(
                "channel source {src} must precede destination {dst}"
            )));
        }
        Ok(Self { kind, src, dst })
    }

    pub fn custom(src: CycleLabel, dst: CycleLabel) -> Result<Self> {
        Self::new(ChannelKind::Custom, src, dst)
    }

    /// Resolves a standard channel at cycle `at` (its level is ignored).
    pub fn at_cycle(kind: ChannelKind, cfg: &ToyConfig, at: CycleLabel) -> Result<Self> {
        let cycles = cfg.cycles();
        let k = cycles
            .iter()
            .position(|c| c.phase == at.phase && c.call == at.call)
            .ok_or_else(|| {
                LocalityError::InvalidParameter(format!("cycle {} not in schedule", at.cycle()))
            })?;
        let cur = cycles[k];
        let prev = || {
            k.checked_sub(1).map(|i| cycles[i]).ok_or_else(|| {
                LocalityError::InvalidParameter(format!(
                    "{} needs a cycle before {}",
                    kind.as_str(),
                    cur.cycle()
                ))
            })
        };
        let (src, dst) = match kind {
            ChannelKind::WithinL => (prev()?.with_level(Level::H), cur.with_level(Level::L)),
            ChannelKind::WithinH => (cur.with_level(Level::L), cur.with_level(Level::H)),
            ChannelKind::CrossHH => (prev()?.with_level(Level::H), cur.with_level(Level::H)),
            ChannelKind::CrossCycle => (prev()?.with_level(Level::L), cur.with_level(Level::L)),
            ChannelKind::Custom => {
                return Err(LocalityError::InvalidParameter(
                    "custom channels need explicit source and destination labels".into(),
                ))
            }
        };
        Self::new(kind, src, dst)
    }

    /// `within-L`, or `src->dst` for custom channels.
    pub fn name(&self) -> String {
        match self.kind {
            ChannelKind::Custom => format!("{}->{}", self.src, self.dst),
            k => k.as_str().to_string(),
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({} -> {})", self.name(), self.src, self.dst)
    }
}

/// Impact matrices `A[u,v]` (targets x sources over geometry sites), one
/// per example.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpactField {
    pub name: String,
    pub channel: Option<Channel>,
    pub sigma: Option<f64>,
    pub geometry: Geometry,
    pub per_example: Vec<Array2<f64>>,
}

impl ImpactField {
    /// Wraps externally computed matrices.
    pub fn from_matrices(name: &str, geometry: Geometry, per_example: Vec<Array2<f64>>) -> Result<Self> {
        let field = Self {
            name: name.to_string(),
            channel: None,
            sigma: None,
            geometry,
            per_example,
        };
        field.validate()?;
        Ok(field)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.geometry.len();
        if self.per_example.is_empty() {
            return Err(LocalityError::InsufficientData("impact field has no examples".into()));
        }
        for a in &self.per_example {
            if a.dim() != (p, p) {
                return Err(LocalityError::Shape(format!(
                    "impact matrix is {:?}, geometry has {p} sites",
                    a.dim()
                )));
            }
            if a.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(LocalityError::Validation(
                    "impact entries must be finite and nonnegative".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn examples(&self) -> usize {
        self.per_example.len()
    }

    /// Entrywise mean over examples.
    pub fn mean_matrix(&self) -> Array2<f64> {
        let mut acc = Array2::<f64>::zeros(self.per_example[0].dim());
        for a in &self.per_example {
            acc += a;
        }
        acc / self.per_example.len() as f64
    }
}

fn checked_geometry(model: &ToyModel, g: &Geometry) -> Result<()> {
    if g.min_positions() > model.positions() {
        return Err(LocalityError::InvalidParameter(format!(
            "geometry needs {} positions, model has {}",
            g.min_positions(),
            model.positions()
        )));
    }
    Ok(())
}

fn row_distance(a: &Array2<f64>, b: &Array2<f64>, row: usize) -> f64 {
    a.row(row)
        .iter()
        .zip(b.row(row))
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Impact field from explicit per-(example, source site) deltas.
pub fn impact_field_with<F>(
    model: &ToyModel,
    batch: &[Vec<usize>],
    channel: Channel,
    geometry: &Geometry,
    delta: F,
) -> Result<Vec<Array2<f64>>>
where
    F: Fn(usize, usize) -> Vec<f64> + Sync,
{
    checked_geometry(model, geometry)?;
    if batch.is_empty() {
        return Err(LocalityError::InsufficientData("no token sequences".into()));
    }
    let sites = geometry.sites();
    let cleans = batch
        .par_iter()
        .map(|tokens| {
            let r = model.forward_to(tokens, &[], Some(channel.dst))?;
            Ok(r.state(channel.dst).expect("dst captured").clone())
        })
        .collect::<Result<Vec<_>>>()?;
    let items: Vec<(usize, usize)> = (0..batch.len())
        .flat_map(|e| (0..sites.len()).map(move |i| (e, i)))
        .collect();
    let columns = items
        .par_iter()
        .map(|&(e, i)| -> Result<Vec<f64>> {
            let inj = Injection {
                label: channel.src,
                position: sites[i],
                delta: delta(e, sites[i]),
            };
            let r = model.forward_to(&batch[e], &[inj], Some(channel.dst))?;
            let patched = r.state(channel.dst).expect("dst captured");
            Ok(sites.iter().map(|&u| row_distance(patched, &cleans[e], u)).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    let p = sites.len();
    let mut out = vec![Array2::<f64>::zeros((p, p)); batch.len()];
    for (&(e, i), col) in items.iter().zip(columns) {
        out[e].column_mut(i).assign(&ndarray::Array1::from(col));
    }
    Ok(out)
}

/// Gaussian noise `σ·ε` with `ε` from stream `(seed, example, site)`.
pub fn patch_noise(seed: u64, example: usize, site: usize, dims: usize, sigma: f64) -> Vec<f64> {
    let mut rng = stream(seed, Domain::PatchNoise, &[example as u64, site as u64]);
    gaussian_vec(&mut rng, dims).into_iter().map(|x| sigma * x).collect()
}

pub fn impact_field(
    model: &ToyModel,
    batch: &[Vec<usize>],
    channel: Channel,
    sigma: f64,
    noise_seed: u64,
    geometry: &Geometry,
) -> Result<ImpactField> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(LocalityError::InvalidParameter(format!(
            "noise scale must be positive, got {sigma}"
        )));
    }
    let d = model.dims();
    let per_example = impact_field_with(model, batch, channel, geometry, |e, s| {
        patch_noise(noise_seed, e, s, d, sigma)
    })?;
    Ok(ImpactField {
        name: channel.name(),
        channel: Some(channel),
        sigma: Some(sigma),
        geometry: geometry.clone(),
        per_example,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalityResult {
    pub channel: String,
    /// Site id of each entry below.
    pub sites: Vec<usize>,
    /// Mean over the examples where the source had positive mass; `None`
    /// when it never did.
    pub per_source: Vec<Option<f64>>,
    /// Column mass summed over examples.
    pub mass: Vec<f64>,
    /// Site ids whose mass was zero in every example.
    pub excluded: Vec<usize>,
    pub mean: f64,
    pub baseline: f64,
    /// Examples with at least one scored source.
    pub n: usize,
    pub ci: Option<ConfidenceInterval>,
}

fn per_example_scores(a: &Array2<f64>, mask: &[bool]) -> Vec<Option<f64>> {
    let p = a.nrows();
    (0..p)
        .map(|v| {
            let col = a.column(v);
            let total: f64 = col.sum();
            (total > 0.0).then(|| {
                let near: f64 = (0..p).filter(|&u| mask[u * p + v]).map(|u| col[u]).sum();
                near / total
            })
        })
        .collect()
}

/// Per-source `Σ_{u∈N(v)} A[u,v] / Σ_u A[u,v]` with zero-mass sources
/// excluded. The mean and its interval are taken over per-example means.
pub fn locality_score(field: &ImpactField, bootstrap: Option<&BootstrapSpec>) -> Result<LocalityResult> {
    field.validate()?;
    let g = &field.geometry;
    let p = g.len();
    let mask = g.neighborhood_mask();
    let scores: Vec<Vec<Option<f64>>> = field
        .per_example
        .iter()
        .map(|a| per_example_scores(a, &mask))
        .collect();
    let example_means: Vec<f64> = scores
        .iter()
        .filter_map(|s| {
            let kept: Vec<f64> = s.iter().flatten().copied().collect();
            (!kept.is_empty()).then(|| kept.iter().sum::<f64>() / kept.len() as f64)
        })
        .collect();
    if example_means.is_empty() {
        return Err(LocalityError::Degenerate(format!(
            "every source of {} has zero impact mass",
            field.name
        )));
    }
    let per_source: Vec<Option<f64>> = (0..p)
        .map(|v| {
            let vals: Vec<f64> = scores.iter().filter_map(|s| s[v]).collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        })
        .collect();
    let mass: Vec<f64> = (0..p)
        .map(|v| field.per_example.iter().map(|a| a.column(v).sum()).sum())
        .collect();
    let excluded = (0..p)
        .filter(|&v| per_source[v].is_none())
        .map(|v| g.sites()[v])
        .collect();
    let mean = example_means.iter().sum::<f64>() / example_means.len() as f64;
    let ci = match bootstrap {
        Some(spec) if example_means.len() >= 2 => Some(bootstrap_ci(&example_means, spec)?),
        _ => None,
    };
    Ok(LocalityResult {
        channel: field.name.clone(),
        sites: g.sites().to_vec(),
        per_source,
        mass,
        excluded,
        mean,
        baseline: baseline_local_fraction(g),
        n: example_means.len(),
        ci,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseCalibration {
    pub sigma: f64,
    pub achieved: f64,
    pub iterations: usize,
}

/// Relative change `‖Δz_dst[v]‖ / ‖z_dst[v]‖` at the probe site, averaged
/// over examples and [`CALIBRATION_DRAWS`] fixed noise directions.
pub fn self_drop(
    model: &ToyModel,
    batch: &[Vec<usize>],
    channel: Channel,
    probe: usize,
    sigma: f64,
    seed: u64,
) -> Result<f64> {
    if probe >= model.positions() {
        return Err(LocalityError::InvalidParameter(format!(
            "probe position {probe} out of range"
        )));
    }
    let d = model.dims();
    let items: Vec<(usize, usize)> = (0..batch.len())
        .flat_map(|e| (0..CALIBRATION_DRAWS).map(move |k| (e, k)))
        .collect();
    let drops = items
        .par_iter()
        .map(|&(e, k)| -> Result<f64> {
            let clean = model.forward_to(&batch[e], &[], Some(channel.dst))?;
            let clean = clean.state(channel.dst).expect("dst captured");
            let norm = clean.row(probe).iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(LocalityError::Degenerate(format!(
                    "clean state at probe {probe} is zero"
                )));
            }
            let mut rng = stream(seed, Domain::Calibration, &[e as u64, k as u64]);
            let delta = gaussian_vec(&mut rng, d).into_iter().map(|x| sigma * x).collect();
            let inj = Injection {
                label: channel.src,
                position: probe,
                delta,
            };
            let r = model.forward_to(&batch[e], &[inj], Some(channel.dst))?;
            Ok(row_distance(r.state(channel.dst).expect("dst captured"), clean, probe) / norm)
        })
        .collect::<Result<Vec<_>>>()?;
    if drops.is_empty() {
        return Err(LocalityError::InsufficientData("no token sequences".into()));
    }
    Ok(drops.iter().sum::<f64>() / drops.len() as f64)
}

/// Bisection in `log σ` until the self-drop is within
/// [`CALIBRATION_TOLERANCE`] of `target`.
pub fn calibrate_noise(
    model: &ToyModel,
    batch: &[Vec<usize>],
    channel: Channel,
    probe: usize,
    target: f64,
    seed: u64,
) -> Result<NoiseCalibration> {
    if !(target > 0.0 && target < 1.0) {
        return Err(LocalityError::InvalidParameter(format!(
            "target drop {target} outside (0, 1)"
        )));
    }
    let drop_at = |s: f64| self_drop(model, batch, channel, probe, s, seed);
    let (mut lo, mut hi) = (SIGMA_BRACKET.0.ln(), SIGMA_BRACKET.1.ln());
    let (d_lo, d_hi) = (drop_at(lo.exp())?, drop_at(hi.exp())?);
    let fail = || LocalityError::Calibration {
        target,
        achieved_lo: d_lo,
        achieved_hi: d_hi,
    };
    if target < d_lo - CALIBRATION_TOLERANCE || target > d_hi + CALIBRATION_TOLERANCE {
        return Err(fail());
    }
    for iterations in 1..=CALIBRATION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let achieved = drop_at(mid.exp())?;
        if (achieved - target).abs() <= CALIBRATION_TOLERANCE {
            return Ok(NoiseCalibration {
                sigma: mid.exp(),
                achieved,
                iterations,
            });
        }
        if achieved < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(fail())
}

/// RMS of the activation entries, optionally at one position only.
pub fn calibrate_noise_snr(field: &ActivationField, position: Option<usize>) -> Result<f64> {
    let (sum, n) = match position {
        Some(t) => {
            if t >= field.positions() {
                return Err(LocalityError::InvalidParameter(format!(
                    "position {t} out of range"
                )));
            }
            let view = field.data.index_axis(Axis(1), t);
            (view.iter().map(|&x| (x as f64).powi(2)).sum::<f64>(), view.len())
        }
        None => (
            field.data.iter().map(|&x| (x as f64).powi(2)).sum::<f64>(),
            field.data.len(),
        ),
    };
    if n == 0 {
        return Err(LocalityError::InsufficientData("empty activation field".into()));
    }
    let rms = (sum / n as f64).sqrt();
    if rms == 0.0 {
        return Err(LocalityError::Degenerate("activation field is all zero".into()));
    }
    Ok(rms)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelReliability {
    pub channel: String,
    pub self_drop: f64,
    pub bucket_labels: Vec<String>,
    /// Mean impact per distance bucket over the self bucket; `None` for
    /// buckets with no pairs.
    pub decay: Vec<Option<f64>>,
    pub diluted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReliabilityReport {
    pub channels: Vec<ChannelReliability>,
}

pub fn channel_reliability(field: &ImpactField) -> Result<ChannelReliability> {
    field.validate()?;
    let g = &field.geometry;
    let a = field.mean_matrix();
    let p = g.len();
    let fracs: Vec<f64> = (0..p)
        .filter_map(|v| {
            let total = a.column(v).sum();
            (total > 0.0).then(|| a[[v, v]] / total)
        })
        .collect();
    if fracs.is_empty() {
        return Err(LocalityError::Degenerate(format!(
            "every source of {} has zero impact mass",
            field.name
        )));
    }
    let self_drop = fracs.iter().sum::<f64>() / fracs.len() as f64;
    let labels = g.bucket_labels();
    let mut sums = vec![0.0; labels.len()];
    let mut counts = vec![0usize; labels.len()];
    for v in 0..p {
        for u in 0..p {
            let b = g.distance_bucket(u, v);
            sums[b] += a[[u, v]];
            counts[b] += 1;
        }
    }
    let base = sums[0] / counts[0] as f64;
    if base == 0.0 {
        return Err(LocalityError::Degenerate(format!(
            "{} has no self impact to normalize the decay curve",
            field.name
        )));
    }
    let decay = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| (c > 0).then(|| s / c as f64 / base))
        .collect();
    Ok(ChannelReliability {
        channel: field.name.clone(),
        self_drop,
        bucket_labels: labels.into_iter().map(String::from).collect(),
        decay,
        diluted: self_drop < DILUTION_THRESHOLD,
    })
}

pub fn reliability(fields: &[ImpactField]) -> Result<ReliabilityReport> {
    if fields.is_empty() {
        return Err(LocalityError::InsufficientData("no impact fields".into()));
    }
    Ok(ReliabilityReport {
        channels: fields.iter().map(channel_reliability).collect::<Result<_>>()?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZeroAblation {
    pub field: ImpactField,
    /// `None` for sources whose ablation changed nothing.
    pub near_frac: Vec<Option<f64>>,
    /// Share of off-diagonal pairs that are near.
    pub baseline: f64,
}

/// Zeroes each object's feature row in turn and measures the change of
/// every downstream output row.
pub fn zero_ablation_field<F>(features: &Array2<f64>, downstream: F, geometry: &Geometry) -> Result<ZeroAblation>
where
    F: Fn(&Array2<f64>) -> Result<Array2<f64>> + Sync,
{
    let n = geometry.len();
    if features.nrows() != n {
        return Err(LocalityError::Shape(format!(
            "{} feature rows for {n} objects",
            features.nrows()
        )));
    }
    let clean = downstream(features)?;
    if clean.nrows() != n {
        return Err(LocalityError::Shape(format!(
            "downstream map returned {} rows for {n} objects",
            clean.nrows()
        )));
    }
    let columns = (0..n)
        .into_par_iter()
        .map(|v| -> Result<Vec<f64>> {
            let mut ablated = features.clone();
            ablated.row_mut(v).fill(0.0);
            let out = downstream(&ablated)?;
            if out.dim() != clean.dim() {
                return Err(LocalityError::Shape("downstream output shape changed".into()));
            }
            Ok((0..n).map(|u| row_distance(&out, &clean, u)).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut a = Array2::<f64>::zeros((n, n));
    for (v, col) in columns.into_iter().enumerate() {
        a.column_mut(v).assign(&ndarray::Array1::from(col));
    }
    let field = ImpactField::from_matrices("zero-ablation", geometry.clone(), vec![a])?;
    let near_frac = per_example_scores(&field.per_example[0], &geometry.neighborhood_mask());
    Ok(ZeroAblation {
        field,
        near_frac,
        baseline: near_pair_baseline(geometry),
    })
}

/// Stand-in downstream maps over per-object feature rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Surrogate {
    Identity,
    MeanPool,
    /// Row-normalized `exp(−dist)` mixing of object features.
    DistanceWeighted,
}

impl FromStr for Surrogate {
    type Err = LocalityError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Self::Identity),
            "mean-pool" => Ok(Self::MeanPool),
            "distance-weighted" => Ok(Self::DistanceWeighted),
            _ => Err(LocalityError::InvalidParameter(format!("unknown surrogate `{s}`"))),
        }
    }
}

impl Surrogate {
    /// The `n x n` linear mixing this surrogate applies to feature rows.
    pub fn weights(self, scene: &ObjectScene) -> Array2<f64> {
        let n = scene.len();
        match self {
            Self::Identity => Array2::eye(n),
            Self::MeanPool => Array2::from_elem((n, n), 1.0 / n as f64),
            Self::DistanceWeighted => {
                let mut w = Array2::from_shape_fn((n, n), |(u, v)| (-scene.distance(u, v)).exp());
                for mut row in w.rows_mut() {
                    let s = row.sum();
                    row /= s;
                }
                w
            }
        }
    }
}

/// One row per (channel, source).
pub fn locality_csv(results: &[LocalityResult]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["channel", "source", "L", "excluded", "mass"])?;
    for r in results {
        for (i, &site) in r.sites.iter().enumerate() {
            let l = r.per_source[i].map_or(String::new(), |x| x.to_string());
            w.write_record([
                r.channel.clone(),
                site.to_string(),
                l,
                r.per_source[i].is_none().to_string(),
                r.mass[i].to_string(),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| LocalityError::Validation(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// `{channel: {mean, ci_lo, ci_hi, baseline, n}}`.
pub fn locality_summary(results: &[LocalityResult]) -> Value {
    let mut map = Map::new();
    for r in results {
        let (lo, hi) = r.ci.map_or((Value::Null, Value::Null), |c| (json!(c.lo), json!(c.hi)));
        map.insert(
            r.channel.clone(),
            json!({ "mean": r.mean, "ci_lo": lo, "ci_hi": hi, "baseline": r.baseline, "n": r.n }),
        );
    }
    Value::Object(map)
}
