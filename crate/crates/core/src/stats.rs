//! Percentile bootstrap, correlations and critical-cycle selection.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LocalityError, Result};
use crate::rng::{stream, Domain};
use crate::trace::{CycleLabel, DeltaCurve};

pub const DEFAULT_LEVEL: f64 = 0.95;
pub const DEFAULT_RESAMPLES: usize = 2000;
pub const MIN_RESAMPLES: usize = 100;
pub const DEFAULT_THRESHOLD_FRAC: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResampleUnit {
    #[default]
    Example,
    Pair,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSpec {
    pub level: f64,
    pub resamples: usize,
    pub seed: u64,
    #[serde(default)]
    pub unit: ResampleUnit,
}

impl BootstrapSpec {
    pub fn new(seed: u64) -> Self {
        Self {
            level: DEFAULT_LEVEL,
            resamples: DEFAULT_RESAMPLES,
            seed,
            unit: ResampleUnit::Example,
        }
    }

    pub fn with_unit(self, unit: ResampleUnit) -> Self {
        Self { unit, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(LocalityError::InvalidParameter(format!(
                "bootstrap level {} outside (0, 1)",
                self.level
            )));
        }
        if self.resamples < MIN_RESAMPLES {
            return Err(LocalityError::InvalidParameter(format!(
                "need at least {MIN_RESAMPLES} resamples, got {}",
                self.resamples
            )));
        }
        Ok(())
    }

    fn tails(&self) -> (f64, f64) {
        let a = (1.0 - self.level) / 2.0;
        (a, 1.0 - a)
    }

    /// Indices of resample `b` of `n` units, from its own stream.
    pub fn resample(&self, b: usize, n: usize) -> Vec<usize> {
        let mut rng = stream(self.seed, Domain::Bootstrap, &[b as u64]);
        (0..n).map(|_| rng.random_range(0..n)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let i = pos.floor() as usize;
    if i + 1 >= n {
        return sorted[n - 1];
    }
    let frac = pos - i as f64;
    sorted[i] + frac * (sorted[i + 1] - sorted[i])
}

/// Mean accumulated relative to the first value, so constant inputs come
/// back exactly.
pub fn mean(xs: &[f64]) -> f64 {
    let Some(&x0) = xs.first() else {
        return f64::NAN;
    };
    x0 + xs.iter().map(|x| x - x0).sum::<f64>() / xs.len() as f64
}

/// Percentile bootstrap of the mean.
pub fn bootstrap_ci(samples: &[f64], spec: &BootstrapSpec) -> Result<ConfidenceInterval> {
    spec.validate()?;
    if samples.len() < 2 {
        return Err(LocalityError::InsufficientData(format!(
            "bootstrap needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    let n = samples.len();
    let mut means: Vec<f64> = (0..spec.resamples)
        .into_par_iter()
        .map(|b| {
            let x0 = samples[0];
            x0 + spec.resample(b, n).iter().map(|&i| samples[i] - x0).sum::<f64>() / n as f64
        })
        .collect();
    means.sort_by(f64::total_cmp);
    let (a, b) = spec.tails();
    let m = mean(samples);
    // Clamped so the interval always contains the point estimate.
    Ok(ConfidenceInterval {
        mean: m,
        lo: quantile(&means, a).min(m),
        hi: quantile(&means, b).max(m),
        level: spec.level,
    })
}

/// Percentile intervals of a vector statistic over resampled unit indices.
/// Resamples where `stat` returns `None` are dropped.
pub fn bootstrap_components<F>(n: usize, dims: usize, spec: &BootstrapSpec, stat: F) -> Vec<(f64, f64)>
where
    F: Fn(&[usize]) -> Option<Vec<f64>> + Sync,
{
    let draws: Vec<Vec<f64>> = (0..spec.resamples)
        .into_par_iter()
        .filter_map(|b| stat(&spec.resample(b, n)))
        .collect();
    let (a, b) = spec.tails();
    (0..dims)
        .map(|k| {
            let mut col: Vec<f64> = draws.iter().map(|d| d[k]).collect();
            if col.is_empty() {
                return (f64::NAN, f64::NAN);
            }
            col.sort_by(f64::total_cmp);
            (quantile(&col, a), quantile(&col, b))
        })
        .collect()
}

/// A correlation coefficient, or `Undefined` when either input has zero
/// variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Correlation {
    Defined { value: f64, ci_lo: f64, ci_hi: f64 },
    Undefined,
}

impl Correlation {
    pub fn value(&self) -> Option<f64> {
        match self {
            Self::Defined { value, .. } => Some(*value),
            Self::Undefined => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Correlations {
    pub pearson: Correlation,
    pub spearman: Correlation,
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Pearson and Spearman coefficients with paired-resampling intervals.
pub fn correlations(x: &[f64], y: &[f64], spec: &BootstrapSpec) -> Result<Correlations> {
    spec.validate()?;
    if x.len() != y.len() {
        return Err(LocalityError::Shape(format!(
            "correlation inputs differ in length: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(LocalityError::InsufficientData(format!(
            "correlation needs at least 3 pairs, got {}",
            x.len()
        )));
    }
    let with_ci = |f: fn(&[f64], &[f64]) -> Option<f64>| -> Correlation {
        let Some(value) = f(x, y) else {
            return Correlation::Undefined;
        };
        let bounds = bootstrap_components(x.len(), 1, spec, |idx| {
            let xs: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
            let ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
            f(&xs, &ys).map(|r| vec![r])
        });
        Correlation::Defined {
            value,
            ci_lo: bounds[0].0,
            ci_hi: bounds[0].1,
        }
    };
    Ok(Correlations {
        pearson: with_ci(pearson),
        spearman: with_ci(spearman),
    })
}

/// Result of the sustained-drop convergence rule on a delta curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergencePoint {
    pub index: usize,
    pub converged: bool,
    pub threshold_frac: f64,
}

/// Earliest step after which every delta stays below
/// `threshold_frac * max`. A curve that never settles yields its last
/// step with `converged = false`.
pub fn select_critical_step(deltas: &[f64], threshold_frac: f64) -> Result<ConvergencePoint> {
    if deltas.is_empty() {
        return Err(LocalityError::InsufficientData("empty delta curve".into()));
    }
    if !(threshold_frac > 0.0 && threshold_frac < 1.0) {
        return Err(LocalityError::InvalidParameter(format!(
            "threshold fraction {threshold_frac} outside (0, 1)"
        )));
    }
    if deltas.iter().any(|d| !d.is_finite() || *d < 0.0) {
        return Err(LocalityError::Validation(
            "deltas must be finite and nonnegative".into(),
        ));
    }
    let point = |index, converged| ConvergencePoint {
        index,
        converged,
        threshold_frac,
    };
    if deltas.len() == 1 {
        return Ok(point(0, true));
    }
    let max = deltas.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return Ok(point(0, true));
    }
    let threshold = threshold_frac * max;
    let tail_start = deltas
        .iter()
        .rposition(|&d| d >= threshold)
        .map_or(0, |i| i + 1);
    if tail_start < deltas.len() {
        Ok(point(tail_start, true))
    } else {
        Ok(point(deltas.len() - 1, false))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalCycle {
    pub label: CycleLabel,
    pub index: usize,
    pub converged: bool,
    pub threshold_frac: f64,
}

pub fn select_critical_cycle(curve: &DeltaCurve, threshold_frac: f64) -> Result<CriticalCycle> {
    let p = select_critical_step(&curve.deltas, threshold_frac)?;
    Ok(CriticalCycle {
        label: curve.labels[p.index],
        index: p.index,
        converged: p.converged,
        threshold_frac,
    })
}
