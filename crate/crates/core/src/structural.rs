//! Structural locality diagnostics on Jacobian and attention kernels.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{LocalityError, Result};
use crate::geometry::{classify_sudoku_pair, ConstraintClass, Geometry, SUDOKU_CELLS};
use crate::stats::{bootstrap_components, BootstrapSpec};
use crate::toymodel::ToyModel;
use crate::trace::{CycleLabel, Level};

/// Relative tolerance below which the cross-segment mean counts as zero.
pub const CROSS_SEGMENT_EPS: f64 = 1e-12;

/// Nonnegative `[targets x sources]` sensitivity matrix over a set of sites.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub k: Array2<f64>,
    /// Site id of each row and column.
    pub sites: Vec<usize>,
    pub src: Option<CycleLabel>,
    pub dst: Option<CycleLabel>,
}

impl Kernel {
    pub fn new(
        k: Array2<f64>,
        sites: Vec<usize>,
        src: Option<CycleLabel>,
        dst: Option<CycleLabel>,
    ) -> Self {
        Self { k, sites, src, dst }
    }

    /// Wraps a matrix whose rows and columns follow `g.sites()`.
    pub fn over(k: Array2<f64>, g: &Geometry) -> Result<Self> {
        let kernel = Self::new(k, g.sites().to_vec(), None, None);
        kernel.validate()?;
        Ok(kernel)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.sites.len();
        if self.k.dim() != (p, p) {
            return Err(LocalityError::Shape(format!(
                "kernel is {:?}, expected {p}x{p}",
                self.k.dim()
            )));
        }
        if self.k.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(LocalityError::Validation(
                "kernel entries must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// Sub-kernel over the geometry's valid sites.
    pub fn restrict(&self, g: &Geometry) -> Result<Kernel> {
        let idx = g
            .sites()
            .iter()
            .map(|s| {
                self.sites.iter().position(|x| x == s).ok_or_else(|| {
                    LocalityError::Shape(format!("kernel does not cover site {s}"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let p = idx.len();
        let k = Array2::from_shape_fn((p, p), |(u, v)| self.k[[idx[u], idx[v]]]);
        Ok(Kernel::new(k, g.sites().to_vec(), self.src, self.dst))
    }

    fn check_geometry(&self, g: &Geometry) -> Result<()> {
        if self.sites != g.sites() {
            return Err(LocalityError::Shape(
                "kernel sites do not match the geometry".into(),
            ));
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        matrix_csv("target", &self.sites, &self.sites, &self.k)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| LocalityError::io(path, e))
    }
}

/// Dense CSV with a header row of column ids and each row led by its id.
pub fn matrix_csv<R: ToString, C: ToString>(
    corner: &str,
    rows: &[R],
    cols: &[C],
    m: &Array2<f64>,
) -> String {
    let mut out = String::new();
    out.push_str(corner);
    for c in cols {
        let _ = write!(out, ",{}", c.to_string());
    }
    out.push('\n');
    for (i, r) in rows.iter().enumerate() {
        out.push_str(&r.to_string());
        for j in 0..cols.len() {
            let _ = write!(out, ",{}", m[[i, j]]);
        }
        out.push('\n');
    }
    out
}

/// Parses [`matrix_csv`] output into `(row ids, column ids, matrix)`.
pub fn parse_matrix_csv(text: &str) -> Result<(Vec<String>, Vec<String>, Array2<f64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let cols: Vec<String> = reader.headers()?.iter().skip(1).map(String::from).collect();
    let mut rows = Vec::new();
    let mut data = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        if rec.len() != cols.len() + 1 {
            return Err(LocalityError::Shape(format!(
                "matrix row has {} values, header lists {}",
                rec.len().saturating_sub(1),
                cols.len()
            )));
        }
        rows.push(rec[0].to_string());
        for x in rec.iter().skip(1) {
            data.push(x.parse::<f64>().map_err(|e| {
                LocalityError::Validation(format!("bad matrix entry `{x}`: {e}"))
            })?);
        }
    }
    let m = Array2::from_shape_vec((rows.len(), cols.len()), data)
        .map_err(|e| LocalityError::Shape(e.to_string()))?;
    Ok((rows, cols, m))
}

/// Reads a square matrix keyed by site ids and reorders it to follow the
/// geometry's site list.
pub fn load_site_matrix(path: &Path, g: &Geometry) -> Result<Array2<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| LocalityError::io(path, e))?;
    let (rows, cols, m) = parse_matrix_csv(&text)?;
    let lookup = |ids: &[String], what: &str| -> Result<Vec<usize>> {
        g.sites()
            .iter()
            .map(|s| {
                ids.iter().position(|x| *x == s.to_string()).ok_or_else(|| {
                    LocalityError::Shape(format!("{what} ids lack site {s}"))
                })
            })
            .collect()
    };
    let (ri, ci) = (lookup(&rows, "row")?, lookup(&cols, "column")?);
    let p = g.len();
    Ok(Array2::from_shape_fn((p, p), |(u, v)| m[[ri[u], ci[v]]]))
}

/// Row-normalized diagonal concentration `ℓ̄(K)`, averaged over rows
/// with positive mass.
pub fn cell_locality(k: &Kernel) -> Result<f64> {
    k.validate()?;
    let mut sum = 0.0;
    let mut rows = 0usize;
    for (u, row) in k.k.rows().into_iter().enumerate() {
        let mass: f64 = row.sum();
        if mass > 0.0 {
            sum += row[u] / mass;
            rows += 1;
        }
    }
    if rows == 0 {
        return Err(LocalityError::Degenerate("every kernel row is zero".into()));
    }
    Ok(sum / rows as f64)
}

/// Same-position concentration of a kernel between adjacent recursive
/// states.
pub fn cross_cycle_concentration(k: &Kernel) -> Result<f64> {
    cell_locality(k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentKernel {
    pub kseg: Array2<f64>,
    pub labels: Vec<String>,
}

impl SegmentKernel {
    pub fn to_csv(&self) -> String {
        matrix_csv("segment", &self.labels, &self.labels, &self.kseg)
    }
}

/// `Kseg[m,n]`: mean of `K` over `S_m x S_n`.
pub fn segment_kernel(k: &Kernel, g: &Geometry) -> Result<SegmentKernel> {
    k.check_geometry(g)?;
    let s = g.segments().len();
    let mut sums = Array2::<f64>::zeros((s, s));
    let mut counts = Array2::<f64>::zeros((s, s));
    for u in 0..k.len() {
        for v in 0..k.len() {
            let (a, b) = (g.segment_of(u), g.segment_of(v));
            sums[[a, b]] += k.k[[u, v]];
            counts[[a, b]] += 1.0;
        }
    }
    Ok(SegmentKernel {
        kseg: sums / counts,
        labels: g.segments().iter().map(|s| s.label.clone()).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Granularity {
    /// Mean same-segment entry over mean cross-segment entry.
    pub r_seg: f64,
    pub cell_locality: f64,
    /// `r_seg / (1 + ℓ̄(K))`.
    pub score: f64,
}

pub fn granularity(k: &Kernel, g: &Geometry) -> Result<Granularity> {
    k.check_geometry(g)?;
    if g.segments().len() < 2 {
        return Err(LocalityError::InvalidParameter(
            "granularity needs at least two segments".into(),
        ));
    }
    let ell = cell_locality(k)?;
    let (mut same, mut n_same, mut cross, mut n_cross) = (0.0, 0usize, 0.0, 0usize);
    for u in 0..k.len() {
        for v in 0..k.len() {
            if g.segment_of(u) == g.segment_of(v) {
                same += k.k[[u, v]];
                n_same += 1;
            } else {
                cross += k.k[[u, v]];
                n_cross += 1;
            }
        }
    }
    let same_mean = same / n_same as f64;
    let cross_mean = cross / n_cross as f64;
    let overall = k.k.mean().unwrap_or(0.0);
    if cross_mean <= CROSS_SEGMENT_EPS * overall {
        return Err(LocalityError::InfiniteRatio { same_mean });
    }
    let r_seg = same_mean / cross_mean;
    Ok(Granularity {
        r_seg,
        cell_locality: ell,
        score: r_seg / (1.0 + ell),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossCycleEdge {
    pub from: CycleLabel,
    pub to: CycleLabel,
    pub concentration: f64,
}

/// Cross-cycle concentration on every edge between consecutive states of
/// `level`, using finite-difference kernels restricted to `g`.
pub fn cross_cycle_profile(
    model: &ToyModel,
    tokens: &[usize],
    level: Level,
    g: &Geometry,
    eps: f64,
) -> Result<Vec<CrossCycleEdge>> {
    let labels: Vec<CycleLabel> = model
        .config
        .labels()
        .into_iter()
        .filter(|l| l.level == level)
        .collect();
    labels
        .windows(2)
        .map(|w| {
            let k = model.jacobian_fd(tokens, w[0], w[1], eps)?.restrict(g)?;
            Ok(CrossCycleEdge {
                from: w[0],
                to: w[1],
                concentration: cross_cycle_concentration(&k)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintFractions {
    /// Indexed by [`ConstraintClass::index`]: box, row, col, other.
    pub fractions: [f64; 4],
    /// Pair-resampling percentile intervals, same order.
    pub ci: Option<[(f64, f64); 4]>,
}

impl ConstraintFractions {
    pub fn get(&self, class: ConstraintClass) -> f64 {
        self.fractions[class.index()]
    }
}

/// Share of off-diagonal kernel mass on box, row, col and other cell pairs.
pub fn constraint_mass_fractions(
    k: &Kernel,
    bootstrap: Option<&BootstrapSpec>,
) -> Result<ConstraintFractions> {
    k.validate()?;
    if k.sites.len() != SUDOKU_CELLS || k.sites.iter().enumerate().any(|(i, &s)| i != s) {
        return Err(LocalityError::InvalidParameter(
            "constraint fractions need the 81-cell Sudoku geometry".into(),
        ));
    }
    let mut pairs = Vec::with_capacity(SUDOKU_CELLS * (SUDOKU_CELLS - 1));
    for i in 0..SUDOKU_CELLS {
        for j in 0..SUDOKU_CELLS {
            if i != j {
                pairs.push((classify_sudoku_pair(i, j)?.index(), k.k[[i, j]]));
            }
        }
    }
    let fractions_of = |idx: &mut dyn Iterator<Item = usize>| -> Option<[f64; 4]> {
        let mut mass = [0.0; 4];
        for i in idx {
            let (c, m) = pairs[i];
            mass[c] += m;
        }
        let total: f64 = mass.iter().sum();
        (total > 0.0).then(|| mass.map(|m| m / total))
    };
    let fractions = fractions_of(&mut (0..pairs.len()))
        .ok_or_else(|| LocalityError::Degenerate("no off-diagonal kernel mass".into()))?;
    let ci = bootstrap.map(|spec| {
        let bounds = bootstrap_components(pairs.len(), 4, spec, |idx| {
            fractions_of(&mut idx.iter().copied()).map(|f| f.to_vec())
        });
        [bounds[0], bounds[1], bounds[2], bounds[3]]
    });
    Ok(ConstraintFractions { fractions, ci })
}

/// Mean over target rows of the attention mass landing in `N(u)`.
pub fn attention_locality(attn: &Array2<f64>, g: &Geometry) -> Result<f64> {
    let p = g.len();
    if attn.dim() != (p, p) {
        return Err(LocalityError::Shape(format!(
            "attention is {:?}, geometry has {p} sites",
            attn.dim()
        )));
    }
    if attn.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(LocalityError::InvalidParameter(
            "attention weights must be finite and nonnegative".into(),
        ));
    }
    let scores: Vec<Option<f64>> = (0..p)
        .into_par_iter()
        .map(|u| {
            let row = attn.row(u);
            let total: f64 = row.sum();
            (total > 0.0).then(|| {
                let near: f64 = g.neighborhood_indices(u).iter().map(|&w| row[w]).sum();
                near / total
            })
        })
        .collect();
    let kept: Vec<f64> = scores.into_iter().flatten().collect();
    if kept.is_empty() {
        return Err(LocalityError::Degenerate("every attention row is zero".into()));
    }
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}
