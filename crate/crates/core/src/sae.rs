//! Sparse autoencoders on captured activations and feature ablation.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bundle::{read_bundle, take, write_bundle, Tensor};
use crate::error::{LocalityError, Result};
use crate::geometry::{classify_sudoku_pair, Geometry, GeometryKind};
use crate::rng::{gaussian_vec, stream, Domain};
use crate::trace::ActivationField;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaeConfig {
    pub d_in: usize,
    pub features: usize,
    pub l1: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl SaeConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            d_in: 512,
            features: 2048,
            l1: 1e-3,
            learning_rate: 1e-2,
            epochs: 100,
            batch_size: 64,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_in == 0 || self.features <= self.d_in {
            return Err(LocalityError::InvalidParameter(format!(
                "need features > d_in > 0, got {} and {}",
                self.features, self.d_in
            )));
        }
        if !(self.l1 >= 0.0 && self.l1.is_finite()) {
            return Err(LocalityError::InvalidParameter("l1 weight must be >= 0".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(LocalityError::InvalidParameter("learning rate must be > 0".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(LocalityError::InvalidParameter(
                "batch size and epochs must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// `h = relu(x W_enc + b_enc)`, `x̂ = h W_dec + b_dec`. Row `f` of `w_dec`
/// is the decoder direction of feature `f`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaeModel {
    pub w_enc: Array2<f64>,
    pub b_enc: Array1<f64>,
    pub w_dec: Array2<f64>,
    pub b_dec: Array1<f64>,
    pub l1: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub total: f64,
    pub reconstruction: f64,
    pub sparsity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedSae {
    pub model: SaeModel,
    /// Full-data loss after each epoch.
    pub epoch_losses: Vec<LossComponents>,
}

/// Decoder rows are kept at unit norm so the L1 term cannot be dodged by
/// shrinking codes against growing directions.
fn normalize_rows(w: &mut Array2<f64>) {
    for mut row in w.rows_mut() {
        let n = row.dot(&row).sqrt();
        if n > 0.0 {
            row /= n;
        }
    }
}

impl SaeModel {
    /// Unit-norm random decoder rows and a tied encoder.
    pub fn init(cfg: &SaeConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = stream(cfg.seed, Domain::SaeInit, &[0]);
        let mut w_dec = Array2::from_shape_vec(
            (cfg.features, cfg.d_in),
            gaussian_vec(&mut rng, cfg.features * cfg.d_in),
        )
        .expect("shape matches");
        normalize_rows(&mut w_dec);
        Ok(Self {
            w_enc: w_dec.t().to_owned(),
            b_enc: Array1::zeros(cfg.features),
            w_dec,
            b_dec: Array1::zeros(cfg.d_in),
            l1: cfg.l1,
            seed: cfg.seed,
        })
    }

    pub fn d_in(&self) -> usize {
        self.w_dec.ncols()
    }

    pub fn features(&self) -> usize {
        self.w_dec.nrows()
    }

    fn pre(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.w_enc) + &self.b_enc
    }

    pub fn encode(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.pre(x).mapv_into(|v| v.max(0.0))
    }

    pub fn decode(&self, h: ArrayView2<f64>) -> Array2<f64> {
        h.dot(&self.w_dec) + &self.b_dec
    }

    /// Batch-mean loss `‖x − x̂‖² + λ‖h‖₁`.
    pub fn loss(&self, x: ArrayView2<f64>) -> LossComponents {
        let h = self.encode(x);
        let r = self.decode(h.view()) - x;
        let n = x.nrows().max(1) as f64;
        let reconstruction = r.iter().map(|v| v * v).sum::<f64>() / n;
        let sparsity = self.l1 * h.sum() / n;
        LossComponents {
            total: reconstruction + sparsity,
            reconstruction,
            sparsity,
        }
    }

    fn step(&mut self, x: ArrayView2<f64>, lr: f64) {
        let n = x.nrows() as f64;
        let pre = self.pre(x);
        let h = pre.mapv(|v| v.max(0.0));
        let gr = (self.decode(h.view()) - x) * (2.0 / n);
        let g_wdec = h.t().dot(&gr);
        let g_bdec = gr.sum_axis(Axis(0));
        let mut dh = gr.dot(&self.w_dec.t());
        let l1 = self.l1 / n;
        ndarray::Zip::from(&mut dh).and(&pre).for_each(|d, &p| {
            *d = if p > 0.0 { *d + l1 } else { 0.0 };
        });
        let g_wenc = x.t().dot(&dh);
        let g_benc = dh.sum_axis(Axis(0));
        self.w_dec.scaled_add(-lr, &g_wdec);
        self.b_dec.scaled_add(-lr, &g_bdec);
        self.w_enc.scaled_add(-lr, &g_wenc);
        self.b_enc.scaled_add(-lr, &g_benc);
        normalize_rows(&mut self.w_dec);
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let (f, d) = self.w_dec.dim();
        let header = json!({ "d_in": d, "features": f, "l1": self.l1, "seed": self.seed });
        write_bundle(
            dir,
            header,
            &[
                Tensor::from_f64("w_enc", &[d, f], self.w_enc.iter().copied()),
                Tensor::from_f64("b_enc", &[f], self.b_enc.iter().copied()),
                Tensor::from_f64("w_dec", &[f, d], self.w_dec.iter().copied()),
                Tensor::from_f64("b_dec", &[d], self.b_dec.iter().copied()),
            ],
        )
    }

    /// Weights come back rounded to 32 bits.
    pub fn read(dir: &Path) -> Result<Self> {
        let (header, tensors) = read_bundle(dir)?;
        let field = |k: &str| {
            header[k]
                .as_u64()
                .map(|v| v as usize)
                .ok_or_else(|| LocalityError::Validation(format!("SAE header lacks `{k}`")))
        };
        let (d, f) = (field("d_in")?, field("features")?);
        let mat = |name: &str, r: usize, c: usize| -> Result<Array2<f64>> {
            Array2::from_shape_vec((r, c), take(&tensors, name)?.to_f64())
                .map_err(|e| LocalityError::Shape(e.to_string()))
        };
        let vec = |name: &str, n: usize| -> Result<Array1<f64>> {
            let v = take(&tensors, name)?.to_f64();
            if v.len() != n {
                return Err(LocalityError::Shape(format!("{name} has {} values", v.len())));
            }
            Ok(Array1::from(v))
        };
        Ok(Self {
            w_enc: mat("w_enc", d, f)?,
            b_enc: vec("b_enc", f)?,
            w_dec: mat("w_dec", f, d)?,
            b_dec: vec("b_dec", d)?,
            l1: header["l1"].as_f64().unwrap_or(0.0),
            seed: header["seed"].as_u64().unwrap_or(0),
        })
    }
}

/// Pools `[E, T, D]` activations into `E·T` samples.
pub fn pooled_samples(acts: &ActivationField) -> Array2<f64> {
    let (e, t, d) = acts.data.dim();
    Array2::from_shape_vec((e * t, d), acts.data.iter().map(|&x| x as f64).collect())
        .expect("shape matches")
}

/// Minibatch gradient descent with a fixed step; batches are reshuffled
/// every epoch from a seeded stream.
pub fn train_sae_samples(x: &Array2<f64>, cfg: &SaeConfig) -> Result<TrainedSae> {
    cfg.validate()?;
    if x.ncols() != cfg.d_in {
        return Err(LocalityError::Shape(format!(
            "samples have {} dims, config expects {}",
            x.ncols(),
            cfg.d_in
        )));
    }
    if x.nrows() < cfg.batch_size {
        return Err(LocalityError::InsufficientData(format!(
            "{} samples for batch size {}",
            x.nrows(),
            cfg.batch_size
        )));
    }
    let mut model = SaeModel::init(cfg)?;
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut iteration = 0;
    for epoch in 0..cfg.epochs {
        let mut rng = stream(cfg.seed, Domain::SaeShuffle, &[epoch as u64]);
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch = x.select(Axis(0), chunk);
            model.step(batch.view(), cfg.learning_rate);
            iteration += 1;
        }
        let loss = model.loss(x.view());
        if !loss.total.is_finite() {
            return Err(LocalityError::Divergence {
                iteration,
                loss: loss.total,
            });
        }
        epoch_losses.push(loss);
    }
    Ok(TrainedSae { model, epoch_losses })
}

pub fn train_sae(acts: &ActivationField, cfg: &SaeConfig) -> Result<TrainedSae> {
    train_sae_samples(&pooled_samples(acts), cfg)
}

/// Maps a reconstructed activation at one position to the outputs whose
/// change is measured.
pub trait DecoderHead: Sync {
    fn apply(&self, position: usize, x: &[f64]) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityHead;

impl DecoderHead for IdentityHead {
    fn apply(&self, _position: usize, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureImpact {
    pub feature: usize,
    /// Mean over examples of the output change at each position.
    pub per_position: Vec<f64>,
    pub total: f64,
    /// Mean code activation at each position.
    pub mean_code: Vec<f64>,
}

struct Encoded {
    codes: Vec<Array2<f64>>,
    clean_out: Vec<Vec<Vec<f64>>>,
    recon: Vec<Array2<f64>>,
}

fn encode_examples(sae: &SaeModel, acts: &ActivationField, head: &dyn DecoderHead) -> Result<Encoded> {
    if acts.dims() != sae.d_in() {
        return Err(LocalityError::Shape(format!(
            "activations have {} dims, SAE expects {}",
            acts.dims(),
            sae.d_in()
        )));
    }
    let mut codes = Vec::new();
    let mut recon = Vec::new();
    let mut clean_out = Vec::new();
    for e in 0..acts.examples() {
        let x = acts.example(e).mapv(|v| v as f64);
        let h = sae.encode(x.view());
        let r = sae.decode(h.view());
        clean_out.push(
            (0..acts.positions())
                .map(|t| head.apply(t, r.row(t).as_slice().expect("contiguous")))
                .collect(),
        );
        codes.push(h);
        recon.push(r);
    }
    Ok(Encoded {
        codes,
        clean_out,
        recon,
    })
}

fn impact_of(sae: &SaeModel, enc: &Encoded, head: &dyn DecoderHead, f: usize) -> FeatureImpact {
    let e_count = enc.codes.len();
    let t_count = enc.recon.first().map_or(0, |r| r.nrows());
    let dir = sae.w_dec.row(f);
    let mut per_position = vec![0.0; t_count];
    let mut mean_code = vec![0.0; t_count];
    for e in 0..e_count {
        for t in 0..t_count {
            let c = enc.codes[e][[t, f]];
            mean_code[t] += c / e_count as f64;
            if c == 0.0 {
                continue;
            }
            let ablated: Vec<f64> = enc.recon[e]
                .row(t)
                .iter()
                .zip(dir)
                .map(|(x, d)| x - c * d)
                .collect();
            let out = head.apply(t, &ablated);
            let diff: f64 = out
                .iter()
                .zip(&enc.clean_out[e][t])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            per_position[t] += diff / e_count as f64;
        }
    }
    FeatureImpact {
        feature: f,
        total: per_position.iter().sum(),
        per_position,
        mean_code,
    }
}

/// Zeroes code `f`, decodes, and measures the head-output change per
/// position.
pub fn ablation_impact(
    sae: &SaeModel,
    acts: &ActivationField,
    head: &dyn DecoderHead,
    f: usize,
) -> Result<FeatureImpact> {
    if f >= sae.features() {
        return Err(LocalityError::InvalidParameter(format!(
            "feature {f} out of range for {} features",
            sae.features()
        )));
    }
    let enc = encode_examples(sae, acts, head)?;
    Ok(impact_of(sae, &enc, head, f))
}

/// Impacts of every feature, sorted by total impact descending with ties
/// broken by ascending feature id.
pub fn rank_features(
    sae: &SaeModel,
    acts: &ActivationField,
    head: &dyn DecoderHead,
) -> Result<Vec<FeatureImpact>> {
    let enc = encode_examples(sae, acts, head)?;
    let mut all: Vec<FeatureImpact> = (0..sae.features())
        .into_par_iter()
        .map(|f| impact_of(sae, &enc, head, f))
        .collect();
    all.sort_by(|a, b| b.total.total_cmp(&a.total).then(a.feature.cmp(&b.feature)));
    Ok(all)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureReport {
    pub feature: usize,
    pub total_impact: f64,
    /// Share of on-site impact per segment, in geometry segment order.
    pub segment_fractions: Vec<f64>,
    /// Largest single-segment share; `None` when no impact lands on a site.
    pub locality: Option<f64>,
    /// For Sudoku: box/row/col/other shares of impact relative to the
    /// feature's most active cell.
    pub constraint_fractions: Option<[f64; 4]>,
    pub anchor: Option<usize>,
}

pub fn segment_report(imp: &FeatureImpact, g: &Geometry) -> Result<FeatureReport> {
    if g.min_positions() > imp.per_position.len() {
        return Err(LocalityError::InvalidParameter(format!(
            "geometry needs {} positions, activations have {}",
            g.min_positions(),
            imp.per_position.len()
        )));
    }
    let mut seg = vec![0.0; g.segments().len()];
    for (i, &site) in g.sites().iter().enumerate() {
        seg[g.segment_of(i)] += imp.per_position[site];
    }
    let on_site: f64 = seg.iter().sum();
    let (segment_fractions, locality) = if on_site > 0.0 {
        let fr: Vec<f64> = seg.iter().map(|s| s / on_site).collect();
        let max = fr.iter().copied().fold(0.0, f64::max);
        (fr, Some(max))
    } else {
        (vec![0.0; seg.len()], None)
    };
    let (mut constraint_fractions, mut anchor) = (None, None);
    if g.kind() == GeometryKind::Sudoku && on_site > 0.0 {
        let sites = g.sites();
        let a = *sites
            .iter()
            .max_by(|&&x, &&y| imp.mean_code[x].total_cmp(&imp.mean_code[y]).then(y.cmp(&x)))
            .expect("nonempty");
        let mut mass = [0.0; 4];
        for &t in sites.iter().filter(|&&t| t != a) {
            mass[classify_sudoku_pair(a, t)?.index()] += imp.per_position[t];
        }
        let total: f64 = mass.iter().sum();
        if total > 0.0 {
            constraint_fractions = Some(mass.map(|m| m / total));
        }
        anchor = Some(a);
    }
    Ok(FeatureReport {
        feature: imp.feature,
        total_impact: imp.total,
        segment_fractions,
        locality,
        constraint_fractions,
        anchor,
    })
}

pub fn feature_segment_report(
    sae: &SaeModel,
    acts: &ActivationField,
    head: &dyn DecoderHead,
    g: &Geometry,
    top_k: usize,
) -> Result<Vec<FeatureReport>> {
    if top_k > sae.features() {
        return Err(LocalityError::InvalidParameter(format!(
            "top_k {top_k} exceeds {} features",
            sae.features()
        )));
    }
    rank_features(sae, acts, head)?
        .iter()
        .take(top_k)
        .map(|imp| segment_report(imp, g))
        .collect()
}

/// `feature,total_impact,locality,<segment>...` plus constraint columns for
/// Sudoku geometries.
pub fn report_csv(reports: &[FeatureReport], g: &Geometry) -> Result<String> {
    let sudoku = g.kind() == GeometryKind::Sudoku;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["feature", "total_impact", "locality"].map(String::from).to_vec();
    header.extend(g.segments().iter().map(|s| s.label.clone()));
    if sudoku {
        header.extend(["box", "row", "col", "other"].map(|c| format!("constraint_{c}")));
    }
    w.write_record(&header)?;
    for r in reports {
        let mut rec = vec![
            r.feature.to_string(),
            r.total_impact.to_string(),
            r.locality.map_or(String::new(), |x| x.to_string()),
        ];
        rec.extend(r.segment_fractions.iter().map(f64::to_string));
        if sudoku {
            match r.constraint_fractions {
                Some(c) => rec.extend(c.iter().map(f64::to_string)),
                None => rec.extend(std::iter::repeat_n(String::new(), 4)),
            }
        }
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| LocalityError::Validation(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
