//! A tiny two-level recursive network with plantable position mixing.
//!
//! Each cycle `(n, m)` runs one low update followed by one high update:
//!
//! ```text
//! z_L <- act(M_L · (z_L W_self + (z_H + e) W_cross) + b_L)
//! z_H <- act(M_H · (z_H W_self' + z_L W_cross') + b_H)
//! ```
//!
//! where `e = embed[tokens] · W_in`. Both post-update states are captured.
//! HRM mode uses distinct L and H modules; TRM mode shares one module.
//! The mixing matrices `M` decide which positions can talk to each other,
//! which makes ground-truth locality plantable.

use std::path::Path;

use ndarray::{Array1, Array2, Array3, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bundle::{read_bundle, take, write_bundle, Tensor};
use crate::error::{LocalityError, Result};
use crate::geometry::Geometry;
use crate::rng::{gaussian_vec, stream, Domain};
use crate::structural::Kernel;
use crate::trace::{ActivationField, ActivationTrace, CycleLabel, Level, TraceMeta};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Hrm,
    Trm,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Hrm => "hrm",
            Self::Trm => "trm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    #[default]
    Tanh,
    /// Identity activation; makes the whole network linear.
    Linear,
}

/// How a module mixes information across positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MixingSpec {
    /// `M = I`: no cross-position channel.
    Diagonal,
    /// Every entry `1/T`.
    Uniform,
    /// Row `u` averages over `N(u)`; positions outside the geometry keep
    /// identity rows.
    Neighborhood { geometry: Box<Geometry> },
    /// Gaussian entries scaled `1/√T`.
    DenseRandom,
}

fn default_vocab() -> usize {
    8
}

/// One-to-one with the JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyConfig {
    /// Positions `T`.
    pub positions: usize,
    /// Hidden width `D`.
    pub dims: usize,
    /// `[high phases, low calls]`.
    pub schedule: [usize; 2],
    pub mode: Mode,
    pub mixing_l: MixingSpec,
    /// Ignored in TRM mode beyond a consistency check; defaults to
    /// `mixing_l`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixing_h: Option<MixingSpec>,
    #[serde(default)]
    pub nonlinearity: Nonlinearity,
    #[serde(default = "default_vocab")]
    pub vocab: usize,
    pub seed: u64,
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.positions == 0 || self.dims == 0 {
            return Err(LocalityError::InvalidParameter(
                "positions and dims must be at least 1".into(),
            ));
        }
        if self.schedule[0] == 0 || self.schedule[1] == 0 {
            return Err(LocalityError::InvalidParameter(
                "schedule needs at least one high phase and one low call".into(),
            ));
        }
        if self.vocab == 0 {
            return Err(LocalityError::InvalidParameter("vocab must be positive".into()));
        }
        if self.mode == Mode::Trm {
            if let Some(h) = &self.mixing_h {
                if *h != self.mixing_l {
                    return Err(LocalityError::InvalidParameter(
                        "TRM mode shares one module; mixing_h must equal mixing_l".into(),
                    ));
                }
            }
        }
        for spec in [Some(&self.mixing_l), self.mixing_h.as_ref()].into_iter().flatten() {
            if let MixingSpec::Neighborhood { geometry } = spec {
                if geometry.min_positions() > self.positions {
                    return Err(LocalityError::InvalidParameter(format!(
                        "mixing geometry needs {} positions, model has {}",
                        geometry.min_positions(),
                        self.positions
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn mixing_h(&self) -> &MixingSpec {
        self.mixing_h.as_ref().unwrap_or(&self.mixing_l)
    }

    /// Every capture label in execution order.
    pub fn labels(&self) -> Vec<CycleLabel> {
        let [phases, calls] = self.schedule;
        let mut out = Vec::with_capacity(2 * phases * calls);
        for n in 0..phases {
            for m in 0..calls {
                out.push(CycleLabel::new(n, m, Level::L));
                out.push(CycleLabel::new(n, m, Level::H));
            }
        }
        out
    }

    /// Cycles `(n, m)` in execution order, as L-level labels.
    pub fn cycles(&self) -> Vec<CycleLabel> {
        self.labels()
            .into_iter()
            .filter(|l| l.level == Level::L)
            .collect()
    }

    pub fn contains(&self, label: CycleLabel) -> bool {
        label.phase < self.schedule[0] && label.call < self.schedule[1]
    }
}

/// Parameters of one update module.
#[derive(Debug, Clone, PartialEq)]
pub struct ModuleParams {
    /// `T x T` position mixing.
    pub mixing: Array2<f64>,
    /// `D x D` map applied to the module's own state.
    pub w_self: Array2<f64>,
    /// `D x D` map applied to the cross input.
    pub w_cross: Array2<f64>,
    pub bias: Array1<f64>,
}

impl ModuleParams {
    fn check(&self, t: usize, d: usize, name: &str) -> Result<()> {
        let shapes_ok = self.mixing.dim() == (t, t)
            && self.w_self.dim() == (d, d)
            && self.w_cross.dim() == (d, d)
            && self.bias.len() == d;
        if !shapes_ok {
            return Err(LocalityError::Shape(format!(
                "{name} module parameters do not match T={t}, D={d}"
            )));
        }
        let finite = self
            .mixing
            .iter()
            .chain(&self.w_self)
            .chain(&self.w_cross)
            .chain(&self.bias)
            .all(|x| x.is_finite());
        if !finite {
            return Err(LocalityError::Validation(format!(
                "{name} module has non-finite parameters"
            )));
        }
        Ok(())
    }
}

/// Adds `delta` to the state of `label` at `position`, right after that
/// state is produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Injection {
    pub label: CycleLabel,
    pub position: usize,
    pub delta: Vec<f64>,
}

/// Captured post-update states of one example, in execution order.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub states: Vec<(CycleLabel, Array2<f64>)>,
}

impl Rollout {
    pub fn state(&self, label: CycleLabel) -> Option<&Array2<f64>> {
        self.states
            .iter()
            .find(|(l, _)| *l == label)
            .map(|(_, s)| s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub config: ToyConfig,
    pub l: ModuleParams,
    pub h: ModuleParams,
    /// `vocab x D` token embedding table.
    pub embedding: Array2<f64>,
    /// `D x D` input map applied to embeddings.
    pub w_in: Array2<f64>,
}

fn gaussian_matrix(seed: u64, idx: &[u64], rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    let mut rng = stream(seed, Domain::Params, idx);
    let v = gaussian_vec(&mut rng, rows * cols);
    Array2::from_shape_vec((rows, cols), v).expect("shape matches") * scale
}

fn mixing_matrix(spec: &MixingSpec, t: usize, seed: u64, module: u64) -> Array2<f64> {
    match spec {
        MixingSpec::Diagonal => Array2::eye(t),
        MixingSpec::Uniform => Array2::from_elem((t, t), 1.0 / t as f64),
        MixingSpec::Neighborhood { geometry } => {
            let mut m = Array2::eye(t);
            for (i, &u) in geometry.sites().iter().enumerate() {
                let nb = geometry.neighborhood(i);
                let w = 1.0 / nb.len() as f64;
                m.row_mut(u).fill(0.0);
                for &v in nb {
                    m[[u, v]] = w;
                }
            }
            m
        }
        MixingSpec::DenseRandom => {
            gaussian_matrix(seed, &[module, 0], t, t, 1.0 / (t as f64).sqrt())
        }
    }
}

fn init_module(cfg: &ToyConfig, spec: &MixingSpec, module: u64) -> ModuleParams {
    let (t, d, seed) = (cfg.positions, cfg.dims, cfg.seed);
    let s = 1.0 / (d as f64).sqrt();
    ModuleParams {
        mixing: mixing_matrix(spec, t, seed, module),
        w_self: gaussian_matrix(seed, &[module, 1], d, d, s),
        w_cross: gaussian_matrix(seed, &[module, 2], d, d, s),
        bias: gaussian_matrix(seed, &[module, 3], 1, d, s).remove_axis(Axis(0)),
    }
}

/// Draws every parameter from seeded counter-based streams, scaled `1/√D`.
pub fn init_toy_model(cfg: &ToyConfig) -> Result<ToyModel> {
    cfg.validate()?;
    let l = init_module(cfg, &cfg.mixing_l, 0);
    let h = match cfg.mode {
        Mode::Trm => l.clone(),
        Mode::Hrm => init_module(cfg, cfg.mixing_h(), 1),
    };
    let s = 1.0 / (cfg.dims as f64).sqrt();
    Ok(ToyModel {
        embedding: gaussian_matrix(cfg.seed, &[2, 0], cfg.vocab, cfg.dims, s),
        w_in: gaussian_matrix(cfg.seed, &[2, 1], cfg.dims, cfg.dims, s),
        config: cfg.clone(),
        l,
        h,
    })
}

impl ToyModel {
    /// Assembles a model from explicit parameters.
    pub fn from_parts(
        config: ToyConfig,
        l: ModuleParams,
        h: ModuleParams,
        embedding: Array2<f64>,
        w_in: Array2<f64>,
    ) -> Result<Self> {
        config.validate()?;
        let (t, d) = (config.positions, config.dims);
        l.check(t, d, "L")?;
        h.check(t, d, "H")?;
        if config.mode == Mode::Trm && l != h {
            return Err(LocalityError::Validation(
                "TRM mode requires identical L and H modules".into(),
            ));
        }
        if embedding.dim() != (config.vocab, d) || w_in.dim() != (d, d) {
            return Err(LocalityError::Shape("embedding or input map shape".into()));
        }
        Ok(Self {
            config,
            l,
            h,
            embedding,
            w_in,
        })
    }

    pub fn positions(&self) -> usize {
        self.config.positions
    }

    pub fn dims(&self) -> usize {
        self.config.dims
    }

    /// The same model with the two module slots exchanged.
    pub fn with_swapped_modules(&self) -> Self {
        Self {
            l: self.h.clone(),
            h: self.l.clone(),
            ..self.clone()
        }
    }

    fn act(&self, x: Array2<f64>) -> Array2<f64> {
        match self.config.nonlinearity {
            Nonlinearity::Tanh => x.mapv_into(f64::tanh),
            Nonlinearity::Linear => x,
        }
    }

    /// Derivative of the activation, expressed through its output.
    fn act_grad(&self, out: &Array2<f64>) -> Array2<f64> {
        match self.config.nonlinearity {
            Nonlinearity::Tanh => out.mapv(|y| 1.0 - y * y),
            Nonlinearity::Linear => Array2::ones(out.dim()),
        }
    }

    fn update(&self, m: &ModuleParams, own: &Array2<f64>, cross: &Array2<f64>) -> Array2<f64> {
        let mixed = m.mixing.dot(&(own.dot(&m.w_self) + cross.dot(&m.w_cross)));
        self.act(mixed + &m.bias)
    }

    fn check_tokens(&self, tokens: &[usize]) -> Result<()> {
        if tokens.len() != self.positions() {
            return Err(LocalityError::InvalidParameter(format!(
                "expected {} tokens, got {}",
                self.positions(),
                tokens.len()
            )));
        }
        if let Some(bad) = tokens.iter().find(|&&t| t >= self.config.vocab) {
            return Err(LocalityError::InvalidParameter(format!(
                "token id {bad} outside vocabulary of {}",
                self.config.vocab
            )));
        }
        Ok(())
    }

    fn check_injection(&self, inj: &Injection) -> Result<()> {
        if !self.config.contains(inj.label) {
            return Err(LocalityError::InvalidParameter(format!(
                "injection label {} not in schedule",
                inj.label
            )));
        }
        if inj.position >= self.positions() {
            return Err(LocalityError::InvalidParameter(format!(
                "injection position {} out of range",
                inj.position
            )));
        }
        if inj.delta.len() != self.dims() || inj.delta.iter().any(|x| !x.is_finite()) {
            return Err(LocalityError::InvalidParameter(
                "injection delta must be a finite D-vector".into(),
            ));
        }
        Ok(())
    }

    fn embed(&self, tokens: &[usize]) -> Array2<f64> {
        self.embedding.select(Axis(0), tokens).dot(&self.w_in)
    }

    /// Runs the full schedule and captures every post-update state.
    pub fn forward(&self, tokens: &[usize], injections: &[Injection]) -> Result<Rollout> {
        self.forward_to(tokens, injections, None)
    }

    /// Like [`ToyModel::forward`] but stops right after `stop` is produced.
    pub fn forward_to(
        &self,
        tokens: &[usize],
        injections: &[Injection],
        stop: Option<CycleLabel>,
    ) -> Result<Rollout> {
        self.check_tokens(tokens)?;
        for inj in injections {
            self.check_injection(inj)?;
        }
        let (t, d) = (self.positions(), self.dims());
        let e = self.embed(tokens);
        let mut z_l = Array2::<f64>::zeros((t, d));
        let mut z_h = Array2::<f64>::zeros((t, d));
        let mut states = Vec::new();
        let apply = |label: CycleLabel, z: &mut Array2<f64>| {
            for inj in injections.iter().filter(|i| i.label == label) {
                let mut row = z.row_mut(inj.position);
                for (x, dx) in row.iter_mut().zip(&inj.delta) {
                    *x += dx;
                }
            }
        };
        for label in self.config.labels() {
            match label.level {
                Level::L => {
                    z_l = self.update(&self.l, &z_l, &(&z_h + &e));
                    apply(label, &mut z_l);
                    states.push((label, z_l.clone()));
                }
                Level::H => {
                    z_h = self.update(&self.h, &z_h, &z_l);
                    apply(label, &mut z_h);
                    states.push((label, z_h.clone()));
                }
            }
            if stop == Some(label) {
                break;
            }
        }
        Ok(Rollout { states })
    }

    /// Runs every token sequence and packs the captures as an
    /// [`ActivationTrace`] (32-bit payloads).
    pub fn trace(&self, batch: &[Vec<usize>], injections: &[Injection], task: &str) -> Result<ActivationTrace> {
        let rollouts = batch
            .par_iter()
            .map(|tokens| self.forward(tokens, injections))
            .collect::<Result<Vec<_>>>()?;
        let (t, d) = (self.positions(), self.dims());
        let fields = self
            .config
            .labels()
            .into_iter()
            .enumerate()
            .map(|(k, label)| {
                let mut data = Array3::<f32>::zeros((batch.len(), t, d));
                for (e, r) in rollouts.iter().enumerate() {
                    data.index_axis_mut(Axis(0), e)
                        .assign(&r.states[k].1.mapv(|x| x as f32));
                }
                ActivationField { label, data }
            })
            .collect();
        ActivationTrace::new(
            TraceMeta {
                task: task.to_string(),
                model: self.config.mode.as_str().to_string(),
                schedule: self.config.schedule,
                seed: self.config.seed,
            },
            fields,
        )
    }

    fn check_order(&self, src: CycleLabel, dst: CycleLabel) -> Result<()> {
        for l in [src, dst] {
            if !self.config.contains(l) {
                return Err(LocalityError::InvalidParameter(format!(
                    "label {l} not in schedule"
                )));
            }
        }
        if src >= dst {
            return Err(LocalityError::InvalidParameter(format!(
                "source {src} must precede destination {dst}"
            )));
        }
        Ok(())
    }

    /// `K[u,v] = ‖∂z_dst[u]/∂z_src[v]‖_F` by central differences with step
    /// `eps` per source coordinate, perturbing through the injection path.
    pub fn jacobian_fd(
        &self,
        tokens: &[usize],
        src: CycleLabel,
        dst: CycleLabel,
        eps: f64,
    ) -> Result<Kernel> {
        self.check_order(src, dst)?;
        self.check_tokens(tokens)?;
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(LocalityError::InvalidParameter("eps must be positive".into()));
        }
        let (t, d) = (self.positions(), self.dims());
        let columns = (0..t)
            .into_par_iter()
            .map(|v| -> Result<Vec<f64>> {
                let mut sq = vec![0.0; t];
                for k in 0..d {
                    let mut delta = vec![0.0; d];
                    delta[k] = eps;
                    let plus = self.forward_to(
                        tokens,
                        &[Injection {
                            label: src,
                            position: v,
                            delta: delta.clone(),
                        }],
                        Some(dst),
                    )?;
                    delta[k] = -eps;
                    let minus = self.forward_to(
                        tokens,
                        &[Injection {
                            label: src,
                            position: v,
                            delta,
                        }],
                        Some(dst),
                    )?;
                    let (zp, zm) = (plus.state(dst).expect("dst"), minus.state(dst).expect("dst"));
                    for u in 0..t {
                        for j in 0..d {
                            let g = (zp[[u, j]] - zm[[u, j]]) / (2.0 * eps);
                            sq[u] += g * g;
                        }
                    }
                }
                Ok(sq.into_iter().map(f64::sqrt).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        let mut k = Array2::zeros((t, t));
        for (v, col) in columns.into_iter().enumerate() {
            for (u, x) in col.into_iter().enumerate() {
                k[[u, v]] = x;
            }
        }
        Ok(Kernel::new(k, (0..t).collect(), Some(src), Some(dst)))
    }

    /// Exact kernel by forward-mode propagation of unit tangents through
    /// the clean rollout.
    pub fn jacobian_analytic(
        &self,
        tokens: &[usize],
        src: CycleLabel,
        dst: CycleLabel,
    ) -> Result<Kernel> {
        self.check_order(src, dst)?;
        let clean = self.forward_to(tokens, &[], Some(dst))?;
        let (t, d) = (self.positions(), self.dims());
        let start = clean
            .states
            .iter()
            .position(|(l, _)| *l == src)
            .expect("src in schedule");
        let grads: Vec<Array2<f64>> = clean.states[start + 1..]
            .iter()
            .map(|(_, out)| self.act_grad(out))
            .collect();
        let steps: Vec<CycleLabel> = clean.states[start + 1..].iter().map(|(l, _)| *l).collect();

        let columns: Vec<Vec<f64>> = (0..t)
            .into_par_iter()
            .map(|v| {
                let mut sq = vec![0.0; t];
                for k in 0..d {
                    let mut tl = Array2::<f64>::zeros((t, d));
                    let mut th = Array2::<f64>::zeros((t, d));
                    match src.level {
                        Level::L => tl[[v, k]] = 1.0,
                        Level::H => th[[v, k]] = 1.0,
                    }
                    for (label, g) in steps.iter().zip(&grads) {
                        match label.level {
                            Level::L => {
                                let m = &self.l;
                                tl = g * &m.mixing.dot(&(tl.dot(&m.w_self) + th.dot(&m.w_cross)));
                            }
                            Level::H => {
                                let m = &self.h;
                                th = g * &m.mixing.dot(&(th.dot(&m.w_self) + tl.dot(&m.w_cross)));
                            }
                        }
                    }
                    let out = match dst.level {
                        Level::L => &tl,
                        Level::H => &th,
                    };
                    for (acc, row) in sq.iter_mut().zip(out.rows()) {
                        *acc += row.iter().map(|x| x * x).sum::<f64>();
                    }
                }
                sq.into_iter().map(f64::sqrt).collect()
            })
            .collect();
        let mut kernel = Array2::zeros((t, t));
        for (v, col) in columns.into_iter().enumerate() {
            for (u, x) in col.into_iter().enumerate() {
                kernel[[u, v]] = x;
            }
        }
        Ok(Kernel::new(kernel, (0..t).collect(), Some(src), Some(dst)))
    }

    fn module_tensors(prefix: &str, m: &ModuleParams) -> Vec<Tensor> {
        let (t, d) = (m.mixing.nrows(), m.w_self.nrows());
        vec![
            Tensor::from_f64(&format!("{prefix}_mixing"), &[t, t], m.mixing.iter().copied()),
            Tensor::from_f64(&format!("{prefix}_w_self"), &[d, d], m.w_self.iter().copied()),
            Tensor::from_f64(&format!("{prefix}_w_cross"), &[d, d], m.w_cross.iter().copied()),
            Tensor::from_f64(&format!("{prefix}_bias"), &[d], m.bias.iter().copied()),
        ]
    }

    /// Writes the parameters as 32-bit payloads with the config in the
    /// manifest header.
    pub fn write_params(&self, dir: &Path) -> Result<()> {
        let mut tensors = Self::module_tensors("l", &self.l);
        tensors.extend(Self::module_tensors("h", &self.h));
        let (v, d) = self.embedding.dim();
        tensors.push(Tensor::from_f64("embedding", &[v, d], self.embedding.iter().copied()));
        tensors.push(Tensor::from_f64("w_in", &[d, d], self.w_in.iter().copied()));
        write_bundle(dir, json!({ "config": self.config }), &tensors)
    }

    /// Loads parameters written by [`ToyModel::write_params`]. Values come
    /// back rounded to 32 bits.
    pub fn read_params(dir: &Path) -> Result<Self> {
        let (header, tensors) = read_bundle(dir)?;
        let config: ToyConfig = serde_json::from_value(header["config"].clone())?;
        let mat = |name: &str| -> Result<Array2<f64>> {
            let t = take(&tensors, name)?;
            Array2::from_shape_vec((t.shape[0], t.shape[1]), t.to_f64())
                .map_err(|e| LocalityError::Shape(e.to_string()))
        };
        let module = |p: &str| -> Result<ModuleParams> {
            Ok(ModuleParams {
                mixing: mat(&format!("{p}_mixing"))?,
                w_self: mat(&format!("{p}_w_self"))?,
                w_cross: mat(&format!("{p}_w_cross"))?,
                bias: Array1::from(take(&tensors, &format!("{p}_bias"))?.to_f64()),
            })
        };
        Self::from_parts(config, module("l")?, module("h")?, mat("embedding")?, mat("w_in")?)
    }
}

/// `count` token sequences drawn uniformly from the vocabulary, one
/// counter-based stream per example.
pub fn random_tokens(cfg: &ToyConfig, count: usize, seed: u64) -> Vec<Vec<usize>> {
    use rand::Rng;
    (0..count)
        .map(|e| {
            let mut rng = stream(seed, Domain::Tokens, &[e as u64]);
            (0..cfg.positions)
                .map(|_| rng.random_range(0..cfg.vocab))
                .collect()
        })
        .collect()
}
