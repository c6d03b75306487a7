use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::Serialize;
use serde_json::{json, Map, Value};

use super::config::{CommandKind, JacobianMethod, RunConfig, SaeOptions, SigmaMode};
use super::{usage, CliError};
use crate::error::LocalityError;
use crate::geometry::{
    build_arc_geometry, build_maze_geometry, build_object_geometry, build_sudoku_geometry,
    ArcGrid, Geometry, GeometryKind, MazeInstance, ObjectScene, K_TARGET_DEFAULT,
};
use crate::patching::{
    calibrate_noise, calibrate_noise_snr, channel_reliability, impact_field, locality_csv,
    locality_score, locality_summary, Channel, ChannelKind, Surrogate, zero_ablation_field,
    DEFAULT_TARGET_DROP,
};
use crate::rng::{gaussian_vec, stream, Domain};
use crate::sae::{feature_segment_report, report_csv, train_sae, IdentityHead, SaeConfig};
use crate::stats::{
    bootstrap_ci, mean, select_critical_cycle, BootstrapSpec, DEFAULT_RESAMPLES,
    DEFAULT_THRESHOLD_FRAC,
};
use crate::structural::{
    cell_locality, constraint_mass_fractions, cross_cycle_concentration, granularity,
    segment_kernel, Kernel,
};
use crate::svg::{render_bars, render_heatmap, render_lines, write_svg, Series};
use crate::toymodel::{init_toy_model, random_tokens, MixingSpec, ToyConfig, ToyModel};
use crate::trace::{read_trace, state_delta_curve, write_trace, ActivationTrace, CycleLabel, Level};

type CmdResult<T> = std::result::Result<T, CliError>;

pub const DEFAULT_EXAMPLES: usize = 8;
const DEFAULT_EPS: f64 = 1e-4;
const DEFAULT_FEATURE_DIMS: usize = 8;
const DEFAULT_TOP_K: usize = 30;

struct Out<'a>(&'a Path);

impl Out<'_> {
    fn text(&self, name: &str, text: &str) -> CmdResult<()> {
        let p = self.0.join(name);
        fs::write(&p, text).map_err(|e| LocalityError::io(&p, e))?;
        Ok(())
    }

    fn json<T: Serialize>(&self, name: &str, v: &T) -> CmdResult<()> {
        let mut s = serde_json::to_string_pretty(v).map_err(LocalityError::from)?;
        s.push('\n');
        self.text(name, &s)
    }

    fn svg(&self, name: &str, svg: &str) -> CmdResult<()> {
        write_svg(&self.0.join(name), svg)?;
        Ok(())
    }
}

/// Fills defaults so the manifest records every value the run used.
pub fn resolve(mut cfg: RunConfig) -> CmdResult<RunConfig> {
    if cfg.command.needs_seed() && cfg.seed.is_none() {
        return Err(usage(format!(
            "`{}` needs an explicit --seed",
            cfg.command.as_str()
        )));
    }
    let resamples = || Some(DEFAULT_RESAMPLES);
    match cfg.command {
        CommandKind::GenToy => {
            require(&cfg.model, "--model")?;
            cfg.examples.get_or_insert(DEFAULT_EXAMPLES);
            cfg.task.get_or_insert_with(|| "maze".into());
        }
        CommandKind::Patch => {
            require(&cfg.model, "--model")?;
            exclusive(&cfg)?;
            cfg.examples.get_or_insert(DEFAULT_EXAMPLES);
            cfg.channels
                .get_or_insert_with(|| vec![ChannelKind::WithinL, ChannelKind::WithinH]);
            let mode = *cfg.sigma_mode.get_or_insert(SigmaMode::Selfdrop);
            if mode == SigmaMode::Fixed && cfg.sigma.is_none() {
                return Err(usage("--sigma-mode fixed needs --sigma".into()));
            }
            if mode != SigmaMode::Fixed && cfg.sigma.is_some() {
                return Err(usage("--sigma only applies with --sigma-mode fixed".into()));
            }
            if mode == SigmaMode::Selfdrop {
                cfg.target_drop.get_or_insert(DEFAULT_TARGET_DROP);
            }
            cfg.threshold_frac.get_or_insert(DEFAULT_THRESHOLD_FRAC);
            if cfg.resamples.is_none() {
                cfg.resamples = resamples();
            }
        }
        CommandKind::Jacobian => {
            require(&cfg.model, "--model")?;
            exclusive(&cfg)?;
            cfg.examples.get_or_insert(4);
            cfg.channels
                .get_or_insert_with(|| vec![ChannelKind::WithinL, ChannelKind::WithinH]);
            let method = *cfg.method.get_or_insert(JacobianMethod::Fd);
            if method == JacobianMethod::Fd {
                cfg.eps.get_or_insert(DEFAULT_EPS);
            }
            cfg.threshold_frac.get_or_insert(DEFAULT_THRESHOLD_FRAC);
            if cfg.resamples.is_none() {
                cfg.resamples = resamples();
            }
        }
        CommandKind::Sae => {
            exclusive(&cfg)?;
            if cfg.model.is_some() {
                cfg.examples.get_or_insert(DEFAULT_EXAMPLES);
            }
            let o = cfg.sae.get_or_insert_with(SaeOptions::default);
            let d = SaeConfig::new(0);
            o.features.get_or_insert(d.features);
            o.l1.get_or_insert(d.l1);
            o.learning_rate.get_or_insert(d.learning_rate);
            o.epochs.get_or_insert(d.epochs);
            o.batch_size.get_or_insert(d.batch_size);
            cfg.top_k.get_or_insert(DEFAULT_TOP_K);
        }
        CommandKind::Converge => {
            exclusive(&cfg)?;
            if cfg.model.is_some() {
                if cfg.seed.is_none() {
                    return Err(usage("`converge` from a model needs --seed".into()));
                }
                cfg.examples.get_or_insert(DEFAULT_EXAMPLES);
            }
            cfg.threshold_frac.get_or_insert(DEFAULT_THRESHOLD_FRAC);
            if cfg.resamples.is_none() {
                cfg.resamples = resamples();
            }
        }
        CommandKind::Object3d => {
            require(&cfg.geometry, "--geometry (scene CSV)")?;
            cfg.k_target.get_or_insert(K_TARGET_DEFAULT);
            cfg.surrogate.get_or_insert_with(|| "distance-weighted".into());
            cfg.feature_dims.get_or_insert(DEFAULT_FEATURE_DIMS);
        }
        CommandKind::Report => {
            if cfg.inputs.is_empty() {
                return Err(usage("`report` needs at least one input directory".into()));
            }
        }
    }
    cfg.absolutize()?;
    Ok(cfg)
}

fn require<T>(v: &Option<T>, flag: &str) -> CmdResult<()> {
    if v.is_none() {
        return Err(usage(format!("missing {flag}")));
    }
    Ok(())
}

fn exclusive(cfg: &RunConfig) -> CmdResult<()> {
    match (&cfg.model, &cfg.trace) {
        (Some(_), Some(_)) => Err(usage("give either --model or --trace, not both".into())),
        (None, None) => Err(usage("missing --model or --trace".into())),
        _ => Ok(()),
    }
}

pub fn execute(cfg: &RunConfig, out: &Path) -> CmdResult<()> {
    fs::create_dir_all(out).map_err(|e| LocalityError::io(out, e))?;
    let o = Out(out);
    match cfg.command {
        CommandKind::GenToy => gen_toy(cfg, &o)?,
        CommandKind::Patch => patch(cfg, &o)?,
        CommandKind::Jacobian => jacobian(cfg, &o)?,
        CommandKind::Sae => sae(cfg, &o)?,
        CommandKind::Converge => converge(cfg, &o)?,
        CommandKind::Object3d => object3d(cfg, &o)?,
        CommandKind::Report => report(cfg, &o)?,
    }
    o.json("run.json", cfg)
}

pub fn load_model(path: &Path) -> CmdResult<ToyModel> {
    if path.is_dir() {
        return Ok(ToyModel::read_params(path)?);
    }
    let text = fs::read_to_string(path).map_err(|e| LocalityError::io(path, e))?;
    let cfg: ToyConfig = serde_json::from_str(&text).map_err(LocalityError::from)?;
    Ok(init_toy_model(&cfg)?)
}

fn load_geometry(cfg: &RunConfig, model: Option<&ToyModel>) -> CmdResult<Geometry> {
    let task = cfg.task.as_deref();
    let Some(path) = &cfg.geometry else {
        if task == Some("sudoku") {
            return Ok(build_sudoku_geometry());
        }
        let from_model = model.and_then(|m| {
            [Some(&m.config.mixing_l), m.config.mixing_h.as_ref()]
                .into_iter()
                .flatten()
                .find_map(|s| match s {
                    MixingSpec::Neighborhood { geometry } => Some((**geometry).clone()),
                    _ => None,
                })
        });
        return from_model.ok_or_else(|| usage("missing --geometry".into()));
    };
    let text = fs::read_to_string(path).map_err(|e| LocalityError::io(path, e))?;
    if let Ok(g) = Geometry::from_json(&text) {
        return Ok(g);
    }
    match task {
        Some("maze") => Ok(build_maze_geometry(&MazeInstance::from_text(&text)?)?),
        Some("sudoku") => Ok(build_sudoku_geometry()),
        Some("arc") => Ok(build_arc_geometry(&ArcGrid::from_json(&text)?)?.geometry),
        Some("object3d") => {
            let scene = ObjectScene::from_csv(&text)?;
            Ok(build_object_geometry(&scene, cfg.k_target.unwrap_or(K_TARGET_DEFAULT))?)
        }
        _ => Err(usage(format!(
            "{} is not a geometry document; set --task to parse it as a task instance",
            path.display()
        ))),
    }
}

fn batch(cfg: &RunConfig, model: &ToyModel) -> Vec<Vec<usize>> {
    random_tokens(&model.config, cfg.examples.expect("resolved"), cfg.seed.expect("resolved"))
}

fn bootstrap(cfg: &RunConfig) -> BootstrapSpec {
    BootstrapSpec {
        resamples: cfg.resamples.unwrap_or(DEFAULT_RESAMPLES),
        ..BootstrapSpec::new(cfg.seed.unwrap_or(0))
    }
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

/// The configured cycle, or the one where the H-state delta curve settles.
fn analysis_cycle(cfg: &RunConfig, trace: &ActivationTrace) -> CmdResult<(CycleLabel, Value)> {
    if let Some(c) = &cfg.cycle {
        let label = CycleLabel::parse_cycle(c, Level::H)?;
        return Ok((label, json!({ "cycle": label.cycle(), "source": "config" })));
    }
    let curve = state_delta_curve(trace, Level::H)?;
    let crit = select_critical_cycle(&curve, cfg.threshold_frac.unwrap_or(DEFAULT_THRESHOLD_FRAC))?;
    Ok((
        crit.label,
        json!({
            "cycle": crit.label.cycle(),
            "source": "convergence",
            "converged": crit.converged,
            "threshold_frac": crit.threshold_frac,
        }),
    ))
}

fn gen_toy(cfg: &RunConfig, o: &Out) -> CmdResult<()> {
    let model = load_model(cfg.model.as_ref().expect("resolved"))?;
    let tokens = batch(cfg, &model);
    let trace = model.trace(&tokens, &[], cfg.task.as_deref().unwrap_or("maze"))?;
    write_trace(&trace, &o.0.join("trace"))?;
    model.write_params(&o.0.join("params"))?;
    o.json("tokens.json", &tokens)
}

fn patch(cfg: &RunConfig, o: &Out) -> CmdResult<()> {
    let model = load_model(cfg.model.as_ref().expect("resolved"))?;
    let g = load_geometry(cfg, Some(&model))?;
    let tokens = batch(cfg, &model);
    let seed = cfg.seed.expect("resolved");
    let clean = model.trace(&tokens, &[], cfg.task.as_deref().unwrap_or("toy"))?;
    let (cycle, cycle_info) = analysis_cycle(cfg, &clean)?;
    let probe = cfg.probe.unwrap_or(g.sites()[g.len() / 2]);
    let spec = bootstrap(cfg);
    let mut results = Vec::new();
    let mut calib = Map::new();
    let mut rel = Vec::new();
    for &kind in cfg.channels.as_deref().expect("resolved") {
        let channel = Channel::at_cycle(kind, &model.config, cycle)?;
        let (sigma, info) = match cfg.sigma_mode.expect("resolved") {
            SigmaMode::Fixed => {
                let s = cfg.sigma.expect("resolved");
                (s, json!({ "mode": "fixed", "sigma": s }))
            }
            SigmaMode::Selfdrop => {
                let target = cfg.target_drop.expect("resolved");
                let c = calibrate_noise(&model, &tokens, channel, probe, target, seed)?;
                (
                    c.sigma,
                    json!({ "mode": "selfdrop", "sigma": c.sigma, "target": target,
                            "achieved": c.achieved, "iterations": c.iterations, "probe": probe }),
                )
            }
            SigmaMode::Snr => {
                let field = clean
                    .field(channel.src)
                    .ok_or_else(|| LocalityError::InvalidParameter(format!("no field {}", channel.src)))?;
                let s = calibrate_noise_snr(field, Some(probe))?;
                (s, json!({ "mode": "snr", "sigma": s, "probe": probe }))
            }
        };
        calib.insert(channel.name(), info);
        let field = impact_field(&model, &tokens, channel, sigma, seed, &g)?;
        results.push(locality_score(&field, Some(&spec))?);
        rel.push(channel_reliability(&field)?);
        let title = format!("{} impact {} -> {}", channel.name(), channel.src, channel.dst);
        o.svg(
            &format!("heatmap_{}.svg", file_stem(&channel.name())),
            &render_heatmap(&field.mean_matrix(), Some(&g), &title)?,
        )?;
    }
    o.text("locality.csv", &locality_csv(&results)?)?;
    o.json("summary.json", &locality_summary(&results))?;
    o.json("calibration.json", &json!({ "cycle": cycle_info, "channels": calib }))?;
    o.json("reliability.json", &rel)
}

#[derive(Serialize)]
struct Scored {
    locality: f64,
    ci_lo: Option<f64>,
    ci_hi: Option<f64>,
    n: usize,
}

fn score(values: &[f64], spec: &BootstrapSpec) -> CmdResult<Scored> {
    let ci = if values.len() >= 2 {
        Some(bootstrap_ci(values, spec)?)
    } else {
        None
    };
    Ok(Scored {
        locality: mean(values),
        ci_lo: ci.map(|c| c.lo),
        ci_hi: ci.map(|c| c.hi),
        n: values.len(),
    })
}

fn mean_kernel(ks: &[Kernel]) -> Kernel {
    let mut acc = Array2::<f64>::zeros(ks[0].k.dim());
    for k in ks {
        acc += &k.k;
    }
    Kernel::new(acc / ks.len() as f64, ks[0].sites.clone(), ks[0].src, ks[0].dst)
}

fn kernels(
    cfg: &RunConfig,
    model: &ToyModel,
    tokens: &[Vec<usize>],
    g: &Geometry,
    src: CycleLabel,
    dst: CycleLabel,
) -> CmdResult<Vec<Kernel>> {
    tokens
        .iter()
        .map(|t| {
            let k = match cfg.method.expect("resolved") {
                JacobianMethod::Fd => model.jacobian_fd(t, src, dst, cfg.eps.expect("resolved"))?,
                JacobianMethod::Analytic => model.jacobian_analytic(t, src, dst)?,
            };
            Ok(k.restrict(g)?)
        })
        .collect()
}

fn jacobian(cfg: &RunConfig, o: &Out) -> CmdResult<()> {
    let model = load_model(cfg.model.as_ref().expect("resolved"))?;
    let g = load_geometry(cfg, Some(&model))?;
    let tokens = batch(cfg, &model);
    let clean = model.trace(&tokens, &[], cfg.task.as_deref().unwrap_or("toy"))?;
    let (cycle, cycle_info) = analysis_cycle(cfg, &clean)?;
    let spec = bootstrap(cfg);
    let mut summary = Map::new();
    summary.insert("cycle".into(), cycle_info);
    for &kind in cfg.channels.as_deref().expect("resolved") {
        let channel = Channel::at_cycle(kind, &model.config, cycle)?;
        let ks = kernels(cfg, &model, &tokens, &g, channel.src, channel.dst)?;
        let per_example: Vec<f64> = ks.iter().map(cell_locality).collect::<Result<_, _>>()?;
        let avg = mean_kernel(&ks);
        let stem = file_stem(&channel.name());
        o.text(&format!("kernel_{stem}.csv"), &avg.to_csv())?;
        let mut entry = serde_json::to_value(score(&per_example, &spec)?).map_err(LocalityError::from)?;
        let e = entry.as_object_mut().expect("object");
        e.insert("src".into(), json!(channel.src));
        e.insert("dst".into(), json!(channel.dst));
        if g.segments().len() >= 2 {
            o.text(&format!("segments_{stem}.csv"), &segment_kernel(&avg, &g)?.to_csv())?;
            match granularity(&avg, &g) {
                Ok(gr) => {
                    e.insert("r_seg".into(), json!(gr.r_seg));
                    e.insert("granularity".into(), json!(gr.score));
                }
                Err(LocalityError::InfiniteRatio { same_mean }) => {
                    e.insert("r_seg".into(), json!("inf"));
                    e.insert("granularity".into(), json!("inf"));
                    e.insert("same_segment_mean".into(), json!(same_mean));
                }
                Err(err) => return Err(err.into()),
            }
        }
        if g.kind() == GeometryKind::Sudoku {
            let cf = constraint_mass_fractions(&avg, Some(&spec.with_unit(crate::stats::ResampleUnit::Pair)))?;
            e.insert("constraint_fractions".into(), json!(cf));
        }
        let title = format!("{} kernel {} -> {}", channel.name(), channel.src, channel.dst);
        o.svg(&format!("kernel_{stem}.svg"), &render_heatmap(&avg.k, Some(&g), &title)?)?;
        summary.insert(channel.name(), entry);
    }
    for level in [Level::H, Level::L] {
        let labels: Vec<CycleLabel> = model
            .config
            .labels()
            .into_iter()
            .filter(|l| l.level == level)
            .collect();
        for w in labels.windows(2) {
            let ks = kernels(cfg, &model, &tokens, &g, w[0], w[1])?;
            let vals: Vec<f64> = ks
                .iter()
                .map(cross_cycle_concentration)
                .collect::<Result<_, _>>()?;
            summary.insert(
                format!("{}->{}", w[0], w[1]),
                serde_json::to_value(score(&vals, &spec)?).map_err(LocalityError::from)?,
            );
        }
    }
    o.json("structural.json", &summary)
}

fn trace_input(cfg: &RunConfig) -> CmdResult<(ActivationTrace, Option<ToyModel>)> {
    if let Some(p) = &cfg.trace {
        return Ok((read_trace(p)?, None));
    }
    let model = load_model(cfg.model.as_ref().expect("resolved"))?;
    let tokens = batch(cfg, &model);
    let trace = model.trace(&tokens, &[], cfg.task.as_deref().unwrap_or("toy"))?;
    Ok((trace, Some(model)))
}

fn sae(cfg: &RunConfig, o: &Out) -> CmdResult<()> {
    let (trace, model) = trace_input(cfg)?;
    let g = load_geometry(cfg, model.as_ref())?;
    let label = match cfg.label {
        Some(l) => l,
        None => trace
            .level_fields(Level::H)
            .last()
            .map(|f| f.label)
            .ok_or_else(|| LocalityError::InsufficientData("trace has no H fields".into()))?,
    };
    let field = trace
        .field(label)
        .ok_or_else(|| LocalityError::InvalidParameter(format!("trace has no field {label}")))?;
    let opts = cfg.sae.as_ref().expect("resolved");
    let sc = SaeConfig {
        d_in: field.dims(),
        features: opts.features.expect("resolved"),
        l1: opts.l1.expect("resolved"),
        learning_rate: opts.learning_rate.expect("resolved"),
        epochs: opts.epochs.expect("resolved"),
        batch_size: opts.batch_size.expect("resolved"),
        seed: cfg.seed.expect("resolved"),
    };
    let trained = train_sae(field, &sc)?;
    trained.model.write(&o.0.join("sae"))?;
    let mut losses = String::from("epoch,total,reconstruction,sparsity\n");
    for (i, l) in trained.epoch_losses.iter().enumerate() {
        losses.push_str(&format!("{i},{},{},{}\n", l.total, l.reconstruction, l.sparsity));
    }
    o.text("losses.csv", &losses)?;
    let top_k = cfg.top_k.expect("resolved").min(sc.features);
    let reports = feature_segment_report(&trained.model, field, &IdentityHead, &g, top_k)?;
    o.text("features.csv", &report_csv(&reports, &g)?)?;
    o.json(
        "sae_summary.json",
        &json!({
            "label": label,
            "final_loss": trained.epoch_losses.last(),
            "top_features": reports.iter().map(|r| r.feature).collect::<Vec<_>>(),
            "mean_locality": mean(&reports.iter().filter_map(|r| r.locality).collect::<Vec<_>>()),
        }),
    )
}

fn converge(cfg: &RunConfig, o: &Out) -> CmdResult<()> {
    let (trace, _) = trace_input(cfg)?;
    let spec = bootstrap(cfg);
    let frac = cfg.threshold_frac.expect("resolved");
    let mut csv = String::from("level,step,label,delta,ci_lo,ci_hi\n");
    let mut critical = Map::new();
    let mut series_data = Vec::new();
    for level in [Level::L, Level::H] {
        let curve = state_delta_curve(&trace, level)?;
        for (s, (label, d)) in curve.labels.iter().zip(&curve.deltas).enumerate() {
            let per: Vec<f64> = curve.per_example.iter().map(|r| r[s]).collect();
            let (lo, hi) = if per.len() >= 2 {
                let ci = bootstrap_ci(&per, &spec)?;
                (ci.lo.to_string(), ci.hi.to_string())
            } else {
                (String::new(), String::new())
            };
            csv.push_str(&format!("{},{s},{label},{d},{lo},{hi}\n", level.as_str()));
        }
        critical.insert(
            level.as_str().into(),
            serde_json::to_value(select_critical_cycle(&curve, frac)?).map_err(LocalityError::from)?,
        );
        series_data.push((level, curve));
    }
    o.text("delta_curves.csv", &csv)?;
    o.json("critical.json", &critical)?;
    let ticks: Vec<String> = series_data[0].1.labels.iter().map(|l| l.cycle()).collect();
    let same_len = series_data.iter().all(|(_, c)| c.deltas.len() == ticks.len());
    if same_len {
        let series: Vec<Series> = series_data
            .iter()
            .map(|(l, c)| Series {
                name: l.as_str(),
                values: &c.deltas,
            })
            .collect();
        o.svg("convergence.svg", &render_lines("state change per step", &ticks, &series)?)?;
    }
    Ok(())
}

fn object3d(cfg: &RunConfig, o: &Out) -> CmdResult<()> {
    let path = cfg.geometry.as_ref().expect("resolved");
    let scene = ObjectScene::load(path)?;
    let k = cfg.k_target.expect("resolved");
    let g = build_object_geometry(&scene, k)?;
    let surrogate: Surrogate = cfg.surrogate.as_deref().expect("resolved").parse()?;
    let dims = cfg.feature_dims.expect("resolved");
    let mut rng = stream(cfg.seed.expect("resolved"), Domain::Features, &[0]);
    let features = Array2::from_shape_vec((scene.len(), dims), gaussian_vec(&mut rng, scene.len() * dims))
        .expect("shape matches");
    let w = surrogate.weights(&scene);
    let za = zero_ablation_field(&features, |x| Ok(w.dot(x)), &g)?;
    let mut csv = String::from("object,near_frac,mass,neighbors\n");
    let a = &za.field.per_example[0];
    for (i, obj) in scene.objects().iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            obj.id,
            za.near_frac[i].map_or(String::new(), |x| x.to_string()),
            a.column(i).sum(),
            g.neighborhood(i).len() - 1
        ));
    }
    o.text("near_frac.csv", &csv)?;
    let kept: Vec<f64> = za.near_frac.iter().flatten().copied().collect();
    let radius = match g.params() {
        crate::geometry::GeometryParams::Object3d { radius, .. } => *radius,
        _ => f64::NAN,
    };
    o.json(
        "summary.json",
        &json!({ "zero-ablation": {
            "mean": mean(&kept), "baseline": za.baseline, "n": kept.len(),
            "radius": radius, "k_target": k, "surrogate": cfg.surrogate,
        }}),
    )?;
    o.svg("heatmap.svg", &render_heatmap(a, Some(&g), "zero-ablation impact")?)
}

fn report(cfg: &RunConfig, o: &Out) -> CmdResult<()> {
    let mut merged = Map::new();
    for dir in &cfg.inputs {
        let mut entries: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| LocalityError::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .filter(|p| p.file_name().is_some_and(|n| n != "run.json"))
            .collect();
        entries.sort();
        let mut files = Map::new();
        for p in entries {
            let text = fs::read_to_string(&p).map_err(|e| LocalityError::io(&p, e))?;
            let v: Value = serde_json::from_str(&text).map_err(LocalityError::from)?;
            let stem = p.file_stem().expect("file").to_string_lossy().into_owned();
            files.insert(stem, v);
        }
        let name = dir
            .file_name()
            .map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned());
        let key = if merged.contains_key(&name) {
            dir.display().to_string()
        } else {
            name
        };
        merged.insert(key, Value::Object(files));
    }
    for (run, files) in &merged {
        let Some(summary) = files.get("summary").and_then(Value::as_object) else {
            continue;
        };
        let mut labels = Vec::new();
        let mut values = Vec::new();
        let mut baseline = None;
        for (ch, v) in summary {
            if let Some(m) = v.get("mean").and_then(Value::as_f64) {
                labels.push(ch.clone());
                values.push(m);
                baseline = baseline.or(v.get("baseline").and_then(Value::as_f64));
            }
        }
        if !labels.is_empty() {
            let svg = render_bars(&format!("{run} locality"), &labels, &values, baseline)?;
            o.svg(&format!("locality_{}.svg", file_stem(run)), &svg)?;
        }
    }
    o.json("report.json", &Value::Object(merged))
}
