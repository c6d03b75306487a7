//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the lines are always
//! printed; the process exits nonzero when any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::Rng;

use locality::geometry::{
    baseline_local_fraction, build_arc_geometry, build_maze_geometry, build_object_geometry,
    build_sudoku_geometry, classify_sudoku_pair, ArcGrid, Geometry, MazeInstance,
    ObjectScene, SceneObject,
};
use locality::patching::{
    calibrate_noise, impact_field, locality_score, self_drop, zero_ablation_field, Channel,
    ChannelKind, ImpactField, Surrogate,
};
use locality::rng::{gaussian_vec, stream, Domain};
use locality::sae::{train_sae_samples, SaeConfig};
use locality::stats::{bootstrap_ci, BootstrapSpec};
use locality::structural::{constraint_mass_fractions, granularity, Kernel};
use locality::toymodel::{
    init_toy_model, random_tokens, MixingSpec, Mode, Nonlinearity, ToyConfig, ToyModel,
};
use locality::trace::CycleLabel;

use common::{
    fixture_config, fixtures, maze25, rel_diff, scene10, FIXTURE_EXAMPLES, FIXTURE_TOKEN_SEED,
};

type Outcome = Result<String, String>;

/// Name, runtime bound and check of one criterion.
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn label(s: &str) -> CycleLabel {
    s.parse().unwrap()
}

fn c1_sudoku_baseline() -> Outcome {
    let b = baseline_local_fraction(&build_sudoku_geometry());
    check(
        b == 9.0 / 81.0 && format!("{b:.3}") == "0.111",
        format!("baseline = {b}"),
    )
}

fn c2_constraint_baseline() -> Outcome {
    let mut per_cell = [0usize; 4];
    let mut ok_counts = true;
    for i in 0..81 {
        let mut counts = [0usize; 4];
        for j in (0..81).filter(|&j| j != i) {
            counts[classify_sudoku_pair(i, j).unwrap().index()] += 1;
        }
        ok_counts &= counts == [8, 6, 6, 60];
        per_cell = counts;
    }
    let mut k = Array2::<f64>::ones((81, 81));
    for i in 0..81 {
        k[[i, i]] = 0.0;
    }
    let g = build_sudoku_geometry();
    let f = constraint_mass_fractions(&Kernel::over(k, &g).unwrap(), None).unwrap();
    check(
        ok_counts && f.fractions == [0.100, 0.075, 0.075, 0.750],
        format!("partners {per_cell:?}, fractions {:?}", f.fractions),
    )
}

fn random_geometry(kind: usize, rng: &mut impl Rng) -> Geometry {
    match kind {
        0 => {
            let (w, h) = (rng.random_range(1..7), rng.random_range(1..7));
            let full = MazeInstance::serpentine(w, h).unwrap();
            let len = rng.random_range(1..=w * h);
            let inst = MazeInstance::new(w, h, vec![true; w * h], full.path[..len].to_vec()).unwrap();
            build_maze_geometry(&inst).unwrap()
        }
        1 => build_sudoku_geometry(),
        2 => loop {
            let (h, w) = (rng.random_range(1..9), rng.random_range(1..9));
            let rows = (0..h)
                .map(|_| (0..w).map(|_| rng.random_range(0..4)).collect())
                .collect();
            if let Ok(a) = build_arc_geometry(&ArcGrid::new(rows).unwrap()) {
                break a.geometry;
            }
        },
        _ => {
            let n = rng.random_range(3..13);
            let objects = (0..n)
                .map(|i| SceneObject {
                    id: format!("obj{i}"),
                    position: [rng.random(), rng.random(), rng.random()],
                })
                .collect();
            let scene = ObjectScene::new(objects).unwrap();
            build_object_geometry(&scene, rng.random_range(1..n)).unwrap()
        }
    }
}

/// Direct double loop over `(u, v)` with membership looked up by site id.
fn naive_locality(a: &Array2<f64>, g: &Geometry) -> (Vec<Option<f64>>, Option<f64>) {
    let p = g.len();
    let mut per = Vec::with_capacity(p);
    for v in 0..p {
        let (mut near, mut total) = (0.0, 0.0);
        for u in 0..p {
            total += a[[u, v]];
            if g.neighborhood(v).contains(&g.sites()[u]) {
                near += a[[u, v]];
            }
        }
        per.push((total > 0.0).then(|| near / total));
    }
    let kept: Vec<f64> = per.iter().flatten().copied().collect();
    let mean = (!kept.is_empty()).then(|| kept.iter().sum::<f64>() / kept.len() as f64);
    (per, mean)
}

fn c3_locality_oracle() -> Outcome {
    let mut rng = stream(3, Domain::Synthetic, &[0]);
    let mut worst: f64 = 0.0;
    let mut degenerate = 0;
    for trial in 0..1000 {
        let g = random_geometry(trial % 4, &mut rng);
        let p = g.len();
        let mut a = Array2::from_shape_fn((p, p), |_| {
            if rng.random_bool(0.2) {
                0.0
            } else {
                rng.random::<f64>()
            }
        });
        for v in 0..p {
            if rng.random_bool(0.1) {
                a.column_mut(v).fill(0.0);
            }
        }
        let (per, mean) = naive_locality(&a, &g);
        let field = ImpactField::from_matrices("oracle", g, vec![a]).unwrap();
        match (locality_score(&field, None), mean) {
            (Ok(r), Some(m)) => {
                for (x, y) in r.per_source.iter().zip(&per) {
                    match (x, y) {
                        (Some(x), Some(y)) => worst = worst.max((x - y).abs()),
                        (None, None) => {}
                        _ => return Err(format!("exclusion mismatch in trial {trial}")),
                    }
                }
                worst = worst.max((r.mean - m).abs());
            }
            (Err(_), None) => degenerate += 1,
            _ => return Err(format!("degenerate mismatch in trial {trial}")),
        }
    }
    check(
        worst <= 1e-12,
        format!("1000 instances, max |diff| = {worst:.2e}, {degenerate} all-excluded"),
    )
}

fn c4_jacobian() -> Outcome {
    // One L step of a linear model reading z_H + e through W_cross = I.
    let (t, d) = (7, 5);
    let cfg = ToyConfig {
        positions: t,
        dims: d,
        schedule: [1, 2],
        mode: Mode::Hrm,
        mixing_l: MixingSpec::Uniform,
        mixing_h: Some(MixingSpec::DenseRandom),
        nonlinearity: Nonlinearity::Linear,
        vocab: 4,
        seed: 5,
    };
    let base = init_toy_model(&cfg).unwrap();
    let mut l = base.l.clone();
    l.w_self.fill(0.0);
    l.w_cross = Array2::eye(d);
    let m = ToyModel::from_parts(cfg.clone(), l, base.h.clone(), base.embedding.clone(), base.w_in.clone())
        .unwrap();
    let tokens = vec![1, 0, 3, 2, 0, 1, 2];
    let fd = m
        .jacobian_fd(&tokens, label("H0L0/H"), label("H0L1/L"), 1e-4)
        .unwrap();
    let closed = Array2::from_elem((t, t), (d as f64).sqrt() / t as f64);
    let e_closed = rel_diff(&fd.k, &closed);

    // Full schedule of a random linear model against tangent propagation.
    let lin = ToyConfig {
        schedule: [2, 2],
        mixing_l: MixingSpec::DenseRandom,
        ..cfg
    };
    let lm = init_toy_model(&lin).unwrap();
    let fd = lm.jacobian_fd(&tokens, label("H0L0/L"), label("H1L1/H"), 1e-4).unwrap();
    let an = lm.jacobian_analytic(&tokens, label("H0L0/L"), label("H1L1/H")).unwrap();
    let e_lin = rel_diff(&fd.k, &an.k);

    let fm = init_toy_model(&fixture_config()).unwrap();
    let tok = &random_tokens(&fm.config, 1, FIXTURE_TOKEN_SEED)[0];
    let mut e_tanh: f64 = 0.0;
    for kind in [ChannelKind::WithinL, ChannelKind::WithinH, ChannelKind::CrossHH] {
        let ch = Channel::at_cycle(kind, &fm.config, label("H1L1/H")).unwrap();
        let a = fm.jacobian_fd(tok, ch.src, ch.dst, 1e-3).unwrap();
        let b = fm.jacobian_fd(tok, ch.src, ch.dst, 1e-4).unwrap();
        e_tanh = e_tanh.max(rel_diff(&a.k, &b.k));
    }
    check(
        e_closed <= 1e-6 && e_lin <= 1e-6 && e_tanh <= 1e-5,
        format!(
            "closed-form rel {e_closed:.2e}, linear FD vs analytic {e_lin:.2e}, tanh eps 1e-3 vs 1e-4 {e_tanh:.2e}"
        ),
    )
}

fn planted_config() -> ToyConfig {
    ToyConfig {
        positions: 25,
        dims: 16,
        schedule: [2, 2],
        mode: Mode::Hrm,
        mixing_l: MixingSpec::Uniform,
        mixing_h: Some(MixingSpec::Diagonal),
        nonlinearity: Nonlinearity::Tanh,
        vocab: 8,
        seed: 2024,
    }
}

fn c5_planted() -> Outcome {
    let g = maze25();
    let model = init_toy_model(&planted_config()).unwrap();
    let tokens = random_tokens(&model.config, 20, 99);
    let spec = BootstrapSpec::new(99);
    let mut means = BTreeMap::new();
    for kind in [ChannelKind::WithinL, ChannelKind::WithinH] {
        let ch = Channel::at_cycle(kind, &model.config, label("H1L1/H")).unwrap();
        let cal = calibrate_noise(&model, &tokens, ch, 12, 0.30, 99).map_err(|e| e.to_string())?;
        let field = impact_field(&model, &tokens, ch, cal.sigma, 99, &g).unwrap();
        let r = locality_score(&field, Some(&spec)).unwrap();
        means.insert(kind.as_str(), (r.mean, r.baseline, cal.sigma));
    }
    let (h, base, _) = means["within-H"];
    let (l, _, _) = means["within-L"];
    check(
        h >= 0.9 && (l - base).abs() <= 0.05,
        format!("within-H {h:.4}, within-L {l:.4}, baseline {base:.4}"),
    )
}

fn c6_calibration() -> Outcome {
    let model = init_toy_model(&fixture_config()).unwrap();
    let tokens = random_tokens(&model.config, FIXTURE_EXAMPLES, FIXTURE_TOKEN_SEED);
    let ch = Channel::at_cycle(ChannelKind::WithinH, &model.config, label("H1L1/H")).unwrap();
    let cal = calibrate_noise(&model, &tokens, ch, 12, 0.30, 7).map_err(|e| e.to_string())?;
    let again = self_drop(&model, &tokens, ch, 12, cal.sigma, 7).unwrap();
    check(
        (0.28..=0.32).contains(&cal.achieved) && again == cal.achieved,
        format!(
            "sigma {:.4e}, self-drop {:.4} after {} steps",
            cal.sigma, cal.achieved, cal.iterations
        ),
    )
}

fn c7_granularity() -> Outcome {
    let k = ndarray::array![
        [1.0, 1.0, 0.5, 0.5],
        [1.0, 1.0, 0.5, 0.5],
        [0.5, 0.5, 1.0, 1.0],
        [0.5, 0.5, 1.0, 1.0]
    ];
    let arc = ArcGrid::new(vec![vec![1, 1, 2, 2]]).unwrap();
    let g = build_arc_geometry(&arc).unwrap().geometry;
    let gr = granularity(&Kernel::over(k, &g).unwrap(), &g).unwrap();
    let mut rng = stream(7, Domain::Synthetic, &[7]);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let k = Array2::from_shape_fn((4, 4), |_| rng.random::<f64>() + 1e-3);
        let c = 10f64.powf(rng.random_range(-3.0..3.0));
        let a = granularity(&Kernel::over(k.clone(), &g).unwrap(), &g).unwrap();
        let b = granularity(&Kernel::over(k * c, &g).unwrap(), &g).unwrap();
        worst = worst.max((a.score - b.score).abs());
    }
    check(
        gr.score == 1.5 && gr.r_seg == 2.0 && (gr.cell_locality - 1.0 / 3.0).abs() < 1e-15 && worst <= 1e-12,
        format!(
            "g = {}, r_seg = {}, cell locality = {:.6}, scale drift {worst:.2e}",
            gr.score, gr.r_seg, gr.cell_locality
        ),
    )
}

fn c8_sae() -> Outcome {
    let (d_in, features, atoms, n) = (32, 64, 20, 2000);
    let mut rng = stream(8, Domain::Synthetic, &[0]);
    let mut dict = Array2::from_shape_vec((atoms, d_in), gaussian_vec(&mut rng, atoms * d_in)).unwrap();
    for mut row in dict.rows_mut() {
        let norm = row.dot(&row).sqrt();
        row /= norm;
    }
    let mut x = Array2::<f64>::zeros((n, d_in));
    for i in 0..n {
        let k = rng.random_range(0..atoms);
        let c: f64 = rng.random_range(0.5..1.5);
        x.row_mut(i).scaled_add(c, &dict.row(k));
    }
    let cfg = SaeConfig {
        d_in,
        features,
        l1: 0.05,
        learning_rate: 0.2,
        epochs: 200,
        batch_size: 32,
        ..SaeConfig::new(8)
    };
    let out = train_sae_samples(&x, &cfg).map_err(|e| e.to_string())?;
    let mut used = vec![false; features];
    let mut matched = 0;
    for k in 0..atoms {
        let truth = dict.row(k);
        let best = (0..features)
            .filter(|&f| !used[f])
            .map(|f| {
                let col = out.model.w_dec.row(f);
                let cos = col.dot(&truth) / col.dot(&col).sqrt().max(1e-300);
                (f, cos.abs())
            })
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if best.1 >= 0.9 {
            used[best.0] = true;
            matched += 1;
        }
    }
    let losses: Vec<f64> = out.epoch_losses.iter().map(|l| l.total).collect();
    let monotone = losses.windows(2).all(|w| w[1] <= w[0] * 1.01);
    check(
        matched >= 16 && monotone,
        format!(
            "{matched}/20 matched at |cos| >= 0.9, loss {:.4e} -> {:.4e}, non-increasing within 1%: {monotone}",
            losses[0],
            losses[losses.len() - 1]
        ),
    )
}

fn c9_coverage() -> Outcome {
    let trials = 1000;
    let mut covered = 0;
    for t in 0..trials {
        let mut rng = stream(9, Domain::Synthetic, &[t]);
        let xs = gaussian_vec(&mut rng, 50);
        let ci = bootstrap_ci(&xs, &BootstrapSpec::new(1000 + t)).unwrap();
        if ci.lo <= 0.0 && 0.0 <= ci.hi {
            covered += 1;
        }
    }
    let rate = covered as f64 / trials as f64;
    check(
        (0.92..=0.98).contains(&rate),
        format!("coverage {rate:.3} over {trials} trials"),
    )
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_locality"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "`locality {}` failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

fn dir_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn c10_replay() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let fx = fixtures();
    let model = fx.join("toy_maze_hrm.json");
    let trace = fx.join("toy_maze_hrm.trace");
    let scene = fx.join("scene10.csv");
    let maze = fx.join("maze25.geometry.json");
    let (model, trace, scene, maze) = (
        model.to_str().unwrap(),
        trace.to_str().unwrap(),
        scene.to_str().unwrap(),
        maze.to_str().unwrap(),
    );
    let runs: Vec<(&str, Vec<&str>)> = vec![
        ("gen-toy", vec!["--model", model, "--seed", "42", "--examples", "4"]),
        (
            "patch",
            vec!["--model", model, "--seed", "3", "--examples", "4", "--channels", "within-L,within-H,cross-HH", "--resamples", "200"],
        ),
        ("jacobian", vec!["--model", model, "--seed", "3", "--examples", "2", "--cycle", "H1L1", "--resamples", "200"]),
        ("sae", vec!["--trace", trace, "--geometry", maze, "--seed", "5", "--features", "32", "--epochs", "20", "--batch-size", "20", "--top-k", "5"]),
        ("converge", vec!["--trace", trace, "--resamples", "200", "--seed", "1"]),
        ("object3d", vec!["--geometry", scene, "--seed", "11"]),
    ];
    let mut names = Vec::new();
    for (cmd, args) in &runs {
        let a = root.join(format!("{cmd}-a"));
        let mut full = vec![*cmd, "--out", a.to_str().unwrap(), "--workers", "1"];
        full.extend(args.iter().copied());
        run_cli(&full)?;
        names.push(a);
    }
    let report_a = root.join("report-a");
    let mut rep = vec!["report", "--out", report_a.to_str().unwrap(), "--workers", "2"];
    rep.extend(names.iter().map(|p| p.to_str().unwrap()));
    run_cli(&rep)?;
    names.push(report_a);

    let mut compared = 0;
    for a in &names {
        let b = a.with_file_name(a.file_name().unwrap().to_str().unwrap().replace("-a", "-b"));
        let manifest = a.join("run.json");
        run_cli(&[
            "replay",
            manifest.to_str().unwrap(),
            "--out",
            b.to_str().unwrap(),
            "--workers",
            "4",
        ])?;
        let (fa, fb) = (dir_files(a), dir_files(&b));
        if fa != fb {
            let diff: Vec<&String> = fa
                .keys()
                .filter(|k| fa.get(*k) != fb.get(*k))
                .collect();
            return Err(format!("{} differs on replay: {diff:?}", a.display()));
        }
        compared += fa.len();
    }
    check(
        compared > 0,
        format!("{} commands, {compared} files byte-identical on replay with 4 workers", names.len()),
    )
}

fn c11_object() -> Outcome {
    let scene = scene10();
    let g = build_object_geometry(&scene, 7).unwrap();
    let n = scene.len();
    let mut rng = stream(11, Domain::Features, &[0]);
    let x = Array2::from_shape_vec((n, 6), gaussian_vec(&mut rng, n * 6)).unwrap();

    let w = Surrogate::DistanceWeighted.weights(&scene);
    let za = zero_ablation_field(&x, |f| Ok(w.dot(f)), &g).unwrap();
    // Brute force: re-evaluate exp(-dist) pooling by explicit loops.
    let pool = |f: &Array2<f64>| -> Array2<f64> {
        Array2::from_shape_fn((n, 6), |(u, j)| {
            let z: f64 = (0..n).map(|w| (-scene.distance(u, w)).exp()).sum();
            (0..n).map(|w| (-scene.distance(u, w)).exp() / z * f[[w, j]]).sum()
        })
    };
    let clean = pool(&x);
    let mut worst: f64 = 0.0;
    for v in 0..n {
        let mut xa = x.clone();
        xa.row_mut(v).fill(0.0);
        let out = pool(&xa);
        let impact: Vec<f64> = (0..n)
            .map(|u| (0..6).map(|j| (out[[u, j]] - clean[[u, j]]).powi(2)).sum::<f64>().sqrt())
            .collect();
        let near: f64 = g.neighborhood(v).iter().map(|&u| impact[u]).sum();
        let total: f64 = impact.iter().sum();
        worst = worst.max((za.near_frac[v].unwrap() - near / total).abs());
    }

    let wi = Surrogate::Identity.weights(&scene);
    let id = zero_ablation_field(&x, |f| Ok(wi.dot(f)), &g).unwrap();
    let id_ok = id.near_frac.iter().all(|f| *f == Some(1.0));
    let wm = Surrogate::MeanPool.weights(&scene);
    let mp = zero_ablation_field(&x, |f| Ok(wm.dot(f)), &g).unwrap();
    let mut mp_worst: f64 = 0.0;
    for v in 0..n {
        let expect = g.neighborhood(v).len() as f64 / n as f64;
        mp_worst = mp_worst.max((mp.near_frac[v].unwrap() - expect).abs());
    }
    check(
        worst <= 1e-12 && id_ok && mp_worst <= 1e-12,
        format!(
            "distance-weighted max |diff| {worst:.2e}, identity all 1.0: {id_ok}, mean-pool max |diff| {mp_worst:.2e}"
        ),
    )
}

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("sudoku baseline 9/81", Duration::from_secs(1), c1_sudoku_baseline),
        ("constraint baseline fractions", Duration::from_secs(1), c2_constraint_baseline),
        ("locality oracle on 1000 instances", Duration::from_secs(30), c3_locality_oracle),
        ("jacobian correctness", Duration::from_secs(60), c4_jacobian),
        ("planted-structure recovery", Duration::from_secs(300), c5_planted),
        ("calibration band", Duration::from_secs(60), c6_calibration),
        ("granularity formula", Duration::from_secs(1), c7_granularity),
        ("sae dictionary recovery", Duration::from_secs(300), c8_sae),
        ("bootstrap coverage", Duration::from_secs(60), c9_coverage),
        ("determinism and replay", Duration::from_secs(300), c10_replay),
        ("object near-frac", Duration::from_secs(10), c11_object),
    ];
    let filter: Option<usize> = std::env::args().nth(1).and_then(|a| a.parse().ok());
    let mut failed = 0;
    for (i, (name, limit, f)) in criteria.into_iter().enumerate() {
        let id = i + 1;
        if filter.is_some_and(|want| want != id) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f))
            .unwrap_or_else(|_| Err("panicked".to_string()));
        let took = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if took <= limit => (true, d),
            Ok(d) => (false, format!("{d}; exceeded {limit:?}")),
            Err(d) => (false, d),
        };
        failed += usize::from(!ok);
        println!(
            "[{}] {id:>2} {name}: {detail} ({:.2}s)",
            if ok { "PASS" } else { "FAIL" },
            took.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
