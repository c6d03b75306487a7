//! Invariants checked over generated inputs.

mod common;

use std::collections::BTreeSet;

use ndarray::Array2;
use proptest::prelude::*;

use locality::geometry::{
    baseline_local_fraction, build_arc_geometry, build_maze_geometry, build_object_geometry,
    build_sudoku_geometry, ArcGrid, Geometry, MazeInstance, ObjectScene, SceneObject,
};
use locality::patching::{locality_score, ImpactField};
use locality::stats::{bootstrap_ci, correlations, pearson, spearman, BootstrapSpec};
use locality::structural::{cell_locality, constraint_mass_fractions, segment_kernel, Kernel};
use locality::trace::{read_trace, write_trace};

fn maze(w: usize, h: usize, len: usize) -> Geometry {
    let full = MazeInstance::serpentine(w, h).unwrap();
    let len = len.clamp(1, w * h);
    let inst = MazeInstance::new(w, h, vec![true; w * h], full.path[..len].to_vec()).unwrap();
    build_maze_geometry(&inst).unwrap()
}

fn square(p: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(prop_oneof![1 => Just(0.0), 4 => 0.0f64..10.0], p * p)
        .prop_map(move |v| Array2::from_shape_vec((p, p), v).unwrap())
}

fn maze_and_field() -> impl Strategy<Value = (Geometry, Array2<f64>)> {
    (2usize..6, 2usize..6, 1usize..36).prop_flat_map(|(w, h, len)| {
        let g = maze(w, h, len);
        let p = g.len();
        (Just(g), square(p))
    })
}

fn scene(n: usize) -> impl Strategy<Value = ObjectScene> {
    prop::collection::vec((0.0f64..5.0, 0.0f64..5.0, 0.0f64..5.0), n).prop_map(|pts| {
        ObjectScene::new(
            pts.into_iter()
                .enumerate()
                .map(|(i, (x, y, z))| SceneObject {
                    id: format!("o{i}"),
                    position: [x, y, z],
                })
                .collect(),
        )
        .unwrap()
    })
}

fn score(g: &Geometry, a: Array2<f64>) -> Option<locality::patching::LocalityResult> {
    locality_score(&ImpactField::from_matrices("p", g.clone(), vec![a]).unwrap(), None).ok()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn locality_matches_oracle((g, a) in maze_and_field()) {
        let p = g.len();
        let mut kept = Vec::new();
        for v in 0..p {
            let col: f64 = (0..p).map(|u| a[[u, v]]).sum();
            if col > 0.0 {
                let near: f64 = g.neighborhood(v).iter().map(|&s| a[[g.index_of(s).unwrap(), v]]).sum();
                kept.push(near / col);
            }
        }
        match score(&g, a) {
            Some(r) => {
                let m = kept.iter().sum::<f64>() / kept.len() as f64;
                prop_assert!((r.mean - m).abs() <= 1e-12);
                prop_assert_eq!(r.per_source.iter().flatten().count(), kept.len());
            }
            None => prop_assert!(kept.is_empty()),
        }
    }

    #[test]
    fn locality_is_scale_invariant((g, a) in maze_and_field(), c in 1e-6f64..1e6) {
        let p = g.len();
        let col_scales: Vec<f64> = (0..p).map(|v| c * (1.0 + v as f64)).collect();
        let scaled = Array2::from_shape_fn((p, p), |(u, v)| a[[u, v]] * col_scales[v]);
        match (score(&g, a), score(&g, scaled)) {
            (Some(x), Some(y)) => {
                for (s, t) in x.per_source.iter().zip(&y.per_source) {
                    match (s, t) {
                        (Some(s), Some(t)) => prop_assert!((s - t).abs() <= 1e-12),
                        (None, None) => {}
                        _ => prop_assert!(false, "exclusion changed under scaling"),
                    }
                }
            }
            (None, None) => {}
            _ => prop_assert!(false, "degeneracy changed under scaling"),
        }
    }

    #[test]
    fn uniform_field_scores_the_baseline((w, h, len) in (2usize..6, 2usize..6, 1usize..36)) {
        let g = maze(w, h, len);
        let p = g.len();
        let b = baseline_local_fraction(&g);
        let by_hand: f64 = (0..p).map(|v| g.neighborhood(v).len() as f64).sum::<f64>() / (p * p) as f64;
        prop_assert!((b - by_hand).abs() <= 1e-15);
        let r = score(&g, Array2::ones((p, p))).unwrap();
        prop_assert!((r.mean - b).abs() <= 1e-12);
        prop_assert_eq!(r.baseline, b);
    }

    #[test]
    fn bootstrap_interval_contains_mean(xs in prop::collection::vec(-100.0f64..100.0, 2..40), seed in any::<u64>()) {
        let mut spec = BootstrapSpec::new(seed);
        spec.resamples = 200;
        let ci = bootstrap_ci(&xs, &spec).unwrap();
        prop_assert!(ci.lo <= ci.mean && ci.mean <= ci.hi);
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(ci.lo >= lo - 1e-9 && ci.hi <= hi + 1e-9);
    }

    #[test]
    fn correlation_invariances(
        pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..30),
        a in 0.1f64..10.0,
        b in -5.0f64..5.0,
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        if let (Some(r), Some(r2)) = (pearson(&x, &y), pearson(&x.iter().map(|v| a * v + b).collect::<Vec<_>>(), &y)) {
            prop_assert!((r - r2).abs() <= 1e-9);
            prop_assert!(r.abs() <= 1.0 + 1e-12);
        }
        let cubed: Vec<f64> = x.iter().map(|v| v * v * v + v).collect();
        prop_assert_eq!(spearman(&x, &y), spearman(&cubed, &y));
    }

    #[test]
    fn segment_kernel_matches_block_means((g, a) in maze_and_field()) {
        let k = Kernel::over(a.clone(), &g).unwrap();
        let ks = segment_kernel(&k, &g).unwrap();
        for (m, sm) in g.segments().iter().enumerate() {
            for (n, sn) in g.segments().iter().enumerate() {
                let mut sum = 0.0;
                for &u in &sm.sites {
                    for &v in &sn.sites {
                        sum += a[[g.index_of(u).unwrap(), g.index_of(v).unwrap()]];
                    }
                }
                let mean = sum / (sm.sites.len() * sn.sites.len()) as f64;
                prop_assert!((ks.kseg[[m, n]] - mean).abs() <= 1e-12 * (1.0 + mean));
            }
        }
    }

    #[test]
    fn cell_locality_is_row_scale_invariant(a in square(9), scales in prop::collection::vec(1e-3f64..1e3, 9)) {
        let g = locality::geometry::Geometry::new(
            locality::geometry::GeometryKind::Maze,
            (0..9).collect(),
            (0..9).map(|v| vec![v]).collect(),
            vec![locality::geometry::Segment { label: "all".into(), sites: (0..9).collect() }],
            locality::geometry::GeometryParams::Custom,
        );
        prop_assume!(g.is_ok());
        let g = g.unwrap();
        let scaled = Array2::from_shape_fn((9, 9), |(u, v)| a[[u, v]] * scales[u]);
        let x = cell_locality(&Kernel::over(a, &g).unwrap());
        let y = cell_locality(&Kernel::over(scaled, &g).unwrap());
        match (x, y) {
            (Ok(x), Ok(y)) => prop_assert!((x - y).abs() <= 1e-12),
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false),
        }
    }

    #[test]
    fn constraint_fractions_are_transpose_symmetric(v in prop::collection::vec(0.0f64..1.0, 81 * 81)) {
        let g = build_sudoku_geometry();
        let a = Array2::from_shape_vec((81, 81), v).unwrap();
        let f = constraint_mass_fractions(&Kernel::over(a.clone(), &g).unwrap(), None).unwrap();
        let t = constraint_mass_fractions(&Kernel::over(a.t().to_owned(), &g).unwrap(), None).unwrap();
        for (x, y) in f.fractions.iter().zip(&t.fractions) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
        prop_assert!((f.fractions.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn arc_components_match_union_find(
        (h, w, cells) in (1usize..8, 1usize..8).prop_flat_map(|(h, w)| (Just(h), Just(w), prop::collection::vec(0i64..4, h * w)))
    ) {
        let rows: Vec<Vec<i64>> = cells.chunks(w).map(<[i64]>::to_vec).collect();
        let grid = ArcGrid::new(rows).unwrap();
        let mut parent: Vec<usize> = (0..h * w).collect();
        fn find(p: &mut [usize], i: usize) -> usize {
            let mut r = i;
            while p[r] != r { r = p[r]; }
            p[i] = r;
            r
        }
        for i in 0..h * w {
            let (r, c) = (i / w, i % w);
            for j in [(c + 1 < w).then(|| i + 1), (r + 1 < h).then(|| i + w)].into_iter().flatten() {
                if cells[i] != 0 && cells[i] == cells[j] {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    parent[a] = b;
                }
            }
        }
        let mut groups = std::collections::BTreeMap::<usize, BTreeSet<usize>>::new();
        for i in (0..h * w).filter(|&i| cells[i] != 0) {
            let root = find(&mut parent, i);
            groups.entry(root).or_default().insert((i / w) * 30 + i % w);
        }
        let want: BTreeSet<BTreeSet<usize>> = groups.into_values().collect();
        match build_arc_geometry(&grid) {
            Ok(arc) => {
                let got: BTreeSet<BTreeSet<usize>> = arc.geometry.segments().iter()
                    .map(|s| s.sites.iter().copied().collect()).collect();
                prop_assert_eq!(arc.components, want.len());
                prop_assert_eq!(got, want);
            }
            Err(_) => prop_assert!(want.is_empty()),
        }
    }

    #[test]
    fn object_neighborhoods_grow_with_k(s in scene(9)) {
        let mut prev: Option<Geometry> = None;
        for k in 1..9 {
            let g = build_object_geometry(&s, k).unwrap();
            if let Some(p) = &prev {
                for v in 0..9 {
                    let small: BTreeSet<_> = p.neighborhood(v).iter().collect();
                    let big: BTreeSet<_> = g.neighborhood(v).iter().collect();
                    prop_assert!(small.is_subset(&big));
                }
            }
            let mean_others = (0..9).map(|v| g.neighborhood(v).len() - 1).sum::<usize>() as f64 / 9.0;
            prop_assert!(mean_others >= k as f64);
            prev = Some(g);
        }
    }
}

#[test]
fn correlations_report_undefined_for_constant_input() {
    let spec = BootstrapSpec::new(1);
    let c = correlations(&[1.0, 1.0, 1.0, 1.0], &[1.0, 2.0, 3.0, 4.0], &spec).unwrap();
    assert!(matches!(c.pearson, locality::stats::Correlation::Undefined));
    assert!(matches!(c.spearman, locality::stats::Correlation::Undefined));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn trace_round_trips(seed in 0u64..1000, examples in 1usize..4) {
        let mut cfg = common::fixture_config();
        cfg.seed = seed;
        let m = locality::toymodel::init_toy_model(&cfg).unwrap();
        let tokens = locality::toymodel::random_tokens(&cfg, examples, seed);
        let t = m.trace(&tokens, &[], "maze").unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_trace(&t, dir.path()).unwrap();
        let back = read_trace(dir.path()).unwrap();
        prop_assert_eq!(back.meta, t.meta);
        prop_assert_eq!(back.fields, t.fields);
    }
}
