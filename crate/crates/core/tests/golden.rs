//! Regression against the committed fixtures, plus scalar reference loops
//! that reproduce the frozen numbers independently of the library.

mod common;

use std::process::Command;

use serde_json::Value;

use locality::trace::{state_delta_curve, Level};

use common::golden::*;
use common::{fixtures, maze25};

fn load(name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(fixtures().join(name)).unwrap()).unwrap()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

#[test]
fn fixture_trace_shape() {
    let t = fixture_trace();
    assert_eq!(t.fields.len(), 8);
    for f in &t.fields {
        assert_eq!(f.data.dim(), (4, 25, 16));
    }
    let labels: Vec<String> = t.fields.iter().map(|f| f.label.to_string()).collect();
    assert_eq!(labels[0], "H0L0/L");
    assert_eq!(labels[7], "H1L1/H");
}

#[test]
fn fixture_trace_matches_model() {
    let cfg = common::fixture_config();
    let tokens = locality::toymodel::random_tokens(&cfg, 4, common::FIXTURE_TOKEN_SEED);
    let fresh = fixture_model().trace(&tokens, &[], "maze").unwrap();
    assert_eq!(fresh.fields, fixture_trace().fields);
}

/// Same quantity as the library, written as plain nested loops.
fn scalar_delta_curve(level: Level) -> Vec<f64> {
    let t = fixture_trace();
    let fields: Vec<_> = t.fields.iter().filter(|f| f.label.level == level).collect();
    let mut out = Vec::new();
    for w in fields.windows(2) {
        let (e_n, t_n, d_n) = w[0].data.dim();
        let mut total = 0.0;
        for e in 0..e_n {
            let mut ex = 0.0;
            for p in 0..t_n {
                let mut sq = 0.0;
                for d in 0..d_n {
                    let diff = w[1].data[[e, p, d]] as f64 - w[0].data[[e, p, d]] as f64;
                    sq += diff * diff;
                }
                ex += f64::sqrt(sq);
            }
            total += ex / t_n as f64;
        }
        out.push(total / e_n as f64);
    }
    out
}

#[test]
fn delta_curves_match_frozen_reference() {
    let frozen = load(DELTA_CURVES);
    let t = fixture_trace();
    for (level, key) in [(Level::L, "L"), (Level::H, "H")] {
        let want = floats(&frozen[key]);
        assert_eq!(state_delta_curve(&t, level).unwrap().deltas, want);
        assert_eq!(scalar_delta_curve(level), want);
    }
}

/// Scalar rollout of the fixture model, interleaving L and H updates.
fn scalar_injection_rollout() -> Vec<(String, Vec<Vec<f64>>)> {
    let m = fixture_model();
    let (t, d) = (m.positions(), m.dims());
    let e: Vec<Vec<f64>> = (0..t)
        .map(|_| (0..d).map(|j| (0..d).map(|k| m.embedding[[0, k]] * m.w_in[[k, j]]).sum()).collect())
        .collect();
    let update = |p: &locality::toymodel::ModuleParams, own: &[Vec<f64>], cross: &[Vec<f64>]| {
        let pre: Vec<Vec<f64>> = (0..t)
            .map(|u| {
                (0..d)
                    .map(|j| {
                        (0..d)
                            .map(|k| own[u][k] * p.w_self[[k, j]] + cross[u][k] * p.w_cross[[k, j]])
                            .sum::<f64>()
                    })
                    .collect()
            })
            .collect();
        (0..t)
            .map(|u| {
                (0..d)
                    .map(|j| {
                        let mixed: f64 = (0..t).map(|w| p.mixing[[u, w]] * pre[w][j]).sum();
                        (mixed + p.bias[j]).tanh()
                    })
                    .collect::<Vec<f64>>()
            })
            .collect::<Vec<_>>()
    };
    let mut zl = vec![vec![0.0; d]; t];
    let mut zh = vec![vec![0.0; d]; t];
    let mut out = Vec::new();
    for lab in m.config.labels() {
        if lab.level == Level::L {
            let cross: Vec<Vec<f64>> = (0..t)
                .map(|u| (0..d).map(|j| zh[u][j] + e[u][j]).collect())
                .collect();
            zl = update(&m.l, &zl, &cross);
            if lab.to_string() == "H0L0/L" {
                zl[3][0] += 1.0;
            }
            out.push((lab.to_string(), zl.clone()));
        } else {
            zh = update(&m.h, &zh, &zl);
            out.push((lab.to_string(), zh.clone()));
        }
    }
    out
}

#[test]
fn injection_rollout_matches_frozen_field() {
    let frozen = load(FORWARD_INJECTION);
    let frozen = frozen.as_object().unwrap();
    let rollout = injection_rollout();
    assert_eq!(rollout.states.len(), frozen.len());
    for (lab, z) in &rollout.states {
        let rows = frozen[&lab.to_string()].as_array().unwrap();
        for (u, row) in rows.iter().enumerate() {
            assert_eq!(z.row(u).to_vec(), floats(row), "{lab} row {u}");
        }
    }
    for (lab, z) in scalar_injection_rollout() {
        let rows = frozen[&lab].as_array().unwrap();
        for (u, row) in rows.iter().enumerate() {
            for (a, b) in z[u].iter().zip(floats(row)) {
                assert!((a - b).abs() <= 1e-12, "{lab} row {u}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn cross_cycle_h_edges_match_frozen_values() {
    let frozen = load(CROSS_CYCLE_H);
    let edges = cross_cycle_h();
    let frozen = frozen.as_array().unwrap();
    assert_eq!(edges.len(), frozen.len());
    for (e, f) in edges.iter().zip(frozen) {
        assert_eq!(e.from.to_string(), f["from"].as_str().unwrap());
        assert_eq!(e.to.to_string(), f["to"].as_str().unwrap());
        assert_eq!(e.concentration, f["concentration"].as_f64().unwrap());
    }
}

#[test]
fn sae_ranking_is_frozen_and_loss_is_monotone() {
    let sae = fixture_sae();
    let want: Vec<usize> = serde_json::from_value(load(SAE_TOP5)).unwrap();
    assert_eq!(sae_top5(&sae, &maze25()), want);
    assert_eq!(sae_top5(&fixture_sae(), &maze25()), want);
    for w in sae.epoch_losses.windows(2) {
        assert!(w[1].total <= w[0].total * 1.01, "{:?}", w);
    }
}

#[test]
fn kernel_heatmap_matches_golden_svg() {
    let want = std::fs::read_to_string(fixtures().join(KERNEL_SVG)).unwrap();
    assert_eq!(kernel_svg(), want);
}

#[test]
fn patch_summary_matches_golden_file() {
    let out = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_locality"))
        .args(["patch", "--config"])
        .arg(fixtures().join(PATCH_CONFIG))
        .arg("--out")
        .arg(out.path())
        .status()
        .unwrap();
    assert!(status.success());
    let got = std::fs::read(out.path().join("summary.json")).unwrap();
    let want = std::fs::read(fixtures().join(PATCH_SUMMARY)).unwrap();
    assert_eq!(got, want);
}
