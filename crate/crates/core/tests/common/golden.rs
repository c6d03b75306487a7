//! Computations whose outputs are frozen under `tests/fixtures`.

use locality::geometry::Geometry;
use locality::patching::{Channel, ChannelKind};
use locality::sae::{feature_segment_report, train_sae, IdentityHead, SaeConfig, TrainedSae};
use locality::structural::{cross_cycle_profile, CrossCycleEdge};
use locality::toymodel::{init_toy_model, Injection, Rollout, ToyModel};
use locality::trace::{read_trace, ActivationTrace, CycleLabel, Level};

use super::{fixture_config, fixtures, maze25};

pub const PATCH_CONFIG: &str = "patch_config.json";
pub const PATCH_SUMMARY: &str = "patch_summary.json";
pub const KERNEL_SVG: &str = "kernel_within-H.svg";
pub const DELTA_CURVES: &str = "delta_curves.json";
pub const FORWARD_INJECTION: &str = "forward_injection.json";
pub const CROSS_CYCLE_H: &str = "cross_cycle_h.json";
pub const SAE_TOP5: &str = "sae_top5.json";

pub fn fixture_model() -> ToyModel {
    init_toy_model(&fixture_config()).unwrap()
}

pub fn fixture_trace() -> ActivationTrace {
    read_trace(&fixtures().join("toy_maze_hrm.trace")).unwrap()
}

pub fn label(s: &str) -> CycleLabel {
    s.parse().unwrap()
}

/// All-zero tokens with `e₁` added to `H0L0/L` at position 3.
pub fn injection_rollout() -> Rollout {
    let m = fixture_model();
    let mut delta = vec![0.0; m.dims()];
    delta[0] = 1.0;
    let inj = Injection {
        label: label("H0L0/L"),
        position: 3,
        delta,
    };
    m.forward(&vec![0; m.positions()], &[inj]).unwrap()
}

pub fn cross_cycle_h() -> Vec<CrossCycleEdge> {
    let m = fixture_model();
    let tokens = &locality::toymodel::random_tokens(&m.config, 1, super::FIXTURE_TOKEN_SEED)[0];
    cross_cycle_profile(&m, tokens, Level::H, &maze25(), 1e-4).unwrap()
}

pub fn sae_config() -> SaeConfig {
    SaeConfig {
        d_in: 16,
        features: 32,
        l1: 1e-3,
        learning_rate: 0.05,
        epochs: 30,
        batch_size: 20,
        seed: 5,
    }
}

pub fn fixture_sae() -> TrainedSae {
    let trace = fixture_trace();
    train_sae(trace.field(label("H1L1/H")).unwrap(), &sae_config()).unwrap()
}

pub fn sae_top5(sae: &TrainedSae, g: &Geometry) -> Vec<usize> {
    let trace = fixture_trace();
    let acts = trace.field(label("H1L1/H")).unwrap();
    feature_segment_report(&sae.model, acts, &IdentityHead, g, 5)
        .unwrap()
        .iter()
        .map(|r| r.feature)
        .collect()
}

pub fn kernel_svg() -> String {
    let m = fixture_model();
    let tokens = &locality::toymodel::random_tokens(&m.config, 1, super::FIXTURE_TOKEN_SEED)[0];
    let ch = Channel::at_cycle(ChannelKind::WithinH, &m.config, label("H1L1/H")).unwrap();
    let g = maze25();
    let k = m.jacobian_fd(tokens, ch.src, ch.dst, 1e-4).unwrap().restrict(&g).unwrap();
    locality::svg::render_heatmap(&k.k, Some(&g), "within-H").unwrap()
}
