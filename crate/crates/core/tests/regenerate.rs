//! Rewrites the committed fixtures. Run with `--ignored` after an
//! intentional change to the model or output formats.

mod common;

use std::process::Command;

use serde_json::json;

use locality::toymodel::{init_toy_model, random_tokens};
use locality::trace::{state_delta_curve, write_trace, Level};

use common::golden::*;
use common::{fixture_config, fixtures, maze25, scene10, FIXTURE_EXAMPLES, FIXTURE_TOKEN_SEED};

fn write(name: &str, text: String) {
    std::fs::write(fixtures().join(name), text).unwrap();
}

#[test]
#[ignore]
fn regenerate_fixtures() {
    let dir = fixtures();
    std::fs::create_dir_all(&dir).unwrap();
    write("maze_walled.txt", "*****\n####*\n*****\n*####\n*****\n".into());
    maze25().save(&dir.join("maze25.geometry.json")).unwrap();

    let cfg = fixture_config();
    write("toy_maze_hrm.json", serde_json::to_string_pretty(&cfg).unwrap() + "\n");
    let model = init_toy_model(&cfg).unwrap();
    let tokens = random_tokens(&cfg, FIXTURE_EXAMPLES, FIXTURE_TOKEN_SEED);
    let trace = model.trace(&tokens, &[], "maze").unwrap();
    let tdir = dir.join("toy_maze_hrm.trace");
    let _ = std::fs::remove_dir_all(&tdir);
    write_trace(&trace, &tdir).unwrap();

    let mut csv = String::from("id,x,y,z\n");
    for o in scene10().objects() {
        let [x, y, z] = o.position;
        csv += &format!("{},{x},{y},{z}\n", o.id);
    }
    write("scene10.csv", csv);

    let trace = fixture_trace();
    let curves = json!({
        "L": state_delta_curve(&trace, Level::L).unwrap().deltas,
        "H": state_delta_curve(&trace, Level::H).unwrap().deltas,
    });
    write(DELTA_CURVES, serde_json::to_string_pretty(&curves).unwrap() + "\n");

    let states: serde_json::Map<String, serde_json::Value> = injection_rollout()
        .states
        .iter()
        .map(|(l, z)| (l.to_string(), json!(z.rows().into_iter().map(|r| r.to_vec()).collect::<Vec<_>>())))
        .collect();
    write(FORWARD_INJECTION, serde_json::to_string(&states).unwrap() + "\n");

    let edges: Vec<_> = cross_cycle_h()
        .iter()
        .map(|e| json!({ "from": e.from.to_string(), "to": e.to.to_string(), "concentration": e.concentration }))
        .collect();
    write(CROSS_CYCLE_H, serde_json::to_string_pretty(&edges).unwrap() + "\n");

    write(SAE_TOP5, serde_json::to_string(&sae_top5(&fixture_sae(), &maze25())).unwrap() + "\n");

    write(KERNEL_SVG, kernel_svg());

    let patch = json!({
        "command": "patch",
        "model": "toy_maze_hrm.json",
        "seed": 3,
        "examples": 4,
        "channels": ["within-L", "within-H"],
        "resamples": 200
    });
    write(PATCH_CONFIG, serde_json::to_string_pretty(&patch).unwrap() + "\n");
    let out = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_locality"))
        .args(["patch", "--config"])
        .arg(dir.join(PATCH_CONFIG))
        .arg("--out")
        .arg(out.path())
        .status()
        .unwrap();
    assert!(status.success());
    std::fs::copy(out.path().join("summary.json"), dir.join(PATCH_SUMMARY)).unwrap();
}
