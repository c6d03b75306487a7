#![allow(dead_code)]

use std::path::{Path, PathBuf};

use locality::geometry::{build_maze_geometry, Geometry, MazeInstance, ObjectScene, SceneObject};
use locality::rng::{stream, Domain};
use rand::Rng;
use locality::toymodel::{Mode, MixingSpec, Nonlinearity, ToyConfig};

pub const FIXTURE_EXAMPLES: usize = 4;
pub const FIXTURE_TOKEN_SEED: u64 = 42;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

/// Serpentine path through a 5x5 grid: 25 sites, 9 corridors.
pub fn maze25() -> Geometry {
    build_maze_geometry(&MazeInstance::serpentine(5, 5).unwrap()).unwrap()
}

/// The configuration behind the committed `toy_maze_hrm` fixtures.
pub fn fixture_config() -> ToyConfig {
    ToyConfig {
        positions: 25,
        dims: 16,
        schedule: [2, 2],
        mode: Mode::Hrm,
        mixing_l: MixingSpec::Neighborhood {
            geometry: Box::new(maze25()),
        },
        mixing_h: Some(MixingSpec::DenseRandom),
        nonlinearity: Nonlinearity::Tanh,
        vocab: 8,
        seed: 42,
    }
}

/// Normwise relative difference `‖a − b‖_F / ‖b‖_F`.
pub fn rel_diff(a: &ndarray::Array2<f64>, b: &ndarray::Array2<f64>) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den
}

/// Ten objects spread over a 4 x 4 x 1.5 box.
pub fn scene10() -> ObjectScene {
    let mut rng = stream(11, Domain::Synthetic, &[10]);
    ObjectScene::new(
        (0..10)
            .map(|i| SceneObject {
                id: format!("object{i}"),
                position: [
                    rng.random_range(0.0..4.0),
                    rng.random_range(0.0..4.0),
                    rng.random_range(0.0..1.5),
                ],
            })
            .collect(),
    )
    .unwrap()
}

pub mod golden;
