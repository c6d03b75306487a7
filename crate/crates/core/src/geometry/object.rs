use std::collections::HashSet;
use std::path::Path;

use super::{Geometry, GeometryKind, GeometryParams, Segment};
use crate::error::{LocalityError, Result};

/// Default neighbor target for the adaptive radius ("roughly seven nearest
/// neighbors").
pub const K_TARGET_DEFAULT: usize = 7;
/// Alternative preset matching the qualitative scene figure.
pub const K_TARGET_FIGURE: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub id: String,
    /// Centroid in meters.
    pub position: [f64; 3],
}

/// Objects of one 3D scene. Object `i` (file order) is site `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectScene {
    objects: Vec<SceneObject>,
}

impl ObjectScene {
    pub fn new(objects: Vec<SceneObject>) -> Result<Self> {
        let mut seen = HashSet::new();
        for o in &objects {
            if !seen.insert(o.id.as_str()) {
                return Err(LocalityError::InvalidInstance(format!(
                    "duplicate object id `{}`",
                    o.id
                )));
            }
            if o.position.iter().any(|x| !x.is_finite()) {
                return Err(LocalityError::InvalidInstance(format!(
                    "object `{}` has a non-finite centroid",
                    o.id
                )));
            }
        }
        Ok(Self { objects })
    }

    /// Reads `id,x,y,z` rows. A leading header row is skipped when its
    /// coordinates are not numeric.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut objects = Vec::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec?;
            if rec.len() < 4 {
                return Err(LocalityError::InvalidInstance(format!(
                    "row {line}: expected id,x,y,z"
                )));
            }
            let coords: std::result::Result<Vec<f64>, _> =
                (1..4).map(|k| rec[k].parse::<f64>()).collect();
            match coords {
                Ok(c) => objects.push(SceneObject {
                    id: rec[0].to_string(),
                    position: [c[0], c[1], c[2]],
                }),
                Err(_) if line == 0 => continue,
                Err(e) => {
                    return Err(LocalityError::InvalidInstance(format!(
                        "row {line}: bad coordinate: {e}"
                    )))
                }
            }
        }
        Self::new(objects)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LocalityError::io(path, e))?;
        Self::from_csv(&text)
    }

    pub fn objects(&self) -> &[SceneObject] {
        &self.objects
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    /// Euclidean centroid distance.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (&self.objects[i].position, &self.objects[j].position);
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }

    /// Smallest radius at which objects have, on average, at least
    /// `k_target` other objects within distance `R`.
    pub fn adaptive_radius(&self, k_target: usize) -> Result<f64> {
        let n = self.len();
        if n < 2 {
            return Err(LocalityError::InvalidInstance(
                "object scene needs at least two objects".into(),
            ));
        }
        if k_target == 0 || k_target >= n {
            return Err(LocalityError::InvalidParameter(format!(
                "k_target {k_target} must lie in 1..{n}"
            )));
        }
        let mut d: Vec<f64> = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| self.distance(i, j))
            .collect();
        d.sort_by(f64::total_cmp);
        // Mean count within R is 2 * #{pairs <= R} / n.
        let pairs_needed = (k_target * n).div_ceil(2);
        Ok(d[pairs_needed - 1])
    }
}

/// One singleton segment per object; `N(v)` is `v` plus every object within
/// the adaptive radius.
pub fn build_object_geometry(scene: &ObjectScene, k_target: usize) -> Result<Geometry> {
    let radius = scene.adaptive_radius(k_target)?;
    let n = scene.len();
    let sites: Vec<usize> = (0..n).collect();
    let neighborhoods = (0..n)
        .map(|v| {
            (0..n)
                .filter(|&u| u == v || scene.distance(u, v) <= radius)
                .collect()
        })
        .collect();
    let segments = scene
        .objects
        .iter()
        .enumerate()
        .map(|(i, o)| Segment {
            label: o.id.clone(),
            sites: vec![i],
        })
        .collect();
    Geometry::new(
        GeometryKind::Object3d,
        sites,
        neighborhoods,
        segments,
        GeometryParams::Object3d {
            radius,
            k_target,
            object_ids: scene.objects.iter().map(|o| o.id.clone()).collect(),
        },
    )
}

/// Fraction of off-diagonal ordered pairs `(u, v)` with `u ∈ N(v)`: the
/// near-object baseline for zero-ablation near-frac.
pub fn near_pair_baseline(g: &Geometry) -> f64 {
    let p = g.len();
    if p < 2 {
        return 0.0;
    }
    let near: usize = (0..p).map(|v| g.neighborhood(v).len() - 1).sum();
    near as f64 / (p * (p - 1)) as f64
}
