//! Task geometries: which positions are valid sites, which sites count as
//! local to each other, and how sites group into coarser segments.
//!
//! A [`Geometry`] is immutable once built. Site ids index the model's
//! position axis; neighborhoods and segments are expressed in the same ids.
//! Every neighborhood contains its own site.

mod arc;
mod maze;
mod object;
mod sudoku;

pub use arc::{build_arc_geometry, ArcGeometry, ArcGrid, ARC_MAX_COMPONENTS, ARC_MIN_COMPONENTS, ARC_PAD};
pub use maze::{build_maze_geometry, MazeInstance};
pub use object::{
    build_object_geometry, near_pair_baseline, ObjectScene, SceneObject, K_TARGET_FIGURE,
    K_TARGET_DEFAULT,
};
pub use sudoku::{
    box_of, build_sudoku_geometry, classify_sudoku_pair, ConstraintClass, SUDOKU_CELLS,
};

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{LocalityError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeometryKind {
    Maze,
    Sudoku,
    Arc,
    Object3d,
}

impl GeometryKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Maze => "maze",
            Self::Sudoku => "sudoku",
            Self::Arc => "arc",
            Self::Object3d => "object3d",
        }
    }
}

impl std::str::FromStr for GeometryKind {
    type Err = LocalityError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "maze" => Ok(Self::Maze),
            "sudoku" => Ok(Self::Sudoku),
            "arc" => Ok(Self::Arc),
            "object3d" => Ok(Self::Object3d),
            other => Err(LocalityError::InvalidParameter(format!(
                "unknown geometry kind `{other}`"
            ))),
        }
    }
}

/// A labeled block of the segment partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub label: String,
    pub sites: Vec<usize>,
}

/// Kind-specific construction parameters, kept for distance buckets and
/// serialization.
#[derive(Debug, Clone, PartialEq)]
pub enum GeometryParams {
    Maze {
        width: usize,
        height: usize,
        /// Solution path as position ids, in walking order.
        path: Vec<usize>,
    },
    Sudoku,
    Arc {
        height: usize,
        width: usize,
        components: usize,
        accepted: bool,
    },
    Object3d {
        radius: f64,
        k_target: usize,
        object_ids: Vec<String>,
    },
    /// Caller-assembled geometry with no distance structure beyond
    /// neighborhood membership.
    Custom,
}

impl GeometryParams {
    fn to_value(&self) -> Value {
        let mut m = Map::new();
        match self {
            Self::Maze {
                width,
                height,
                path,
            } => {
                m.insert("width".into(), (*width).into());
                m.insert("height".into(), (*height).into());
                m.insert("path".into(), path.clone().into());
            }
            Self::Sudoku | Self::Custom => {}
            Self::Arc {
                height,
                width,
                components,
                accepted,
            } => {
                m.insert("height".into(), (*height).into());
                m.insert("width".into(), (*width).into());
                m.insert("components".into(), (*components).into());
                m.insert("accepted".into(), (*accepted).into());
            }
            Self::Object3d {
                radius,
                k_target,
                object_ids,
            } => {
                m.insert("radius".into(), (*radius).into());
                m.insert("k_target".into(), (*k_target).into());
                m.insert("object_ids".into(), object_ids.clone().into());
            }
        }
        Value::Object(m)
    }

    fn from_value(kind: GeometryKind, v: &Value) -> Result<Self> {
        #[derive(Deserialize)]
        struct MazeP {
            width: usize,
            height: usize,
            path: Vec<usize>,
        }
        #[derive(Deserialize)]
        struct ArcP {
            height: usize,
            width: usize,
            components: usize,
            accepted: bool,
        }
        #[derive(Deserialize)]
        struct ObjP {
            radius: f64,
            k_target: usize,
            object_ids: Vec<String>,
        }
        let empty = v.as_object().is_none_or(|m| m.is_empty());
        Ok(match kind {
            GeometryKind::Maze => {
                let p: MazeP = serde_json::from_value(v.clone())?;
                Self::Maze {
                    width: p.width,
                    height: p.height,
                    path: p.path,
                }
            }
            GeometryKind::Sudoku => Self::Sudoku,
            GeometryKind::Arc if empty => Self::Custom,
            GeometryKind::Arc => {
                let p: ArcP = serde_json::from_value(v.clone())?;
                Self::Arc {
                    height: p.height,
                    width: p.width,
                    components: p.components,
                    accepted: p.accepted,
                }
            }
            GeometryKind::Object3d if empty => Self::Custom,
            GeometryKind::Object3d => {
                let p: ObjP = serde_json::from_value(v.clone())?;
                Self::Object3d {
                    radius: p.radius,
                    k_target: p.k_target,
                    object_ids: p.object_ids,
                }
            }
        })
    }
}

/// Valid sites, per-site neighborhoods and the segment partition of one
/// task instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    kind: GeometryKind,
    sites: Vec<usize>,
    neighborhoods: Vec<Vec<usize>>,
    segments: Vec<Segment>,
    params: GeometryParams,
    index: HashMap<usize, usize>,
    segment_of: Vec<usize>,
    path_index: Vec<usize>,
}

impl Geometry {
    /// Assembles a geometry and checks every structural invariant.
    ///
    /// `neighborhoods[i]` belongs to `sites[i]`. Neighborhood and segment
    /// members are sorted on construction.
    pub fn new(
        kind: GeometryKind,
        sites: Vec<usize>,
        neighborhoods: Vec<Vec<usize>>,
        segments: Vec<Segment>,
        params: GeometryParams,
    ) -> Result<Self> {
        if sites.is_empty() {
            return Err(LocalityError::Validation("geometry has no sites".into()));
        }
        if sites.windows(2).any(|w| w[0] >= w[1]) {
            return Err(LocalityError::Validation(
                "site ids must be strictly increasing".into(),
            ));
        }
        if neighborhoods.len() != sites.len() {
            return Err(LocalityError::Validation(format!(
                "{} neighborhoods for {} sites",
                neighborhoods.len(),
                sites.len()
            )));
        }
        let index: HashMap<usize, usize> =
            sites.iter().enumerate().map(|(i, &s)| (s, i)).collect();

        let mut neighborhoods = neighborhoods;
        for (i, nb) in neighborhoods.iter_mut().enumerate() {
            nb.sort_unstable();
            nb.dedup();
            if nb.binary_search(&sites[i]).is_err() {
                return Err(LocalityError::Validation(format!(
                    "neighborhood of site {} does not contain the site itself",
                    sites[i]
                )));
            }
            if let Some(bad) = nb.iter().find(|s| !index.contains_key(s)) {
                return Err(LocalityError::Validation(format!(
                    "neighborhood of site {} contains non-site {bad}",
                    sites[i]
                )));
            }
        }

        let mut segments = segments;
        let mut segment_of = vec![usize::MAX; sites.len()];
        for (m, seg) in segments.iter_mut().enumerate() {
            seg.sites.sort_unstable();
            if seg.sites.is_empty() {
                return Err(LocalityError::Validation(format!(
                    "segment `{}` is empty",
                    seg.label
                )));
            }
            for s in &seg.sites {
                let Some(&i) = index.get(s) else {
                    return Err(LocalityError::Validation(format!(
                        "segment `{}` contains non-site {s}",
                        seg.label
                    )));
                };
                if segment_of[i] != usize::MAX {
                    return Err(LocalityError::Validation(format!(
                        "site {s} appears in more than one segment"
                    )));
                }
                segment_of[i] = m;
            }
        }
        if let Some(i) = segment_of.iter().position(|&m| m == usize::MAX) {
            return Err(LocalityError::Validation(format!(
                "site {} is not covered by any segment",
                sites[i]
            )));
        }

        let mut path_index = vec![0; sites.len()];
        if let GeometryParams::Maze { path, .. } = &params {
            if path.len() != sites.len() {
                return Err(LocalityError::Validation(
                    "maze path does not match the site set".into(),
                ));
            }
            for (k, p) in path.iter().enumerate() {
                let i = *index.get(p).ok_or_else(|| {
                    LocalityError::Validation(format!("maze path cell {p} is not a site"))
                })?;
                path_index[i] = k;
            }
        }

        Ok(Self {
            kind,
            sites,
            neighborhoods,
            segments,
            params,
            index,
            segment_of,
            path_index,
        })
    }

    pub fn kind(&self) -> GeometryKind {
        self.kind
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    /// Number of valid sites, `P`.
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn params(&self) -> &GeometryParams {
        &self.params
    }

    /// Index of site id `site` in [`Geometry::sites`].
    pub fn index_of(&self, site: usize) -> Option<usize> {
        self.index.get(&site).copied()
    }

    /// Neighborhood of the site at index `i`, as site ids.
    pub fn neighborhood(&self, i: usize) -> &[usize] {
        &self.neighborhoods[i]
    }

    /// Neighborhood of the site at index `i`, as site indices.
    pub fn neighborhood_indices(&self, i: usize) -> Vec<usize> {
        self.neighborhoods[i]
            .iter()
            .map(|s| self.index[s])
            .collect()
    }

    /// Dense membership mask: `mask[u * P + v]` is true when site `u` lies
    /// in the neighborhood of site `v`.
    pub fn neighborhood_mask(&self) -> Vec<bool> {
        let p = self.len();
        let mut mask = vec![false; p * p];
        for v in 0..p {
            for u in self.neighborhood_indices(v) {
                mask[u * p + v] = true;
            }
        }
        mask
    }

    /// Segment index of the site at index `i`.
    pub fn segment_of(&self, i: usize) -> usize {
        self.segment_of[i]
    }

    /// Largest site id plus one: the minimum model length that can host
    /// this geometry.
    pub fn min_positions(&self) -> usize {
        self.sites.last().map_or(0, |s| s + 1)
    }

    /// Names of the distance buckets used by decay curves.
    pub fn bucket_labels(&self) -> Vec<&'static str> {
        match (self.kind, &self.params) {
            (_, GeometryParams::Maze { .. }) => vec!["0", "1", "2", "3+"],
            (GeometryKind::Sudoku, _) => vec!["self", "box", "row/col", "other"],
            (GeometryKind::Arc, _) => vec!["self", "same-object", "other-object"],
            _ => vec!["self", "near", "far"],
        }
    }

    /// Distance bucket between target index `u` and source index `v`.
    pub fn distance_bucket(&self, u: usize, v: usize) -> usize {
        if u == v {
            return 0;
        }
        match (self.kind, &self.params) {
            (_, GeometryParams::Maze { .. }) => {
                self.path_index[u].abs_diff(self.path_index[v]).min(3)
            }
            (GeometryKind::Sudoku, _) => {
                match classify_sudoku_pair(self.sites[u], self.sites[v]) {
                    Ok(ConstraintClass::Box) => 1,
                    Ok(ConstraintClass::Row | ConstraintClass::Col) => 2,
                    _ => 3,
                }
            }
            (GeometryKind::Arc, _) => {
                if self.segment_of[u] == self.segment_of[v] {
                    1
                } else {
                    2
                }
            }
            _ => {
                if self.neighborhoods[v].binary_search(&self.sites[u]).is_ok() {
                    1
                } else {
                    2
                }
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&GeometryDoc::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: GeometryDoc = serde_json::from_str(text)?;
        doc.try_into()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LocalityError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| LocalityError::io(path, e))
    }
}

/// Expected local fraction of uniformly spread impact mass:
/// `Σ_v |N(v)| / P²`.
pub fn baseline_local_fraction(g: &Geometry) -> f64 {
    let p = g.len();
    let total: usize = g.neighborhoods.iter().map(Vec::len).sum();
    total as f64 / (p * p) as f64
}

/// On-disk JSON shape of a geometry.
#[derive(Debug, Serialize, Deserialize)]
pub struct GeometryDoc {
    pub kind: GeometryKind,
    pub sites: Vec<usize>,
    pub neighborhoods: Map<String, Value>,
    pub segments: Map<String, Value>,
    #[serde(default)]
    pub params: Value,
}

impl From<&Geometry> for GeometryDoc {
    fn from(g: &Geometry) -> Self {
        let neighborhoods = g
            .sites
            .iter()
            .zip(&g.neighborhoods)
            .map(|(s, nb)| (s.to_string(), Value::from(nb.clone())))
            .collect();
        let segments = g
            .segments
            .iter()
            .map(|seg| (seg.label.clone(), Value::from(seg.sites.clone())))
            .collect();
        Self {
            kind: g.kind,
            sites: g.sites.clone(),
            neighborhoods,
            segments,
            params: g.params.to_value(),
        }
    }
}

impl TryFrom<GeometryDoc> for Geometry {
    type Error = LocalityError;

    fn try_from(doc: GeometryDoc) -> Result<Self> {
        let ids = |v: &Value, what: &str| -> Result<Vec<usize>> {
            serde_json::from_value(v.clone())
                .map_err(|e| LocalityError::Validation(format!("{what}: {e}")))
        };
        let mut neighborhoods = Vec::with_capacity(doc.sites.len());
        for s in &doc.sites {
            let v = doc.neighborhoods.get(&s.to_string()).ok_or_else(|| {
                LocalityError::Validation(format!("no neighborhood listed for site {s}"))
            })?;
            neighborhoods.push(ids(v, "neighborhood")?);
        }
        if doc.neighborhoods.len() != doc.sites.len() {
            return Err(LocalityError::Validation(
                "neighborhood keys do not match the site list".into(),
            ));
        }
        let segments = doc
            .segments
            .iter()
            .map(|(label, v)| {
                Ok(Segment {
                    label: label.clone(),
                    sites: ids(v, "segment")?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let params = GeometryParams::from_value(doc.kind, &doc.params)?;
        Geometry::new(doc.kind, doc.sites, neighborhoods, segments, params)
    }
}

impl Serialize for Geometry {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GeometryDoc::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Geometry {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = GeometryDoc::deserialize(d)?;
        Geometry::try_from(doc).map_err(serde::de::Error::custom)
    }
}
