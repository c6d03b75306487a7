use std::collections::VecDeque;
use std::path::Path;

use super::{Geometry, GeometryKind, GeometryParams, Segment};
use crate::error::{LocalityError, Result};

/// Grids are embedded in a fixed `ARC_PAD x ARC_PAD` position axis.
pub const ARC_PAD: usize = 30;
pub const ARC_MIN_COMPONENTS: usize = 2;
pub const ARC_MAX_COMPONENTS: usize = 15;

/// An ARC-style color grid. Color 0 is background. Cell `(r, c)` maps to
/// position id `r * ARC_PAD + c` of the padded grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArcGrid {
    height: usize,
    width: usize,
    cells: Vec<u32>,
}

impl ArcGrid {
    pub fn new(rows: Vec<Vec<i64>>) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        if height == 0 || width == 0 {
            return Err(LocalityError::InvalidInstance("empty ARC grid".into()));
        }
        if height > ARC_PAD || width > ARC_PAD {
            return Err(LocalityError::InvalidInstance(format!(
                "grid {height}x{width} exceeds {ARC_PAD}x{ARC_PAD}"
            )));
        }
        let mut cells = Vec::with_capacity(height * width);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(LocalityError::InvalidInstance(format!(
                    "row {r} has {} cells, expected {width}",
                    row.len()
                )));
            }
            for &v in row {
                let color = u32::try_from(v).map_err(|_| {
                    LocalityError::InvalidInstance(format!("invalid color code {v}"))
                })?;
                cells.push(color);
            }
        }
        Ok(Self {
            height,
            width,
            cells,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::new(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LocalityError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn color(&self, r: usize, c: usize) -> u32 {
        self.cells[r * self.width + c]
    }

    pub fn position(r: usize, c: usize) -> usize {
        r * ARC_PAD + c
    }
}

/// ARC geometry plus the component-count filter outcome.
#[derive(Debug, Clone)]
pub struct ArcGeometry {
    pub geometry: Geometry,
    pub components: usize,
    /// True when the component count lies in
    /// `[ARC_MIN_COMPONENTS, ARC_MAX_COMPONENTS]`.
    pub accepted: bool,
}

/// Sites are the foreground cells; segments and neighborhoods are the
/// same-color 4-connected components.
pub fn build_arc_geometry(grid: &ArcGrid) -> Result<ArcGeometry> {
    let (h, w) = (grid.height, grid.width);
    let mut label = vec![usize::MAX; h * w];
    let mut components: Vec<Vec<usize>> = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if grid.cells[start] == 0 || label[start] != usize::MAX {
            continue;
        }
        let color = grid.cells[start];
        let id = components.len();
        let mut members = Vec::new();
        label[start] = id;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            members.push(ArcGrid::position(i / w, i % w));
            let (r, c) = (i / w, i % w);
            let mut visit = |j: usize| {
                if grid.cells[j] == color && label[j] == usize::MAX {
                    label[j] = id;
                    queue.push_back(j);
                }
            };
            if r > 0 {
                visit(i - w);
            }
            if r + 1 < h {
                visit(i + w);
            }
            if c > 0 {
                visit(i - 1);
            }
            if c + 1 < w {
                visit(i + 1);
            }
        }
        members.sort_unstable();
        components.push(members);
    }
    if components.is_empty() {
        return Err(LocalityError::NoForeground);
    }

    let mut sites: Vec<usize> = components.iter().flatten().copied().collect();
    sites.sort_unstable();
    let comp_of = |pos: usize| label[(pos / ARC_PAD) * w + pos % ARC_PAD];
    let neighborhoods = sites
        .iter()
        .map(|&s| components[comp_of(s)].clone())
        .collect();
    let n = components.len();
    let accepted = (ARC_MIN_COMPONENTS..=ARC_MAX_COMPONENTS).contains(&n);
    let segments = components
        .into_iter()
        .enumerate()
        .map(|(i, sites)| Segment {
            label: format!("object{i}"),
            sites,
        })
        .collect();
    let geometry = Geometry::new(
        GeometryKind::Arc,
        sites,
        neighborhoods,
        segments,
        GeometryParams::Arc {
            height: h,
            width: w,
            components: n,
            accepted,
        },
    )?;
    Ok(ArcGeometry {
        geometry,
        components: n,
        accepted,
    })
}
