use super::{Geometry, GeometryKind, GeometryParams, Segment};
use crate::error::{LocalityError, Result};

/// A maze grid with its solution path. Position id of cell `(r, c)` is
/// `r * width + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct MazeInstance {
    pub width: usize,
    pub height: usize,
    /// Row-major passability, `true` for open cells.
    pub passable: Vec<bool>,
    /// Solution path as `(row, col)` cells in walking order.
    pub path: Vec<(usize, usize)>,
}

impl MazeInstance {
    pub fn new(
        width: usize,
        height: usize,
        passable: Vec<bool>,
        path: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let inst = Self {
            width,
            height,
            passable,
            path,
        };
        inst.validate()?;
        Ok(inst)
    }

    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(LocalityError::InvalidInstance("empty maze grid".into()));
        }
        if self.passable.len() != self.width * self.height {
            return Err(LocalityError::InvalidInstance(format!(
                "passability has {} cells, grid is {}x{}",
                self.passable.len(),
                self.height,
                self.width
            )));
        }
        let mut seen = vec![false; self.passable.len()];
        for (k, &(r, c)) in self.path.iter().enumerate() {
            if r >= self.height || c >= self.width {
                return Err(LocalityError::InvalidInstance(format!(
                    "path cell ({r},{c}) outside the grid"
                )));
            }
            let id = self.cell_id(r, c);
            if !self.passable[id] {
                return Err(LocalityError::InvalidInstance(format!(
                    "path cell ({r},{c}) is a wall"
                )));
            }
            if std::mem::replace(&mut seen[id], true) {
                return Err(LocalityError::InvalidInstance(format!(
                    "path revisits cell ({r},{c})"
                )));
            }
            if k > 0 {
                let (pr, pc) = self.path[k - 1];
                if pr.abs_diff(r) + pc.abs_diff(c) != 1 {
                    return Err(LocalityError::InvalidInstance(format!(
                        "path cells ({pr},{pc}) and ({r},{c}) are not adjacent"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn cell_id(&self, r: usize, c: usize) -> usize {
        r * self.width + c
    }

    /// Parses the text grid format: `#` wall, `.` open, `*` path cell, one
    /// row per line. The path order is recovered by walking the chain of
    /// path cells from the endpoint with the smaller position id.
    pub fn from_text(text: &str) -> Result<Self> {
        let rows: Vec<&str> = text
            .lines()
            .map(str::trim_end)
            .filter(|l| !l.is_empty())
            .collect();
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        let mut passable = Vec::with_capacity(width * height);
        let mut on_path = Vec::with_capacity(width * height);
        for (r, row) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(LocalityError::InvalidInstance(format!(
                    "row {r} has length {}, expected {width}",
                    row.chars().count()
                )));
            }
            for ch in row.chars() {
                let (open, path) = match ch {
                    '#' => (false, false),
                    '.' => (true, false),
                    '*' => (true, true),
                    other => {
                        return Err(LocalityError::InvalidInstance(format!(
                            "unexpected maze character `{other}` in row {r}"
                        )))
                    }
                };
                passable.push(open);
                on_path.push(path);
            }
        }
        let path = order_path(width, height, &on_path)?;
        Self::new(width, height, passable, path)
    }

    pub fn to_text(&self) -> String {
        let mut grid: Vec<char> = self
            .passable
            .iter()
            .map(|&p| if p { '.' } else { '#' })
            .collect();
        for &(r, c) in &self.path {
            grid[self.cell_id(r, c)] = '*';
        }
        let mut out = String::with_capacity((self.width + 1) * self.height);
        for row in grid.chunks(self.width) {
            out.extend(row);
            out.push('\n');
        }
        out
    }

    /// Open `width x height` grid whose path snakes through every cell,
    /// left to right on even rows and right to left on odd rows.
    pub fn serpentine(width: usize, height: usize) -> Result<Self> {
        let mut path = Vec::with_capacity(width * height);
        for r in 0..height {
            if r % 2 == 0 {
                path.extend((0..width).map(|c| (r, c)));
            } else {
                path.extend((0..width).rev().map(|c| (r, c)));
            }
        }
        Self::new(width, height, vec![true; width * height], path)
    }
}

fn order_path(width: usize, height: usize, on_path: &[bool]) -> Result<Vec<(usize, usize)>> {
    let cells: Vec<usize> = (0..on_path.len()).filter(|&i| on_path[i]).collect();
    if cells.is_empty() {
        return Ok(Vec::new());
    }
    let neighbors = |i: usize| -> Vec<usize> {
        let (r, c) = (i / width, i % width);
        let mut out = Vec::with_capacity(4);
        if r > 0 {
            out.push(i - width);
        }
        if c > 0 {
            out.push(i - 1);
        }
        if c + 1 < width {
            out.push(i + 1);
        }
        if r + 1 < height {
            out.push(i + width);
        }
        out.retain(|&j| on_path[j]);
        out
    };
    let start = if cells.len() == 1 {
        cells[0]
    } else {
        let ends: Vec<usize> = cells
            .iter()
            .copied()
            .filter(|&i| neighbors(i).len() == 1)
            .collect();
        if ends.len() != 2 || cells.iter().any(|&i| neighbors(i).len() > 2) {
            return Err(LocalityError::InvalidInstance(
                "path cells do not form a simple chain".into(),
            ));
        }
        ends[0]
    };
    let mut order = vec![start];
    let mut prev = usize::MAX;
    let mut cur = start;
    while let Some(&next) = neighbors(cur).iter().find(|&&j| j != prev) {
        if order.len() == cells.len() {
            break;
        }
        order.push(next);
        prev = cur;
        cur = next;
    }
    if order.len() != cells.len() {
        return Err(LocalityError::InvalidInstance(
            "path cells are not connected".into(),
        ));
    }
    Ok(order.into_iter().map(|i| (i / width, i % width)).collect())
}

/// Sites are the path cells; `N(v)` holds the cells at path-index distance
/// at most one; segments are corridors, the maximal constant-direction runs
/// of the path, with each turn cell closing the run that reaches it.
pub fn build_maze_geometry(inst: &MazeInstance) -> Result<Geometry> {
    if inst.path.is_empty() {
        return Err(LocalityError::InvalidInstance("maze path is empty".into()));
    }
    inst.validate()?;
    let ids: Vec<usize> = inst
        .path
        .iter()
        .map(|&(r, c)| inst.cell_id(r, c))
        .collect();
    let n = ids.len();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&k| ids[k]);
    let sites: Vec<usize> = order.iter().map(|&k| ids[k]).collect();
    let neighborhoods: Vec<Vec<usize>> = order
        .iter()
        .map(|&k| {
            let lo = k.saturating_sub(1);
            let hi = (k + 1).min(n - 1);
            ids[lo..=hi].to_vec()
        })
        .collect();

    let step = |k: usize| -> (isize, isize) {
        let (r0, c0) = inst.path[k];
        let (r1, c1) = inst.path[k + 1];
        (r1 as isize - r0 as isize, c1 as isize - c0 as isize)
    };
    let mut runs: Vec<Vec<usize>> = vec![vec![ids[0]]];
    for (k, &id) in ids.iter().enumerate().skip(1) {
        runs.last_mut().expect("at least one run").push(id);
        let turns = k + 1 < n && step(k) != step(k - 1);
        if turns {
            runs.push(Vec::new());
        }
    }
    let segments = runs
        .into_iter()
        .filter(|r| !r.is_empty())
        .enumerate()
        .map(|(i, sites)| Segment {
            label: format!("corridor{i}"),
            sites,
        })
        .collect();

    Geometry::new(
        GeometryKind::Maze,
        sites,
        neighborhoods,
        segments,
        GeometryParams::Maze {
            width: inst.width,
            height: inst.height,
            path: ids,
        },
    )
}
