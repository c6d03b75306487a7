use serde::{Deserialize, Serialize};

use super::{Geometry, GeometryKind, GeometryParams, Segment};
use crate::error::{LocalityError, Result};

pub const SUDOKU_CELLS: usize = 81;

/// Which Sudoku rule links a pair of cells. `Box` takes priority over row
/// and column membership.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintClass {
    Box,
    Row,
    Col,
    Other,
}

impl ConstraintClass {
    pub const ALL: [ConstraintClass; 4] = [Self::Box, Self::Row, Self::Col, Self::Other];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Box => "box",
            Self::Row => "row",
            Self::Col => "col",
            Self::Other => "other",
        }
    }
}

/// Box index (0..9, row-major over boxes) of cell id `cell = r * 9 + c`.
pub fn box_of(cell: usize) -> usize {
    let (r, c) = (cell / 9, cell % 9);
    (r / 3) * 3 + c / 3
}

pub fn classify_sudoku_pair(i: usize, j: usize) -> Result<ConstraintClass> {
    if i >= SUDOKU_CELLS || j >= SUDOKU_CELLS {
        return Err(LocalityError::InvalidParameter(format!(
            "cell pair ({i},{j}) outside the 9x9 board"
        )));
    }
    if i == j {
        return Err(LocalityError::InvalidParameter(format!(
            "cell pair ({i},{j}) is not a pair of distinct cells"
        )));
    }
    Ok(if box_of(i) == box_of(j) {
        ConstraintClass::Box
    } else if i / 9 == j / 9 {
        ConstraintClass::Row
    } else if i % 9 == j % 9 {
        ConstraintClass::Col
    } else {
        ConstraintClass::Other
    })
}

/// All 81 cells; `N(v)` and the segments are the nine 3x3 boxes.
pub fn build_sudoku_geometry() -> Geometry {
    let sites: Vec<usize> = (0..SUDOKU_CELLS).collect();
    let boxes: Vec<Vec<usize>> = (0..9)
        .map(|b| sites.iter().copied().filter(|&s| box_of(s) == b).collect())
        .collect();
    let neighborhoods = sites.iter().map(|&s| boxes[box_of(s)].clone()).collect();
    let segments = boxes
        .into_iter()
        .enumerate()
        .map(|(b, sites)| Segment {
            label: format!("box{b}"),
            sites,
        })
        .collect();
    Geometry::new(
        GeometryKind::Sudoku,
        sites,
        neighborhoods,
        segments,
        GeometryParams::Sudoku,
    )
    .expect("sudoku geometry is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::baseline_local_fraction;

    #[test]
    fn top_left_box() {
        let g = build_sudoku_geometry();
        let expected: Vec<usize> = (0..81).filter(|&s| s / 9 < 3 && s % 9 < 3).collect();
        assert_eq!(g.neighborhood(0), expected.as_slice());
        assert_eq!(box_of(4 * 9 + 4), 4);
        assert_eq!(g.segments().len(), 9);
        assert!((0..81).all(|i| g.neighborhood(i).len() == 9));
    }

    #[test]
    fn baseline_is_one_ninth() {
        assert_eq!(baseline_local_fraction(&build_sudoku_geometry()), 9.0 / 81.0);
    }

    #[test]
    fn examples() {
        assert_eq!(classify_sudoku_pair(0, 10).unwrap(), ConstraintClass::Box);
        assert_eq!(classify_sudoku_pair(0, 8).unwrap(), ConstraintClass::Row);
        assert_eq!(classify_sudoku_pair(0, 72).unwrap(), ConstraintClass::Col);
        assert_eq!(classify_sudoku_pair(0, 40).unwrap(), ConstraintClass::Other);
        assert!(classify_sudoku_pair(3, 3).is_err());
    }

    #[test]
    fn classification_is_symmetric() {
        for i in 0..81 {
            for j in (i + 1)..81 {
                assert_eq!(
                    classify_sudoku_pair(i, j).unwrap(),
                    classify_sudoku_pair(j, i).unwrap()
                );
            }
        }
    }

    #[test]
    fn partner_counts_per_cell() {
        for i in 0..81 {
            let mut counts = [0usize; 4];
            for j in (0..81).filter(|&j| j != i) {
                counts[classify_sudoku_pair(i, j).unwrap().index()] += 1;
            }
            assert_eq!(counts, [8, 6, 6, 60], "cell {i}");
        }
    }
}
