//! Timed trajectories over plate cells and their occupancy intervals.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::ids::{DurationMs, TimeMs};
use crate::world::types::Cell;

/// One timed slice of a trajectory: the cells it sweeps and how long it
/// takes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajSegment {
    pub cells: BTreeSet<Cell>,
    pub duration_ms: DurationMs,
}

/// An ordered sequence of swept segments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub segments: Vec<TrajSegment>,
}

impl Trajectory {
    pub fn new(segments: Vec<TrajSegment>) -> Self {
        debug_assert!(segments.iter().all(|s| s.duration_ms > 0 && !s.cells.is_empty()));
        Self { segments }
    }

    pub fn total_duration_ms(&self) -> DurationMs {
        self.segments.iter().map(|s| s.duration_ms).sum()
    }

    pub fn all_cells(&self) -> BTreeSet<Cell> {
        self.segments
            .iter()
            .flat_map(|s| s.cells.iter().copied())
            .collect()
    }
}

/// Per-cell closed-open time interval `[start, end)` in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellInterval {
    pub cell: Cell,
    pub start_ms: TimeMs,
    pub end_ms: TimeMs,
}

impl CellInterval {
    pub fn overlaps(&self, other: &CellInterval) -> bool {
        self.cell == other.cell && self.start_ms < other.end_ms && other.start_ms < self.end_ms
    }
}

/// Expand a trajectory started at `start_ms` into per-cell occupancy
/// intervals. Segments are contiguous: the union span equals the duration
/// sum.
pub fn occupancy(traj: &Trajectory, start_ms: TimeMs) -> Vec<CellInterval> {
    let mut out = Vec::new();
    let mut t = start_ms;
    for seg in &traj.segments {
        let end = t + seg.duration_ms;
        for cell in &seg.cells {
            out.push(CellInterval {
                cell: *cell,
                start_ms: t,
                end_ms: end,
            });
        }
        t = end;
    }
    out
}

/// Straight-line cell sweep between two cells (Bresenham), including both
/// endpoints. Used for transit trajectories.
pub fn sweep_cells(from: Cell, to: Cell) -> Vec<Cell> {
    let mut cells = Vec::new();
    let (mut x, mut y) = (from.x, from.y);
    let dx = (to.x - from.x).abs();
    let dy = -(to.y - from.y).abs();
    let sx = if from.x < to.x { 1 } else { -1 };
    let sy = if from.y < to.y { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        cells.push(Cell::new(x, y));
        if x == to.x && y == to.y {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
    cells
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(cells: &[(i32, i32)], ms: DurationMs) -> TrajSegment {
        TrajSegment {
            cells: cells.iter().map(|&(x, y)| Cell::new(x, y)).collect(),
            duration_ms: ms,
        }
    }

    #[test]
    fn single_segment_interval() {
        let t = Trajectory::new(vec![seg(&[(1, 1)], 2000)]);
        let iv = occupancy(&t, 3000);
        assert_eq!(iv.len(), 1);
        assert_eq!((iv[0].start_ms, iv[0].end_ms), (3000, 5000));
    }

    #[test]
    fn segments_are_contiguous() {
        let t = Trajectory::new(vec![seg(&[(0, 0)], 1000), seg(&[(1, 0)], 500)]);
        let iv = occupancy(&t, 0);
        assert_eq!(iv[0].end_ms, iv[1].start_ms);
        assert_eq!(t.total_duration_ms(), 1500);
    }

    #[test]
    fn sweep_straight_and_diagonal() {
        let line = sweep_cells(Cell::new(0, 0), Cell::new(3, 0));
        assert_eq!(line.len(), 4);
        let diag = sweep_cells(Cell::new(0, 0), Cell::new(2, 2));
        assert_eq!(diag.first(), Some(&Cell::new(0, 0)));
        assert_eq!(diag.last(), Some(&Cell::new(2, 2)));
        let point = sweep_cells(Cell::new(5, 5), Cell::new(5, 5));
        assert_eq!(point, vec![Cell::new(5, 5)]);
    }
}
