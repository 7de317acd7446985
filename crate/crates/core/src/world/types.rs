//! The shared state space: a discretized brick world with a stud plate,
//! brick instances, and robot arms.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ids::{BrickId, RobotId, TimeMs};

/// A stud cell on the plate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn manhattan(self, other: Cell) -> u32 {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

/// A stud cell plus a stacking level (level 0 rests on the plate).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell3 {
    pub x: i32,
    pub y: i32,
    pub level: i32,
}

impl Cell3 {
    pub const fn new(x: i32, y: i32, level: i32) -> Self {
        Self { x, y, level }
    }

    pub fn xy(self) -> Cell {
        Cell::new(self.x, self.y)
    }
}

impl fmt::Display for Cell3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.x, self.y, self.level)
    }
}

/// Brick footprint in studs, e.g. 2x4. `width <= length` by convention,
/// orientation decides which axis the length runs along.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct BrickType {
    pub width: u8,
    pub length: u8,
}

impl BrickType {
    pub const fn new(width: u8, length: u8) -> Self {
        Self { width, length }
    }

    /// Total stud count of the footprint.
    pub fn area(self) -> u32 {
        self.width as u32 * self.length as u32
    }

    /// Narrowest grip dimension, used for parallel-gripper compatibility.
    pub fn min_extent(self) -> u8 {
        self.width.min(self.length)
    }
}

impl fmt::Display for BrickType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.length)
    }
}

impl From<BrickType> for String {
    fn from(t: BrickType) -> String {
        t.to_string()
    }
}

impl TryFrom<String> for BrickType {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        let (w, l) = s
            .split_once('x')
            .ok_or_else(|| format!("brick type must look like 2x4, got {s:?}"))?;
        let width: u8 = w.parse().map_err(|_| format!("bad brick width in {s:?}"))?;
        let length: u8 = l.parse().map_err(|_| format!("bad brick length in {s:?}"))?;
        if width == 0 || length == 0 {
            return Err(format!("brick type {s:?} has a zero extent"));
        }
        Ok(Self { width, length })
    }
}

/// Footprint orientation on the plate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
pub enum Orientation {
    /// Length runs along x.
    #[default]
    #[serde(rename = "0")]
    Deg0,
    /// Length runs along y.
    #[serde(rename = "90")]
    Deg90,
}

/// A concrete placement: a footprint anchored at its minimum-corner cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Placement {
    pub brick_type: BrickType,
    pub orientation: Orientation,
    pub at: Cell3,
}

impl Placement {
    pub fn new(brick_type: BrickType, orientation: Orientation, at: Cell3) -> Self {
        Self {
            brick_type,
            orientation,
            at,
        }
    }

    /// Extent along x and y given the orientation.
    pub fn extents(&self) -> (i32, i32) {
        match self.orientation {
            Orientation::Deg0 => (self.brick_type.length as i32, self.brick_type.width as i32),
            Orientation::Deg90 => (self.brick_type.width as i32, self.brick_type.length as i32),
        }
    }

    /// All stud cells covered by the footprint.
    pub fn footprint(&self) -> Vec<Cell> {
        let (ex, ey) = self.extents();
        let mut cells = Vec::with_capacity((ex * ey) as usize);
        for dx in 0..ex {
            for dy in 0..ey {
                cells.push(Cell::new(self.at.x + dx, self.at.y + dy));
            }
        }
        cells
    }
}

/// Where a brick currently is.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BrickLocation {
    OnPlate(Cell3),
    InHand(RobotId),
    InStore(Cell),
}

/// One physical brick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrickInstance {
    pub id: BrickId,
    pub brick_type: BrickType,
    pub orientation: Orientation,
    pub location: BrickLocation,
    /// Number of times this brick has been handled; feeds wear-based
    /// failure probabilities.
    pub wear_count: u32,
    /// Home store cell; a dropped brick returns here.
    pub store_cell: Cell,
    /// Sub-cell pose offset at the store in integer micrometers, set by
    /// runtime noise injection and consumed by alignment pre-checks.
    /// Integer so traces compare exactly.
    #[serde(default)]
    pub pose_offset_um: (i64, i64),
}

/// Gripper hardware on a robot arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GripperKind {
    Parallel,
    Suction,
}

/// An axis-aligned rectangle of cells, inclusive bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellRect {
    pub x0: i32,
    pub y0: i32,
    pub x1: i32,
    pub y1: i32,
}

impl CellRect {
    pub fn contains(&self, c: Cell) -> bool {
        c.x >= self.x0 && c.x <= self.x1 && c.y >= self.y0 && c.y <= self.y1
    }
}

/// Set of plate cells a robot can reach.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Region(pub Vec<CellRect>);

impl Region {
    pub fn contains(&self, c: Cell) -> bool {
        self.0.iter().any(|r| r.contains(c))
    }
}

/// One robot arm's state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub id: RobotId,
    pub base_region: Region,
    pub holding: Option<BrickId>,
    pub eef_cell: Cell,
    pub gripper: GripperKind,
    /// Maximum brick extent (studs) a parallel gripper can grasp.
    pub max_grip_studs: u8,
    /// Cell this arm is actively bracing, if any.
    pub supporting: Option<Cell>,
}

/// Plate dimensions in studs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plate {
    pub width: i32,
    pub height: i32,
}

impl Plate {
    pub fn contains(&self, c: Cell) -> bool {
        c.x >= 0 && c.x < self.width && c.y >= 0 && c.y < self.height
    }
}

/// Immutable world snapshot. Effects return new snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub plate: Plate,
    pub bricks: BTreeMap<BrickId, BrickInstance>,
    pub robots: BTreeMap<RobotId, RobotState>,
    /// Designated handover cell inside the shared region.
    pub handover_cell: Cell,
    /// Bricks whose pose has been confirmed by a detect skill.
    pub detected: BTreeSet<BrickId>,
    /// Engine clock, milliseconds.
    pub clock_ms: TimeMs,
}

impl WorldState {
    /// Brick occupying `(cell, level)` on the plate, if any.
    pub fn occupant(&self, cell: Cell, level: i32) -> Option<&BrickInstance> {
        self.bricks.values().find(|b| match b.location {
            BrickLocation::OnPlate(at) => {
                at.level == level
                    && Placement::new(b.brick_type, b.orientation, at)
                        .footprint()
                        .contains(&cell)
            }
            _ => false,
        })
    }

    /// True if any placed brick covers `cell` at any level.
    pub fn cell_occupied(&self, cell: Cell) -> bool {
        self.bricks.values().any(|b| match b.location {
            BrickLocation::OnPlate(at) => Placement::new(b.brick_type, b.orientation, at)
                .footprint()
                .contains(&cell),
            _ => false,
        })
    }

    /// Current plate-plane cell of a brick: its placement anchor, the
    /// holder's end effector, or its store cell.
    pub fn brick_cell(&self, id: &BrickId) -> Option<Cell> {
        let b = self.bricks.get(id)?;
        Some(match &b.location {
            BrickLocation::OnPlate(at) => at.xy(),
            BrickLocation::InHand(r) => self.robots.get(r).map(|r| r.eef_cell)?,
            BrickLocation::InStore(c) => *c,
        })
    }

    /// Validate structural invariants: unique (cell, level) occupancy and
    /// holding consistency. Returns the first violation found.
    pub fn validate(&self) -> Result<(), String> {
        let mut seen: BTreeMap<(Cell, i32), BrickId> = BTreeMap::new();
        for b in self.bricks.values() {
            if let BrickLocation::OnPlate(at) = b.location {
                let p = Placement::new(b.brick_type, b.orientation, at);
                for cell in p.footprint() {
                    if !self.plate.contains(cell) {
                        return Err(format!("brick {} leaves the plate at {cell}", b.id));
                    }
                    if let Some(other) = seen.insert((cell, at.level), b.id.clone()) {
                        return Err(format!(
                            "bricks {} and {} overlap at {cell} level {}",
                            other, b.id, at.level
                        ));
                    }
                }
            }
        }
        for r in self.robots.values() {
            if let Some(held) = &r.holding {
                match self.bricks.get(held).map(|b| &b.location) {
                    Some(BrickLocation::InHand(holder)) if holder == &r.id => {}
                    _ => return Err(format!("robot {} holding state is inconsistent", r.id)),
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brick_type_parses() {
        let t: BrickType = "2x4".to_string().try_into().unwrap();
        assert_eq!(t, BrickType::new(2, 4));
        assert_eq!(t.area(), 8);
        assert_eq!(t.min_extent(), 2);
        assert!(BrickType::try_from("2by4".to_string()).is_err());
        assert!(BrickType::try_from("0x4".to_string()).is_err());
    }

    #[test]
    fn placement_footprint_respects_orientation() {
        let p = Placement::new(BrickType::new(2, 4), Orientation::Deg0, Cell3::new(1, 1, 0));
        assert_eq!(p.extents(), (4, 2));
        assert_eq!(p.footprint().len(), 8);
        assert!(p.footprint().contains(&Cell::new(4, 2)));
        let r = Placement::new(BrickType::new(2, 4), Orientation::Deg90, Cell3::new(1, 1, 0));
        assert_eq!(r.extents(), (2, 4));
        assert!(r.footprint().contains(&Cell::new(2, 4)));
    }
}
