//! The shared state space: discretized brick world, deterministic skill
//! effects, reachability, stability, and trajectory occupancy.

pub mod config;
pub mod effects;
pub mod motion;
pub mod types;

pub use config::WorldConfig;
pub use effects::{apply_effect, effect_image, effective_duration_ms};
pub use motion::{occupancy, sweep_cells, CellInterval, TrajSegment, Trajectory};
pub use types::{
    BrickInstance, BrickLocation, BrickType, Cell, Cell3, CellRect, GripperKind, Orientation,
    Placement, Plate, Region, RobotState, WorldState,
};

use crate::ids::RobotId;
use crate::skill::types::Bucket;

/// Errors raised by world operations.
#[derive(Debug, Clone, thiserror::Error)]
pub enum WorldError {
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("unknown robot {0}")]
    UnknownRobot(RobotId),
    #[error("invalid world configuration: {0}")]
    BadConfig(String),
}

/// Majority-stud support rule: a placement is stable when it rests on the
/// plate, or when at least half its studs (rounded up) are backed by bricks
/// one level below.
pub fn check_stability(z: &WorldState, placement: &Placement) -> bool {
    if placement.at.level == 0 {
        return placement.footprint().iter().all(|c| z.plate.contains(*c));
    }
    let cells = placement.footprint();
    let needed = (cells.len() as u32).div_ceil(2);
    let supported = cells
        .iter()
        .filter(|c| z.occupant(**c, placement.at.level - 1).is_some())
        .count() as u32;
    supported >= needed
}

/// Every stud backed at level-1 (trivially true on the plate). Placements
/// that are stable but not fully supported need an active support arm.
pub fn fully_supported(z: &WorldState, placement: &Placement) -> bool {
    if placement.at.level == 0 {
        return placement.footprint().iter().all(|c| z.plate.contains(*c));
    }
    placement
        .footprint()
        .iter()
        .all(|c| z.occupant(*c, placement.at.level - 1).is_some())
}

/// Whether `robot` can reach `cell`.
pub fn reachable(z: &WorldState, robot: &RobotId, cell: Cell) -> Result<bool, WorldError> {
    let r = z
        .robots
        .get(robot)
        .ok_or_else(|| WorldError::UnknownRobot(robot.clone()))?;
    Ok(r.base_region.contains(cell))
}

/// Classify a cell by which robots reach it.
pub fn bucket_of(z: &WorldState, cell: Cell) -> Bucket {
    let reachers: Vec<&RobotId> = z
        .robots
        .values()
        .filter(|r| r.base_region.contains(cell))
        .map(|r| &r.id)
        .collect();
    match reachers.as_slice() {
        [] => Bucket::Unreachable,
        [only] => Bucket::Exclusive((*only).clone()),
        _ => Bucket::Shared,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::BrickId;
    use std::collections::{BTreeMap, BTreeSet};

    fn flat_world() -> WorldState {
        WorldState {
            plate: Plate {
                width: 48,
                height: 48,
            },
            bricks: BTreeMap::new(),
            robots: BTreeMap::new(),
            handover_cell: Cell::new(24, 24),
            detected: BTreeSet::new(),
            clock_ms: 0,
        }
    }

    fn put_brick(z: &mut WorldState, id: &str, t: BrickType, at: Cell3) {
        z.bricks.insert(
            BrickId::from(id),
            BrickInstance {
                id: BrickId::from(id),
                brick_type: t,
                orientation: Orientation::Deg0,
                location: BrickLocation::OnPlate(at),
                wear_count: 0,
                store_cell: Cell::new(0, 0),
                pose_offset_um: (0, 0),
            },
        );
    }

    #[test]
    fn ground_level_is_always_stable() {
        let z = flat_world();
        let p = Placement::new(BrickType::new(2, 4), Orientation::Deg0, Cell3::new(5, 5, 0));
        assert!(check_stability(&z, &p));
        assert!(fully_supported(&z, &p));
    }

    #[test]
    fn unsupported_level_one_is_unstable() {
        let z = flat_world();
        let p = Placement::new(BrickType::new(2, 2), Orientation::Deg0, Cell3::new(5, 5, 1));
        assert!(!check_stability(&z, &p));
    }

    #[test]
    fn half_supported_2x4_is_stable_at_the_boundary() {
        let mut z = flat_world();
        // 2x4 at (4,10): covers x 4..=7, y 10..=11. Place a second 2x4
        // shifted by half its length: supports exactly 4 of 8 studs.
        put_brick(&mut z, "base", BrickType::new(2, 4), Cell3::new(4, 10, 0));
        let shifted = Placement::new(BrickType::new(2, 4), Orientation::Deg0, Cell3::new(6, 10, 1));
        let support_count = shifted
            .footprint()
            .iter()
            .filter(|c| z.occupant(**c, 0).is_some())
            .count();
        assert_eq!(support_count, 4);
        assert!(check_stability(&z, &shifted));
        assert!(!fully_supported(&z, &shifted));
        // One stud fewer than half: unstable.
        let far = Placement::new(BrickType::new(2, 4), Orientation::Deg0, Cell3::new(7, 10, 1));
        let far_count = far
            .footprint()
            .iter()
            .filter(|c| z.occupant(**c, 0).is_some())
            .count();
        assert_eq!(far_count, 2);
        assert!(!check_stability(&z, &far));
    }

    #[test]
    fn aligned_stack_is_fully_supported() {
        let mut z = flat_world();
        put_brick(&mut z, "base", BrickType::new(2, 4), Cell3::new(4, 10, 0));
        let top = Placement::new(BrickType::new(2, 4), Orientation::Deg0, Cell3::new(4, 10, 1));
        assert!(fully_supported(&z, &top));
        assert!(check_stability(&z, &top));
    }
}
