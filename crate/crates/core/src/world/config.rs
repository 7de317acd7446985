//! World configuration files: plate size, robot regions, gripper kinds,
//! and brick inventory with store positions.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ids::{BrickId, RobotId};
use crate::world::types::{
    BrickInstance, BrickLocation, BrickType, Cell, CellRect, GripperKind, Orientation, Plate,
    Region, RobotState, WorldState,
};
use crate::world::WorldError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobotConfig {
    pub id: RobotId,
    pub gripper: GripperKind,
    /// Maximum graspable brick extent for parallel grippers, in studs.
    #[serde(default = "default_grip")]
    pub max_grip_studs: u8,
    /// Initial end-effector cell.
    pub home: [i32; 2],
    pub region: Vec<CellRect>,
}

fn default_grip() -> u8 {
    2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BrickConfig {
    pub id: BrickId,
    #[serde(rename = "type")]
    pub brick_type: BrickType,
    pub store: [i32; 2],
    #[serde(default)]
    pub orientation: Orientation,
}

/// A declarative world description; `build` turns it into the initial
/// state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldConfig {
    pub plate: Plate,
    pub handover_cell: [i32; 2],
    pub robots: Vec<RobotConfig>,
    pub bricks: Vec<BrickConfig>,
}

impl WorldConfig {
    pub fn from_json(s: &str) -> Result<Self, WorldError> {
        serde_json::from_str(s).map_err(|e| WorldError::BadConfig(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self, WorldError> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| WorldError::BadConfig(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn build(&self) -> Result<WorldState, WorldError> {
        let mut robots = BTreeMap::new();
        for rc in &self.robots {
            let home = Cell::new(rc.home[0], rc.home[1]);
            let region = Region(rc.region.clone());
            if !region.contains(home) {
                return Err(WorldError::BadConfig(format!(
                    "robot {} home {home} is outside its region",
                    rc.id
                )));
            }
            robots.insert(
                rc.id.clone(),
                RobotState {
                    id: rc.id.clone(),
                    base_region: region,
                    holding: None,
                    eef_cell: home,
                    gripper: rc.gripper,
                    max_grip_studs: rc.max_grip_studs,
                    supporting: None,
                },
            );
        }
        let mut bricks = BTreeMap::new();
        let mut stores = BTreeSet::new();
        for bc in &self.bricks {
            let store = Cell::new(bc.store[0], bc.store[1]);
            if !self.plate.contains(store) {
                return Err(WorldError::BadConfig(format!(
                    "brick {} store {store} is off the plate",
                    bc.id
                )));
            }
            if !stores.insert(store) {
                return Err(WorldError::BadConfig(format!(
                    "two bricks share store cell {store}"
                )));
            }
            if bricks
                .insert(
                    bc.id.clone(),
                    BrickInstance {
                        id: bc.id.clone(),
                        brick_type: bc.brick_type,
                        orientation: bc.orientation,
                        location: BrickLocation::InStore(store),
                        wear_count: 0,
                        store_cell: store,
                        pose_offset_um: (0, 0),
                    },
                )
                .is_some()
            {
                return Err(WorldError::BadConfig(format!("duplicate brick id {}", bc.id)));
            }
        }
        let handover = Cell::new(self.handover_cell[0], self.handover_cell[1]);
        let state = WorldState {
            plate: self.plate,
            bricks,
            robots,
            handover_cell: handover,
            detected: BTreeSet::new(),
            clock_ms: 0,
        };
        if !self.plate.contains(handover) {
            return Err(WorldError::BadConfig(
                "handover cell must lie on the plate".to_string(),
            ));
        }
        state.validate().map_err(WorldError::BadConfig)?;
        Ok(state)
    }

    /// A 48x48 two-arm bench: r1 (parallel gripper) works the left side,
    /// r2 (suction) the right, overlapping in a central shared band.
    /// `bricks_per_side` 2x4 bricks are stored along each edge, plus four
    /// 2x2 bricks per side.
    pub fn two_arm_demo(bricks_per_side: usize) -> WorldConfig {
        let mut bricks = Vec::new();
        let mut n = 0;
        for i in 0..bricks_per_side {
            n += 1;
            bricks.push(BrickConfig {
                id: BrickId::from(format!("b{n}").as_str()),
                brick_type: BrickType::new(2, 4),
                store: [2 + (i as i32 % 2) * 5, 2 + (i as i32 / 2) * 3],
                orientation: Orientation::Deg0,
            });
        }
        for i in 0..bricks_per_side {
            n += 1;
            bricks.push(BrickConfig {
                id: BrickId::from(format!("b{n}").as_str()),
                brick_type: BrickType::new(2, 4),
                store: [41 + (i as i32 % 2) * 5, 2 + (i as i32 / 2) * 3],
                orientation: Orientation::Deg0,
            });
        }
        for i in 0..4usize {
            n += 1;
            bricks.push(BrickConfig {
                id: BrickId::from(format!("b{n}").as_str()),
                brick_type: BrickType::new(2, 2),
                store: [2 + (i as i32) * 3, 44],
                orientation: Orientation::Deg0,
            });
            n += 1;
            bricks.push(BrickConfig {
                id: BrickId::from(format!("b{n}").as_str()),
                brick_type: BrickType::new(2, 2),
                store: [34 + (i as i32) * 3, 44],
                orientation: Orientation::Deg0,
            });
        }
        WorldConfig {
            plate: Plate {
                width: 48,
                height: 48,
            },
            handover_cell: [24, 24],
            robots: vec![
                RobotConfig {
                    id: RobotId::from("r1"),
                    gripper: GripperKind::Parallel,
                    max_grip_studs: 2,
                    home: [8, 24],
                    region: vec![CellRect {
                        x0: 0,
                        y0: 0,
                        x1: 31,
                        y1: 47,
                    }],
                },
                RobotConfig {
                    id: RobotId::from("r2"),
                    gripper: GripperKind::Suction,
                    max_grip_studs: 2,
                    home: [40, 24],
                    region: vec![CellRect {
                        x0: 16,
                        y0: 0,
                        x1: 47,
                        y1: 47,
                    }],
                },
            ],
            bricks,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::bucket_of;
    use crate::skill::types::Bucket;

    #[test]
    fn demo_world_builds_and_validates() {
        let z = WorldConfig::two_arm_demo(4).build().unwrap();
        assert_eq!(z.robots.len(), 2);
        assert!(z.bricks.len() >= 8);
        assert!(z.validate().is_ok());
    }

    #[test]
    fn regions_partition_into_buckets() {
        let z = WorldConfig::two_arm_demo(2).build().unwrap();
        assert_eq!(bucket_of(&z, Cell::new(2, 2)), Bucket::Exclusive("r1".into()));
        assert_eq!(bucket_of(&z, Cell::new(45, 2)), Bucket::Exclusive("r2".into()));
        assert_eq!(bucket_of(&z, Cell::new(24, 24)), Bucket::Shared);
        // shared-region cell reachable by both arms
        assert!(crate::world::reachable(&z, &"r1".into(), Cell::new(24, 24)).unwrap());
        assert!(crate::world::reachable(&z, &"r2".into(), Cell::new(24, 24)).unwrap());
        assert!(!crate::world::reachable(&z, &"r2".into(), Cell::new(2, 2)).unwrap());
        assert!(crate::world::reachable(&z, &"missing".into(), Cell::new(0, 0)).is_err());
    }

    #[test]
    fn bad_configs_are_rejected() {
        let mut cfg = WorldConfig::two_arm_demo(2);
        cfg.bricks[1].store = cfg.bricks[0].store;
        assert!(matches!(cfg.build(), Err(WorldError::BadConfig(_))));

        let mut cfg = WorldConfig::two_arm_demo(2);
        cfg.handover_cell = [99, 99]; // off the plate
        assert!(cfg.build().is_err());
    }
}
