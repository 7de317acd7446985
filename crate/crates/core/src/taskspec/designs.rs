//! Built-in bench worlds and assembly designs.
//!
//! The four designs (faucet, fish, vessel, guitar) are tower-based layouts
//! sized at 14, 29, 36, and 24 bricks. Steps interleave across towers so a
//! two-arm bench can work them in parallel; overhanging features use
//! relative shift constraints and need a support arm.

use crate::taskspec::{AssemblyStep, Relation, StepTarget, TaskSpec};
use crate::world::config::{BrickConfig, RobotConfig, WorldConfig};
use crate::world::types::{BrickType, Cell3, CellRect, GripperKind, Orientation, Plate};

fn t2x4() -> BrickType {
    BrickType::new(2, 4)
}

fn t2x2() -> BrickType {
    BrickType::new(2, 2)
}

/// The standard two-arm bench world: 48x48 plate, r1 (parallel) on the
/// left, r2 (suction) on the right, shared band x16..=31, stores for
/// twenty-eight 2x4 and sixteen 2x2 bricks split between the sides.
pub fn bench_world() -> WorldConfig {
    let mut bricks = Vec::new();
    let mut quad = 0;
    for (x0, prefix_range) in [(1, 0), (41, 14)] {
        for col in 0..2 {
            for row in 0..7 {
                quad += 1;
                let n = prefix_range + (quad - 1) % 14 + 1;
                bricks.push(BrickConfig {
                    id: format!("b{n:02}").as_str().into(),
                    brick_type: t2x4(),
                    store: [x0 + col * 5, 1 + row * 3],
                    orientation: Orientation::Deg0,
                });
            }
        }
    }
    let squares_left = [
        [1, 40], [1, 43], [1, 46], [6, 40], [6, 43], [6, 46], [11, 40], [11, 43],
    ];
    let squares_right = [
        [41, 40], [41, 43], [41, 46], [46, 40], [46, 43], [46, 46], [36, 40], [36, 43],
    ];
    for (i, store) in squares_left.iter().chain(squares_right.iter()).enumerate() {
        bricks.push(BrickConfig {
            id: format!("c{:02}", i + 1).as_str().into(),
            brick_type: t2x2(),
            store: *store,
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
                id: "r1".into(),
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
                id: "r2".into(),
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

/// A bench with disjoint arm workspaces (no shared band); used to measure
/// pure two-lane parallelism.
pub fn disjoint_world() -> WorldConfig {
    let mut cfg = bench_world();
    cfg.robots[0].region = vec![CellRect {
        x0: 0,
        y0: 0,
        x1: 22,
        y1: 47,
    }];
    cfg.robots[1].region = vec![CellRect {
        x0: 25,
        y0: 0,
        x1: 47,
        y1: 47,
    }];
    cfg.robots[1].home = [40, 24];
    cfg
}

/// Six ground placements, three per exclusive zone.
pub fn disjoint_task() -> TaskSpec {
    let mut steps = Vec::new();
    let spots = [
        (4, 10),
        (30, 10),
        (4, 20),
        (30, 20),
        (4, 30),
        (30, 30),
    ];
    for (i, (x, y)) in spots.iter().enumerate() {
        steps.push(AssemblyStep {
            index: i + 1,
            brick_type: t2x4(),
            target: StepTarget::Absolute(Cell3::new(*x, *y, 0)),
            meta_hint: None,
        });
    }
    TaskSpec {
        design_name: "disjoint".to_string(),
        steps,
    }
}

/// A vertical tower of same-type bricks; steps above the base align to the
/// previous one.
struct Tower {
    x: i32,
    y: i32,
    brick: BrickType,
    height: usize,
}

/// An overhanging feature: one shifted brick on top of a tower, then
/// aligned bricks stacked on the shifted one.
struct Shift {
    tower: usize,
    relation: Relation,
    extra_aligned: usize,
}

fn build_design(name: &str, towers: &[Tower], shifts: &[Shift]) -> TaskSpec {
    let mut steps: Vec<AssemblyStep> = Vec::new();
    let mut last_step_of_tower: Vec<Option<usize>> = vec![None; towers.len()];
    let mut remaining: Vec<usize> = towers.iter().map(|t| t.height).collect();
    // interleave towers round-robin so lanes can run in parallel
    while remaining.iter().any(|r| *r > 0) {
        for (ti, tower) in towers.iter().enumerate() {
            if remaining[ti] == 0 {
                continue;
            }
            remaining[ti] -= 1;
            let index = steps.len() + 1;
            let target = match last_step_of_tower[ti] {
                None => StepTarget::Absolute(Cell3::new(tower.x, tower.y, 0)),
                Some(anchor) => StepTarget::Relative {
                    anchor,
                    relation: Relation::AlignedCenter,
                },
            };
            steps.push(AssemblyStep {
                index,
                brick_type: tower.brick,
                target,
                meta_hint: None,
            });
            last_step_of_tower[ti] = Some(index);
        }
    }
    for shift in shifts {
        let anchor = last_step_of_tower[shift.tower].expect("shift on an empty tower");
        let brick = towers[shift.tower].brick;
        let index = steps.len() + 1;
        steps.push(AssemblyStep {
            index,
            brick_type: brick,
            target: StepTarget::Relative {
                anchor,
                relation: shift.relation,
            },
            meta_hint: Some("PickPlacewSupport".to_string()),
        });
        let mut prev = index;
        for _ in 0..shift.extra_aligned {
            let index = steps.len() + 1;
            steps.push(AssemblyStep {
                index,
                brick_type: brick,
                target: StepTarget::Relative {
                    anchor: prev,
                    relation: Relation::AlignedCenter,
                },
                meta_hint: None,
            });
            prev = index;
        }
    }
    TaskSpec {
        design_name: name.to_string(),
        steps,
    }
}

/// Faucet, 14 bricks: two shared-band columns, an overhung spout, and two
/// side posts.
pub fn faucet() -> TaskSpec {
    build_design(
        "faucet",
        &[
            Tower { x: 20, y: 20, brick: t2x4(), height: 4 },
            Tower { x: 20, y: 26, brick: t2x4(), height: 3 },
            Tower { x: 10, y: 6, brick: t2x2(), height: 2 },
            Tower { x: 34, y: 6, brick: t2x2(), height: 2 },
        ],
        &[Shift {
            tower: 0,
            relation: Relation::ShiftedLeft,
            extra_aligned: 2,
        }],
    )
}

/// Fish, 29 bricks: a three-column body, an overhung fin, side tails, and
/// square scales.
pub fn fish() -> TaskSpec {
    build_design(
        "fish",
        &[
            Tower { x: 18, y: 20, brick: t2x4(), height: 5 },
            Tower { x: 18, y: 26, brick: t2x4(), height: 5 },
            Tower { x: 24, y: 23, brick: t2x4(), height: 4 },
            Tower { x: 8, y: 14, brick: t2x4(), height: 2 },
            Tower { x: 8, y: 30, brick: t2x4(), height: 2 },
            Tower { x: 34, y: 14, brick: t2x2(), height: 3 },
            Tower { x: 34, y: 30, brick: t2x2(), height: 3 },
            Tower { x: 12, y: 38, brick: t2x2(), height: 3 },
        ],
        &[Shift {
            tower: 2,
            relation: Relation::ShiftedRight,
            extra_aligned: 1,
        }],
    )
}

/// Vessel, 36 bricks: a four-column hull and four corner posts.
pub fn vessel() -> TaskSpec {
    build_design(
        "vessel",
        &[
            Tower { x: 16, y: 20, brick: t2x4(), height: 6 },
            Tower { x: 22, y: 20, brick: t2x4(), height: 6 },
            Tower { x: 16, y: 26, brick: t2x4(), height: 6 },
            Tower { x: 22, y: 26, brick: t2x4(), height: 6 },
            Tower { x: 10, y: 6, brick: t2x2(), height: 3 },
            Tower { x: 10, y: 38, brick: t2x2(), height: 3 },
            Tower { x: 38, y: 6, brick: t2x2(), height: 3 },
            Tower { x: 38, y: 38, brick: t2x2(), height: 3 },
        ],
        &[],
    )
}

/// Guitar, 24 bricks: body columns, an overhung neck, a head block, and
/// two peg posts.
pub fn guitar() -> TaskSpec {
    build_design(
        "guitar",
        &[
            Tower { x: 18, y: 22, brick: t2x4(), height: 4 },
            Tower { x: 24, y: 22, brick: t2x4(), height: 4 },
            Tower { x: 18, y: 28, brick: t2x4(), height: 2 },
            Tower { x: 8, y: 38, brick: t2x4(), height: 4 },
            Tower { x: 36, y: 22, brick: t2x2(), height: 4 },
            Tower { x: 36, y: 30, brick: t2x2(), height: 4 },
        ],
        &[Shift {
            tower: 2,
            relation: Relation::ShiftedLeft,
            extra_aligned: 1,
        }],
    )
}

/// All four golden designs.
pub fn golden_designs() -> Vec<TaskSpec> {
    vec![faucet(), fish(), vessel(), guitar()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskspec::{ground_relative, validate_inventory, Inventory};
    use crate::world::types::{Placement, WorldState};
    use crate::world::{check_stability, fully_supported};
    use std::collections::BTreeMap;

    #[test]
    fn design_sizes_are_fixed() {
        assert_eq!(faucet().steps.len(), 14);
        assert_eq!(fish().steps.len(), 29);
        assert_eq!(vessel().steps.len(), 36);
        assert_eq!(guitar().steps.len(), 24);
    }

    #[test]
    fn bench_inventory_covers_every_design() {
        let z = bench_world().build().unwrap();
        let inv = Inventory::from_world(&z);
        for design in golden_designs() {
            let report = validate_inventory(&design, &inv);
            assert!(report.ok, "{} lacks bricks: {:?}", design.design_name, report.deficits);
        }
    }

    /// Place each design step by step (ignoring robots) and check the
    /// stability rule holds at every placement; shifted steps must be
    /// stable but not fully supported.
    #[test]
    fn designs_are_stable_in_order() {
        let z0 = bench_world().build().unwrap();
        for design in golden_designs() {
            let mut placed: BTreeMap<usize, Cell3> = BTreeMap::new();
            let mut z: WorldState = z0.clone();
            let mut scratch = 0;
            for step in &design.steps {
                let at = ground_relative(step, &placed).unwrap();
                let p = Placement::new(step.brick_type, Orientation::Deg0, at);
                assert!(
                    check_stability(&z, &p),
                    "{} step {} unstable at {at}",
                    design.design_name,
                    step.index
                );
                if step.meta_hint.as_deref() == Some("PickPlacewSupport") {
                    assert!(!fully_supported(&z, &p), "{} step {} should overhang", design.design_name, step.index);
                }
                for c in p.footprint() {
                    assert!(z.plate.contains(c), "{} step {} leaves plate", design.design_name, step.index);
                    assert!(z.occupant(c, at.level).is_none(), "{} step {} overlaps", design.design_name, step.index);
                }
                // drop a phantom brick so later stability checks see it
                scratch += 1;
                let id: crate::ids::BrickId = format!("ph{scratch}").as_str().into();
                z.bricks.insert(
                    id.clone(),
                    crate::world::types::BrickInstance {
                        id,
                        brick_type: step.brick_type,
                        orientation: Orientation::Deg0,
                        location: crate::world::types::BrickLocation::OnPlate(at),
                        wear_count: 0,
                        store_cell: Cell3::new(0, 0, 0).xy(),
                        pose_offset_um: (0, 0),
                    },
                );
                placed.insert(step.index, at);
            }
        }
    }

    #[test]
    fn shifted_steps_sit_in_the_shared_band() {
        let z = bench_world().build().unwrap();
        let shared: Vec<i32> = (0..48)
            .filter(|x| {
                z.robots.values().all(|r| r.base_region.contains(crate::world::types::Cell::new(*x, 24)))
            })
            .collect();
        for design in golden_designs() {
            let mut placed = BTreeMap::new();
            for step in &design.steps {
                let at = ground_relative(step, &placed).unwrap();
                placed.insert(step.index, at);
                if step.meta_hint.as_deref() == Some("PickPlacewSupport") {
                    assert!(shared.contains(&at.x), "{} support site x={} not shared", design.design_name, at.x);
                }
            }
        }
    }
}
