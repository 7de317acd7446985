//! Deterministic effect application for atomic skills.
//!
//! `effect_image` is the forcing transform: it rewrites the state so the
//! skill's post-condition holds, without checking preconditions. It backs
//! both edge-feasibility checks and recovery. `apply_effect` is the guarded
//! version used by planning simulation and execution.

use crate::ids::{secs_to_ms, DurationMs};
use crate::skill::condition::BindingValue;
use crate::skill::types::{Skill, Verb};
use crate::world::motion::{sweep_cells, TrajSegment, Trajectory};
use crate::world::types::{BrickLocation, Cell, Cell3, WorldState};
use crate::world::WorldError;

fn bound_cell(skill: &Skill, name: &str) -> Option<Cell> {
    match skill.binding(name) {
        Some(BindingValue::Cell(c)) => Some(*c),
        Some(BindingValue::Cell3(c)) => Some(c.xy()),
        _ => None,
    }
}

fn bound_cell3(skill: &Skill, name: &str) -> Option<Cell3> {
    match skill.binding(name) {
        Some(BindingValue::Cell3(c)) => Some(*c),
        _ => None,
    }
}

/// Apply the verb's canonical state change unconditionally. Unbound pieces
/// are skipped; the result is always structurally consistent for bound
/// inputs. The clock is not advanced here.
pub fn effect_image(z: &WorldState, skill: &Skill) -> WorldState {
    let mut out = z.clone();
    match &skill.verb {
        Verb::Transit => {
            if let (Some(robot), Some(to)) = (skill.actor(), bound_cell(skill, "to")) {
                if let Some(r) = out.robots.get_mut(&robot) {
                    r.eef_cell = to;
                }
            }
        }
        Verb::Pick => {
            if let (Some(robot), Some(brick)) = (skill.actor(), skill.object()) {
                let grasp_cell = out.brick_cell(&brick);
                // force any current holder to release
                for r in out.robots.values_mut() {
                    if r.holding.as_ref() == Some(&brick) {
                        r.holding = None;
                    }
                }
                if let Some(b) = out.bricks.get_mut(&brick) {
                    b.location = BrickLocation::InHand(robot.clone());
                    b.wear_count += 1;
                }
                if let Some(r) = out.robots.get_mut(&robot) {
                    r.holding = Some(brick.clone());
                    if let Some(c) = grasp_cell {
                        r.eef_cell = c;
                    }
                }
            }
        }
        Verb::PlaceDown | Verb::PlaceUp => {
            if let (Some(robot), Some(brick), Some(target)) =
                (skill.actor(), skill.object(), bound_cell3(skill, "target"))
            {
                for r in out.robots.values_mut() {
                    if r.holding.as_ref() == Some(&brick) {
                        r.holding = None;
                    }
                }
                if let Some(b) = out.bricks.get_mut(&brick) {
                    b.location = BrickLocation::OnPlate(target);
                }
                if let Some(r) = out.robots.get_mut(&robot) {
                    r.eef_cell = target.xy();
                }
            }
        }
        Verb::SupportUp => {
            if let (Some(robot), Some(at)) = (skill.actor(), bound_cell(skill, "at")) {
                if let Some(r) = out.robots.get_mut(&robot) {
                    r.supporting = Some(at);
                    r.eef_cell = at;
                }
            }
        }
        Verb::SupportDown => {
            if let Some(robot) = skill.actor() {
                if let Some(r) = out.robots.get_mut(&robot) {
                    r.supporting = None;
                }
            }
        }
        Verb::Handover => {
            let robots = skill.robot_params();
            let giver = robots.first().and_then(|n| skill.bound_robot(n));
            let taker = robots.get(1).and_then(|n| skill.bound_robot(n));
            if let (Some(giver), Some(taker), Some(brick)) = (giver, taker, skill.object()) {
                let at = bound_cell(skill, "at").unwrap_or(z.handover_cell);
                if let Some(b) = out.bricks.get_mut(&brick) {
                    b.location = BrickLocation::InHand(taker.clone());
                }
                if let Some(g) = out.robots.get_mut(&giver) {
                    g.holding = None;
                    g.eef_cell = at;
                }
                if let Some(t) = out.robots.get_mut(&taker) {
                    t.holding = Some(brick.clone());
                    t.eef_cell = at;
                }
            }
        }
        Verb::Detect => {
            if let Some(brick) = skill.object() {
                out.detected.insert(brick);
            }
        }
        // Custom verbs are belief-only: no world change.
        Verb::Custom(_) => {}
    }
    out
}

/// Policy-determined duration of one atomic skill at state `z`: transit
/// scales with swept distance, everything else runs at the nominal duration
/// times the active variant's multiplier.
pub fn effective_duration_ms(z: &WorldState, skill: &Skill) -> DurationMs {
    let mult = skill.policy.active_variant().duration_multiplier;
    match &skill.verb {
        Verb::Transit => {
            let cells = transit_path(z, skill).len().max(1) as f64;
            let per_cell = skill.policy.cell_time_s();
            secs_to_ms(cells * per_cell * mult).max(1)
        }
        _ => ((skill.policy.nominal_duration_ms() as f64 * mult).round() as DurationMs).max(1),
    }
}

/// Cells a transit sweeps from the robot's current end-effector cell to its
/// bound destination.
pub fn transit_path(z: &WorldState, skill: &Skill) -> Vec<Cell> {
    let from = skill
        .actor()
        .and_then(|r| z.robots.get(&r))
        .map(|r| r.eef_cell);
    let to = bound_cell(skill, "to");
    match (from, to) {
        (Some(from), Some(to)) => sweep_cells(from, to),
        _ => Vec::new(),
    }
}

/// Build the timed trajectory for a transit at state `z`, one segment per
/// swept cell (callers may merge segments by zone).
pub fn transit_trajectory(z: &WorldState, skill: &Skill) -> Trajectory {
    let mult = skill.policy.active_variant().duration_multiplier;
    let per_cell = secs_to_ms(skill.policy.cell_time_s() * mult).max(1);
    let segments = transit_path(z, skill)
        .into_iter()
        .map(|c| TrajSegment {
            cells: [c].into_iter().collect(),
            duration_ms: per_cell,
        })
        .collect::<Vec<_>>();
    Trajectory::new(segments)
}

/// Guarded effect application: checks the skill's precondition, applies the
/// canonical effect, validates structural invariants, and advances the
/// clock by the policy-determined duration.
pub fn apply_effect(z: &WorldState, skill: &Skill) -> Result<WorldState, WorldError> {
    apply_effect_with_duration(z, skill, effective_duration_ms(z, skill))
}

/// `apply_effect` with an externally supplied duration (planner simulation
/// substitutes evaluator costs here).
pub fn apply_effect_with_duration(
    z: &WorldState,
    skill: &Skill,
    duration_ms: DurationMs,
) -> Result<WorldState, WorldError> {
    if let Some(atom) = skill.pre.first_failure(z) {
        return Err(WorldError::PreconditionViolated(format!(
            "{}: {atom}",
            skill.name
        )));
    }
    let mut out = effect_image(z, skill);
    out.validate().map_err(WorldError::PreconditionViolated)?;
    out.clock_ms = z.clock_ms + duration_ms;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skill::library;
    use crate::world::config::WorldConfig;

    fn setup() -> (WorldState, library::SkillLibrary) {
        let z = WorldConfig::two_arm_demo(4).build().unwrap();
        let lib = library::builtin();
        (z, lib)
    }

    #[test]
    fn pick_moves_brick_to_hand() {
        let (z, lib) = setup();
        let pick = lib.ground_atomic("pick", &z, &[("robot", "r1"), ("brick", "b1")]);
        let next = apply_effect(&z, &pick).unwrap();
        assert_eq!(next.bricks["b1"].location, BrickLocation::InHand("r1".into()));
        assert_eq!(next.robots["r1"].holding, Some("b1".into()));
        assert_eq!(next.bricks["b1"].wear_count, z.bricks["b1"].wear_count + 1);
        assert!(next.clock_ms > z.clock_ms);
    }

    #[test]
    fn place_without_holding_violates_precondition() {
        let (z, lib) = setup();
        let mut place = lib.ground_atomic("place_down", &z, &[("robot", "r1"), ("brick", "b1")]);
        let target = Cell3::new(20, 20, 0);
        let mut b = crate::skill::condition::Bindings::new();
        b.insert("target".into(), BindingValue::Cell3(target));
        place = place.substitute(&b);
        let err = apply_effect(&z, &place).unwrap_err();
        match err {
            WorldError::PreconditionViolated(msg) => assert!(msg.contains("Holding")),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn effect_is_a_pure_function_of_inputs() {
        let (z, lib) = setup();
        let pick = lib.ground_atomic("pick", &z, &[("robot", "r1"), ("brick", "b1")]);
        let a = apply_effect(&z, &pick).unwrap();
        let b = apply_effect(&z, &pick).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn transit_duration_scales_with_distance() {
        let (z, lib) = setup();
        let near = {
            let eef = z.robots["r1"].eef_cell;
            lib.ground_transit("r1", Cell::new(eef.x + 2, eef.y), &z)
        };
        let far = lib.ground_transit("r1", Cell::new(30, 40), &z);
        assert!(effective_duration_ms(&z, &far) > effective_duration_ms(&z, &near));
    }
}
