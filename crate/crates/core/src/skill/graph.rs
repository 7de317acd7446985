//! Concretization, edge feasibility, and skill-graph construction.

use serde::{Deserialize, Serialize};

use crate::ids::BrickId;
use crate::skill::condition::{BindingValue, Bindings};
use crate::skill::types::{
    MetaSkill, NounSet, ObjectRef, ParamKind, Skill, Verb,
};
use crate::skill::ModelError;
use crate::world::effects::effect_image;
use crate::world::types::{Cell, Cell3, GripperKind, Placement, WorldState};

/// A directed graph over concretized skills. An edge `(i, j)` certifies
/// that executing node `i` establishes node `j`'s precondition under at
/// least one reachable state (the witness state used at construction).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkillGraph {
    pub nodes: Vec<Skill>,
    pub edges: Vec<(usize, usize)>,
    pub binding: NounSet,
}

impl SkillGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edges.contains(&(from, to))
    }

    /// Successor node indices of `from`, in node order.
    pub fn successors(&self, from: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|(f, _)| *f == from)
            .map(|(_, t)| *t)
            .collect()
    }
}

/// Bind a skill template's noun parameters to concrete entities.
///
/// Robot slots take robots from `nouns.robots` in order; brick slots take
/// objects from `nouns.objects` in order, resolving categories to the
/// lowest-id unused instance of that type in `z`. Grasp parameters are
/// resolved from the primary robot's gripper. Idempotent for already
/// concrete skills rebound to the same nouns.
pub fn concretize(skill: &Skill, nouns: &NounSet, z: &WorldState) -> Result<Skill, ModelError> {
    let mut bindings = Bindings::new();
    let mut bound_nouns = NounSet {
        robots: Vec::new(),
        objects: Vec::new(),
        workspace: nouns.workspace.clone(),
    };
    let mut next_robot = 0usize;
    let mut used_bricks: Vec<BrickId> = Vec::new();
    let mut next_object = 0usize;

    for param in &skill.params {
        match &param.kind {
            ParamKind::Robot => {
                let r = nouns.robots.get(next_robot).ok_or_else(|| {
                    ModelError::UnresolvedNoun {
                        param: param.name.clone(),
                        reason: "no robot noun left to bind".to_string(),
                    }
                })?;
                if !z.robots.contains_key(r) {
                    return Err(ModelError::UnresolvedNoun {
                        param: param.name.clone(),
                        reason: format!("robot {r} not present in the world"),
                    });
                }
                next_robot += 1;
                bindings.insert(param.name.clone(), BindingValue::Robot(r.clone()));
                bound_nouns.robots.push(r.clone());
            }
            ParamKind::Brick { category } => {
                let obj = nouns.objects.get(next_object).ok_or_else(|| {
                    ModelError::UnresolvedNoun {
                        param: param.name.clone(),
                        reason: "no object noun left to bind".to_string(),
                    }
                })?;
                next_object += 1;
                let id = match obj {
                    ObjectRef::Instance(id) => {
                        let b = z.bricks.get(id).ok_or_else(|| ModelError::UnresolvedNoun {
                            param: param.name.clone(),
                            reason: format!("brick {id} not present in the world"),
                        })?;
                        if let Some(cat) = category {
                            if b.brick_type != *cat {
                                return Err(ModelError::UnresolvedNoun {
                                    param: param.name.clone(),
                                    reason: format!(
                                        "brick {id} is {} but the slot requires {cat}",
                                        b.brick_type
                                    ),
                                });
                            }
                        }
                        id.clone()
                    }
                    ObjectRef::Category(t) => {
                        let want = category.as_ref().unwrap_or(t);
                        z.bricks
                            .values()
                            .find(|b| b.brick_type == *want && !used_bricks.contains(&b.id))
                            .map(|b| b.id.clone())
                            .ok_or_else(|| ModelError::UnresolvedNoun {
                                param: param.name.clone(),
                                reason: format!("no {want} instance available"),
                            })?
                    }
                };
                used_bricks.push(id.clone());
                bindings.insert(param.name.clone(), BindingValue::Brick(id.clone()));
                bound_nouns.objects.push(ObjectRef::Instance(id));
            }
            ParamKind::Cell | ParamKind::Cell3 => {
                // late-bound at expansion time; keep any existing binding
                if let Some(v) = skill.bindings.get(&param.name) {
                    bindings.insert(param.name.clone(), v.clone());
                }
            }
        }
    }

    let mut out = skill.substitute(&bindings);
    out.nouns = bound_nouns;
    if let Some(robot) = out.actor().and_then(|r| z.robots.get(&r).cloned()) {
        let grasp = match robot.gripper {
            GripperKind::Parallel => "side_grasp",
            GripperKind::Suction => "top_suction",
        };
        out.policy
            .parameters
            .insert("grasp".to_string(), serde_json::json!(grasp));
    }
    Ok(out)
}

/// Default witness values for parameters that stay unbound until expansion
/// (transit destinations, support and handover sites, placement targets).
/// Edge feasibility is certified at these witnesses.
pub fn witness_bindings(skill: &Skill, z: &WorldState) -> Bindings {
    let mut out = Bindings::new();
    let actor = skill.actor().and_then(|r| z.robots.get(&r).cloned());
    for param in &skill.params {
        if skill.bindings.contains_key(&param.name) {
            continue;
        }
        match param.kind {
            ParamKind::Cell => {
                let cell = if skill.robot_params().len() >= 2 {
                    z.handover_cell
                } else {
                    region_anchor(&actor, z)
                };
                out.insert(param.name.clone(), BindingValue::Cell(cell));
            }
            ParamKind::Cell3 => {
                let target = free_ground_target(skill, &actor, z)
                    .unwrap_or(Cell3::new(0, 0, 0));
                out.insert(param.name.clone(), BindingValue::Cell3(target));
            }
            _ => {}
        }
    }
    out
}

fn region_anchor(actor: &Option<crate::world::types::RobotState>, z: &WorldState) -> Cell {
    match actor {
        Some(r) => {
            let rect = &r.base_region.0[0];
            Cell::new(rect.x0.max(0), rect.y0.max(0))
        }
        None => Cell::new(z.plate.width / 2, z.plate.height / 2),
    }
}

/// First free ground-level placement inside the actor's region, scanning
/// rows deterministically.
fn free_ground_target(
    skill: &Skill,
    actor: &Option<crate::world::types::RobotState>,
    z: &WorldState,
) -> Option<Cell3> {
    let (brick_type, orientation) = skill
        .object()
        .and_then(|id| z.bricks.get(&id))
        .map(|b| (b.brick_type, b.orientation))?;
    let region = actor.as_ref().map(|r| &r.base_region)?;
    for y in 0..z.plate.height {
        for x in 0..z.plate.width {
            let at = Cell3::new(x, y, 0);
            let p = Placement::new(brick_type, orientation, at);
            let cells = p.footprint();
            let ok = cells.iter().all(|c| {
                z.plate.contains(*c)
                    && region.contains(*c)
                    && z.occupant(*c, 0).is_none()
                    && !z.cell_occupied(*c)
            });
            if ok {
                return Some(at);
            }
        }
    }
    None
}

/// True iff executing `s_i` at `z` establishes `s_j`'s precondition:
/// apply `s_i`'s effect image and evaluate `s_j.pre` on the result.
/// Parameters still unbound on either side are filled with deterministic
/// witnesses. Total: never errors.
pub fn feasible_edge(s_i: &Skill, s_j: &Skill, z: &WorldState) -> bool {
    let wi = witness_bindings(s_i, z);
    let si = s_i.substitute(&wi);
    let image = effect_image(z, &si);
    let wj = witness_bindings(s_j, &image);
    let sj = s_j.substitute(&wj);
    sj.pre.eval(&image)
}

/// Concretize every library skill against all valid noun bindings and
/// connect every pair passing [`feasible_edge`] at `z0`. Deterministic for
/// equal inputs.
pub fn build_graph(
    library: &[Skill],
    nouns: &NounSet,
    z0: &WorldState,
) -> Result<SkillGraph, ModelError> {
    let mut nodes = Vec::new();
    for skill in library {
        for combo in noun_combinations(skill, nouns) {
            nodes.push(concretize(skill, &combo, z0)?);
        }
    }
    let mut edges = Vec::new();
    for i in 0..nodes.len() {
        for j in 0..nodes.len() {
            if feasible_edge(&nodes[i], &nodes[j], z0) {
                edges.push((i, j));
            }
        }
    }
    Ok(SkillGraph {
        nodes,
        edges,
        binding: nouns.clone(),
    })
}

/// All ordered assignments of the skill's robot and brick slots to the
/// provided nouns (distinct robots, distinct objects), in deterministic
/// order.
pub fn noun_combinations(skill: &Skill, nouns: &NounSet) -> Vec<NounSet> {
    let robot_slots = skill.robot_params().len();
    let brick_slots = skill.brick_params().len();
    let robot_combos = ordered_selections(nouns.robots.len(), robot_slots);
    let object_combos = ordered_selections(nouns.objects.len(), brick_slots);
    let mut out = Vec::new();
    for rc in &robot_combos {
        for oc in &object_combos {
            out.push(NounSet {
                robots: rc.iter().map(|&i| nouns.robots[i].clone()).collect(),
                objects: oc.iter().map(|&i| nouns.objects[i].clone()).collect(),
                workspace: nouns.workspace.clone(),
            });
        }
    }
    out
}

/// Ordered selections of `k` distinct indices out of `n`, lexicographic.
fn ordered_selections(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, k: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == k {
            out.push(prefix.clone());
            return;
        }
        for i in 0..n {
            if !prefix.contains(&i) {
                prefix.push(i);
                rec(n, k, prefix, out);
                prefix.pop();
            }
        }
    }
    let mut out = Vec::new();
    rec(n, k, &mut Vec::new(), &mut out);
    out
}

/// Expand a meta skill into its ordered atomic sequence under the given
/// parameter bindings. Deterministic; fails if any body-referenced meta
/// parameter is unbound.
pub fn expand_meta(meta: &MetaSkill, bindings: &Bindings) -> Result<Vec<Skill>, ModelError> {
    for p in &meta.skill.params {
        if !bindings.contains_key(&p.name) {
            return Err(ModelError::MissingBinding(p.name.clone()));
        }
    }
    let mut out = Vec::with_capacity(meta.body.len());
    for step in &meta.body {
        let mut atom_bindings = Bindings::new();
        for (atom_param, meta_param) in &step.bind {
            let value = bindings
                .get(meta_param)
                .ok_or_else(|| ModelError::MissingBinding(meta_param.clone()))?;
            atom_bindings.insert(atom_param.clone(), value.clone());
        }
        let mut atom = step.atom.substitute(&atom_bindings);
        // expansion-time nouns for record keeping
        atom.nouns = NounSet {
            robots: atom
                .robot_params()
                .iter()
                .filter_map(|n| atom.bound_robot(n))
                .collect(),
            objects: atom
                .brick_params()
                .iter()
                .filter_map(|n| atom.bound_brick(n))
                .map(ObjectRef::Instance)
                .collect(),
            workspace: meta.skill.nouns.workspace.clone(),
        };
        if let Some(grasp) = meta.skill.policy.parameters.get("grasp") {
            if atom.verb == Verb::Pick {
                atom.policy
                    .parameters
                    .insert("grasp".to_string(), grasp.clone());
            }
        }
        out.push(atom);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skill::library;
    use crate::world::config::WorldConfig;

    fn setup() -> (WorldState, library::SkillLibrary) {
        (
            WorldConfig::two_arm_demo(2).build().unwrap(),
            library::builtin(),
        )
    }

    fn nouns(robots: &[&str], bricks: &[&str]) -> NounSet {
        NounSet {
            robots: robots.iter().map(|r| (*r).into()).collect(),
            objects: bricks
                .iter()
                .map(|b| ObjectRef::Instance((*b).into()))
                .collect(),
            workspace: "bench".to_string(),
        }
    }

    #[test]
    fn concretize_binds_and_is_idempotent() {
        let (z, lib) = setup();
        let pick = lib.atomic("pick").unwrap();
        let ns = nouns(&["r1"], &["b1"]);
        let once = concretize(pick, &ns, &z).unwrap();
        assert!(once.pre.is_ground());
        assert_eq!(once.bound_robot("robot"), Some("r1".into()));
        assert_eq!(once.bound_brick("brick"), Some("b1".into()));
        // parallel gripper resolves to a side grasp
        assert_eq!(
            once.policy.parameters.get("grasp").and_then(|v| v.as_str()),
            Some("side_grasp")
        );
        let twice = concretize(&once, &ns, &z).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn concretize_resolves_categories_to_instances() {
        let (z, lib) = setup();
        let pick = lib.atomic("pick").unwrap();
        let ns = NounSet {
            robots: vec!["r2".into()],
            objects: vec![ObjectRef::Category("2x4".to_string().try_into().unwrap())],
            workspace: String::new(),
        };
        let got = concretize(pick, &ns, &z).unwrap();
        let brick = got.bound_brick("brick").unwrap();
        assert_eq!(z.bricks[brick.as_str()].brick_type.to_string(), "2x4");
        assert_eq!(
            got.policy.parameters.get("grasp").and_then(|v| v.as_str()),
            Some("top_suction")
        );
    }

    #[test]
    fn concretize_with_empty_nouns_fails() {
        let (z, lib) = setup();
        let pick = lib.atomic("pick").unwrap();
        let err = concretize(pick, &NounSet::default(), &z).unwrap_err();
        assert!(matches!(err, ModelError::UnresolvedNoun { .. }));
    }

    #[test]
    fn pick_then_place_is_a_feasible_edge() {
        let (z, lib) = setup();
        let ns = nouns(&["r1"], &["b1"]);
        let pick = concretize(lib.atomic("pick").unwrap(), &ns, &z).unwrap();
        let place = concretize(lib.atomic("place_down").unwrap(), &ns, &z).unwrap();
        assert!(feasible_edge(&pick, &place, &z));
        // placing frees the hand, which re-enables picking the same brick
        assert!(feasible_edge(&place, &pick, &z));
    }

    #[test]
    fn pick_does_not_enable_another_pick() {
        let (z, lib) = setup();
        let pick1 = concretize(lib.atomic("pick").unwrap(), &nouns(&["r1"], &["b1"]), &z).unwrap();
        let pick2 = concretize(lib.atomic("pick").unwrap(), &nouns(&["r1"], &["b2"]), &z).unwrap();
        assert!(!feasible_edge(&pick1, &pick2, &z));
    }

    #[test]
    fn transit_re_enables_transit() {
        let (z, lib) = setup();
        let ns = nouns(&["r1"], &[]);
        let transit = concretize(lib.atomic("transit").unwrap(), &ns, &z).unwrap();
        let graph = build_graph(&[transit.clone()], &ns, &z).unwrap();
        assert_eq!(graph.node_count(), 1);
        assert!(graph.has_edge(0, 0), "transit must re-enable itself");
    }

    #[test]
    fn empty_library_builds_empty_graph() {
        let (z, _) = setup();
        let g = build_graph(&[], &nouns(&["r1"], &[]), &z).unwrap();
        assert_eq!(g.node_count(), 0);
        assert!(g.edges.is_empty());
    }

    #[test]
    fn expansion_is_deterministic_and_checks_bindings() {
        let (z, lib) = setup();
        let meta = lib.meta("PickPlace").unwrap();
        let mut b = Bindings::new();
        b.insert("robot".into(), BindingValue::Robot("r1".into()));
        b.insert("brick".into(), BindingValue::Brick("b1".into()));
        b.insert("target".into(), BindingValue::Cell3(Cell3::new(10, 10, 0)));
        let a = expand_meta(meta, &b).unwrap();
        let bseq = expand_meta(meta, &b).unwrap();
        assert_eq!(a, bseq);
        assert_eq!(
            a.iter().map(|s| s.verb.clone()).collect::<Vec<_>>(),
            vec![Verb::Detect, Verb::Pick, Verb::Transit, Verb::PlaceDown]
        );
        let _ = z;

        let mut missing = b.clone();
        missing.remove("target");
        assert!(matches!(
            expand_meta(meta, &missing),
            Err(ModelError::MissingBinding(p)) if p == "target"
        ));
    }
}
