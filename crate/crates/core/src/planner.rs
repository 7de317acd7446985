//! Best-first grounding of assembly steps to (meta skill, robots, brick)
//! assignments, costed by simulated execution time.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ids::{BrickId, DurationMs, RobotId};
use crate::skill::condition::{BindingValue, Bindings};
use crate::skill::library::{atom_context, EvaluatorSet, SkillLibrary};
use crate::skill::types::{MetaSkill, Skill, Verb};
use crate::skill::{expand_meta, ModelError};
use crate::taskspec::{ground_relative, AssemblyStep, TaskError, TaskSpec};
use crate::world::effects::{apply_effect_with_duration, effective_duration_ms};
use crate::world::types::{BrickLocation, Cell3, GripperKind, WorldState};
use crate::world::WorldError;

/// Errors from planning.
#[derive(Debug, thiserror::Error)]
pub enum PlanError {
    #[error("no feasible plan: step {step_index} cannot be grounded")]
    NoFeasiblePlan { step_index: usize },
    #[error("search budget exhausted after {expanded} expansions")]
    BudgetExhausted { expanded: usize },
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("plan file error: {0}")]
    File(String),
}

/// One assembly step bound to a meta skill, robots, brick, and pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundedSkill {
    pub step_index: usize,
    pub meta: String,
    /// The placing arm.
    pub robot: RobotId,
    /// Support arm or handover giver, when the meta needs a second arm.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub helper: Option<RobotId>,
    pub brick: BrickId,
    pub grasp: String,
    pub target: Cell3,
    pub expected_duration_ms: DurationMs,
    /// Indices into the expanded atom sequence after which an outcome
    /// check runs (filled in by risk-aware check insertion).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checks_after: Vec<usize>,
}

/// A complete grounded plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub design_name: String,
    pub grounded: Vec<GroundedSkill>,
    pub total_cost_ms: DurationMs,
}

impl Plan {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plan serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Plan, PlanError> {
        serde_json::from_str(s).map_err(|e| PlanError::File(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Plan, PlanError> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| PlanError::File(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }

    /// Stable content digest (FNV-1a over the serialized form), used to
    /// pair traces with the plan that produced them.
    pub fn digest(&self) -> String {
        let bytes = self.to_json();
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for b in bytes.as_bytes() {
            hash ^= *b as u64;
            hash = hash.wrapping_mul(0x100_0000_01b3);
        }
        format!("{hash:016x}")
    }
}

/// Search limits and behavior knobs.
#[derive(Debug, Clone)]
pub struct PlanOptions {
    /// Maximum node expansions before giving up with a budget error.
    pub max_expansions: usize,
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self {
            max_expansions: 500_000,
        }
    }
}

/// Search diagnostics.
#[derive(Debug, Clone, Default)]
pub struct SearchStats {
    pub expanded: usize,
    pub generated: usize,
    /// f-values in pop order; non-decreasing for an admissible heuristic.
    pub popped_f: Vec<DurationMs>,
}

/// Bind a grounded step's values to the meta's parameter slots. Parameter
/// names follow the library convention: `robot`/`taker` take the placing
/// arm, `support_robot`/`giver` the helper, `support_at` the target column,
/// `handover_at` the world handover cell.
pub fn grounded_bindings(
    meta: &MetaSkill,
    g: &GroundedSkill,
    z: &WorldState,
) -> Result<Bindings, ModelError> {
    let mut b = Bindings::new();
    for p in &meta.skill.params {
        let value = match p.name.as_str() {
            "robot" | "taker" => BindingValue::Robot(g.robot.clone()),
            "support_robot" | "giver" => BindingValue::Robot(
                g.helper
                    .clone()
                    .ok_or_else(|| ModelError::MissingBinding(p.name.clone()))?,
            ),
            "brick" => BindingValue::Brick(g.brick.clone()),
            "target" => BindingValue::Cell3(g.target),
            "support_at" => BindingValue::Cell(g.target.xy()),
            "handover_at" => BindingValue::Cell(z.handover_cell),
            other => return Err(ModelError::MissingBinding(other.to_string())),
        };
        b.insert(p.name.clone(), value);
    }
    Ok(b)
}

/// Expand a grounded step into its concrete atomic sequence, inserting a
/// detect-based outcome check after each atom position listed in
/// `checks_after`. Check atoms carry a `check_of` policy parameter holding
/// the position (in the returned list) of the atom they verify.
pub fn expand_grounded(
    lib: &SkillLibrary,
    g: &GroundedSkill,
    z: &WorldState,
) -> Result<Vec<Skill>, ModelError> {
    let meta = lib
        .meta(&g.meta)
        .ok_or_else(|| ModelError::UnknownSkill(g.meta.clone()))?;
    let bindings = grounded_bindings(meta, g, z)?;
    let base = expand_meta(meta, &bindings)?;
    if g.checks_after.is_empty() {
        return Ok(base);
    }
    let detect = lib
        .atomics
        .iter()
        .find(|a| a.verb == Verb::Detect)
        .ok_or_else(|| ModelError::UnknownSkill("detect".to_string()))?;
    let mut out = Vec::with_capacity(base.len() + g.checks_after.len());
    for (i, atom) in base.into_iter().enumerate() {
        let robot = atom.actor();
        let brick = atom.object().unwrap_or_else(|| g.brick.clone());
        out.push(atom);
        if g.checks_after.contains(&i) {
            let checked_pos = out.len() - 1;
            let mut b = Bindings::new();
            if let Some(r) = robot {
                b.insert("robot".to_string(), BindingValue::Robot(r));
            }
            b.insert("brick".to_string(), BindingValue::Brick(brick));
            let mut check = detect.substitute(&b);
            check
                .policy
                .parameters
                .insert("check_of".to_string(), serde_json::json!(checked_pos));
            out.push(check);
        }
    }
    Ok(out)
}

/// Simulated duration of one atom: an explicit evaluator entry if present,
/// otherwise the policy-determined duration at the current state.
pub fn atom_cost_ms(evals: &EvaluatorSet, z: &WorldState, atom: &Skill) -> DurationMs {
    let key = atom_context(z, atom);
    evals
        .cost_override(&atom.name, &key)
        .unwrap_or_else(|| effective_duration_ms(z, atom))
}

/// A feasible grounding of one step, with the simulated state after it.
#[derive(Debug, Clone)]
pub struct CandidateGrounding {
    pub grounded: GroundedSkill,
    pub end_state: WorldState,
}

/// Enumerate every (meta, robots, brick) assignment whose meta precondition
/// and expanded atom preconditions hold under simulation from `state`.
/// Deterministic order: library meta order, then placer, helper, brick ids.
pub fn enumerate_candidates(
    lib: &SkillLibrary,
    evals: &EvaluatorSet,
    state: &WorldState,
    placed: &BTreeMap<usize, Cell3>,
    step: &AssemblyStep,
) -> Result<Vec<CandidateGrounding>, PlanError> {
    let target = ground_relative(step, placed)?;
    enumerate_candidates_at(lib, evals, state, target, step)
}

/// [`enumerate_candidates`] with the step target already grounded.
pub fn enumerate_candidates_at(
    lib: &SkillLibrary,
    evals: &EvaluatorSet,
    state: &WorldState,
    target: Cell3,
    step: &AssemblyStep,
) -> Result<Vec<CandidateGrounding>, PlanError> {
    let robots: Vec<RobotId> = state.robots.keys().cloned().collect();
    let bricks: Vec<BrickId> = state
        .bricks
        .values()
        .filter(|b| {
            b.brick_type == step.brick_type && matches!(b.location, BrickLocation::InStore(_))
        })
        .map(|b| b.id.clone())
        .collect();

    let mut out = Vec::new();
    for meta in &lib.metas {
        let needs_helper = meta
            .skill
            .params
            .iter()
            .any(|p| p.name == "support_robot" || p.name == "giver");
        for robot in &robots {
            let helpers: Vec<Option<RobotId>> = if needs_helper {
                robots
                    .iter()
                    .filter(|h| *h != robot)
                    .cloned()
                    .map(Some)
                    .collect()
            } else {
                vec![None]
            };
            for helper in helpers {
                for brick in &bricks {
                    let grasp = match state.robots[robot].gripper {
                        GripperKind::Parallel => "side_grasp",
                        GripperKind::Suction => "top_suction",
                    };
                    let g = GroundedSkill {
                        step_index: step.index,
                        meta: meta.name().to_string(),
                        robot: robot.clone(),
                        helper: helper.clone(),
                        brick: brick.clone(),
                        grasp: grasp.to_string(),
                        target,
                        expected_duration_ms: 0,
                        checks_after: Vec::new(),
                    };
                    if let Some(c) = try_candidate(lib, evals, state, meta, g)? {
                        out.push(c);
                    }
                }
            }
        }
    }
    Ok(out)
}

fn try_candidate(
    lib: &SkillLibrary,
    evals: &EvaluatorSet,
    state: &WorldState,
    meta: &MetaSkill,
    mut g: GroundedSkill,
) -> Result<Option<CandidateGrounding>, PlanError> {
    let bindings = match grounded_bindings(meta, &g, state) {
        Ok(b) => b,
        Err(_) => return Ok(None),
    };
    let bound_meta = meta.skill.substitute(&bindings);
    if !bound_meta.pre.eval(state) {
        return Ok(None);
    }
    let atoms = expand_meta(meta, &bindings)?;
    let mut sim = state.clone();
    for atom in &atoms {
        let cost = atom_cost_ms(evals, &sim, atom);
        match apply_effect_with_duration(&sim, atom, cost) {
            Ok(next) => sim = next,
            Err(WorldError::PreconditionViolated(_)) => return Ok(None),
            Err(e) => return Err(e.into()),
        }
    }
    if !bound_meta.post.eval(&sim) {
        return Ok(None);
    }
    g.expected_duration_ms = sim.clock_ms - state.clock_ms;
    let _ = lib;
    Ok(Some(CandidateGrounding {
        grounded: g,
        end_state: sim,
    }))
}

/// Ground every step target upfront. Relative constraints depend only on
/// anchor targets, so the full pose list is independent of robot or brick
/// assignment.
pub fn ground_all_targets(task: &TaskSpec) -> Result<Vec<Cell3>, TaskError> {
    let mut placed = BTreeMap::new();
    let mut out = Vec::with_capacity(task.steps.len());
    for step in &task.steps {
        let at = ground_relative(step, &placed)?;
        placed.insert(step.index, at);
        out.push(at);
    }
    Ok(out)
}

fn chebyshev(a: crate::world::types::Cell, b: Cell3) -> u32 {
    (a.x.abs_diff(b.x)).max(a.y.abs_diff(b.y))
}

/// Whether a meta's precondition pins full support (Some(true)), forbids it
/// (Some(false)), or leaves it open. Only top-level conjuncts count.
fn full_support_requirement(cond: &crate::skill::Condition) -> Option<bool> {
    use crate::skill::{Atom, Condition};
    let conjuncts: Vec<&Condition> = match cond {
        Condition::All(parts) => parts.iter().collect(),
        other => vec![other],
    };
    for c in conjuncts {
        match c {
            Condition::Atom(Atom::FullySupported(..)) => return Some(true),
            Condition::Not(inner) => {
                if matches!(**inner, Condition::Atom(Atom::FullySupported(..))) {
                    return Some(false);
                }
            }
            _ => {}
        }
    }
    None
}

/// Statically place each step in order and record whether its placement is
/// fully supported by the structure built so far.
fn static_support_status(task: &TaskSpec, targets: &[Cell3], z0: &WorldState) -> Vec<bool> {
    let mut phantom = z0.clone();
    let mut supported = Vec::with_capacity(task.steps.len());
    for (step, target) in task.steps.iter().zip(targets) {
        let p = crate::world::types::Placement::new(
            step.brick_type,
            crate::world::types::Orientation::Deg0,
            *target,
        );
        supported.push(crate::world::fully_supported(&phantom, &p));
        let id: BrickId = format!("__phantom{}", step.index).as_str().into();
        phantom.bricks.insert(
            id.clone(),
            crate::world::types::BrickInstance {
                id,
                brick_type: step.brick_type,
                orientation: crate::world::types::Orientation::Deg0,
                location: BrickLocation::OnPlate(*target),
                wear_count: 0,
                store_cell: crate::world::types::Cell::new(0, 0),
                pose_offset_um: (0, 0),
            },
        );
    }
    supported
}

/// Lower bounds on the cost of serving step `i` with brick `b`, minimized
/// over the metas whose static requirements (support status, region
/// reachability) the pair can satisfy. `u64::MAX / 4` marks an infeasible
/// pair.
struct PairCostTable {
    /// cost[step position][brick column]
    cost: Vec<Vec<u64>>,
    /// brick id -> column
    col_of: BTreeMap<BrickId, usize>,
}

/// Large enough to lose every comparison, small enough that a full column
/// of them cannot overflow the assignment arithmetic.
const INFEASIBLE_PAIR: u64 = 1_000_000_000_000;

fn build_pair_costs(
    task: &TaskSpec,
    targets: &[Cell3],
    supported: &[bool],
    lib: &SkillLibrary,
    evals: &EvaluatorSet,
    z0: &WorldState,
) -> PairCostTable {
    let bricks: Vec<&crate::world::types::BrickInstance> = z0.bricks.values().collect();
    let col_of: BTreeMap<BrickId, usize> = bricks
        .iter()
        .enumerate()
        .map(|(i, b)| (b.id.clone(), i))
        .collect();

    let atom_floor = |atom: &Skill| -> DurationMs {
        let nominal = (atom.policy.nominal_duration_ms() as f64
            * atom.policy.min_variant_multiplier())
        .floor() as DurationMs;
        let min_entry = evals
            .by_skill
            .get(&atom.name)
            .and_then(|e| e.cost_ms.values().min().copied())
            .unwrap_or(DurationMs::MAX);
        nominal.min(min_entry)
    };

    struct MetaMode {
        floor_ms: DurationMs,
        support_req: Option<bool>,
        kind: ModeKind,
        cell_time_s: f64,
    }
    enum ModeKind {
        Direct { needs_support_arm: bool },
        ViaHandover,
    }
    let modes: Vec<MetaMode> = lib
        .metas
        .iter()
        .map(|m| {
            let floor_ms = m
                .body
                .iter()
                .filter(|s| s.atom.verb != Verb::Transit)
                .map(|s| atom_floor(&s.atom))
                .sum();
            let cell_time_s = m
                .body
                .iter()
                .filter(|s| s.atom.verb == Verb::Transit)
                .map(|s| s.atom.policy.cell_time_s() * s.atom.policy.min_variant_multiplier())
                .fold(f64::INFINITY, f64::min);
            let is_handover = m.skill.params.iter().any(|p| p.name == "giver");
            let needs_support_arm = m.skill.params.iter().any(|p| p.name == "support_robot");
            MetaMode {
                floor_ms,
                support_req: full_support_requirement(&m.skill.pre),
                kind: if is_handover {
                    ModeKind::ViaHandover
                } else {
                    ModeKind::Direct { needs_support_arm }
                },
                cell_time_s,
            }
        })
        .collect();

    let robots: Vec<&crate::world::types::RobotState> = z0.robots.values().collect();
    let min_transit_entry: Option<DurationMs> = lib
        .atomics
        .iter()
        .filter(|a| a.verb == Verb::Transit)
        .filter_map(|a| {
            evals
                .by_skill
                .get(&a.name)
                .and_then(|e| e.cost_ms.values().min().copied())
        })
        .min();
    let leg = |cells: u32, cell_time_s: f64| -> DurationMs {
        let mut t = if cell_time_s.is_finite() {
            crate::ids::secs_to_ms(cells as f64 * cell_time_s)
        } else {
            0
        };
        if let Some(me) = min_transit_entry {
            t = t.min(me);
        }
        t
    };

    let mut cost = vec![vec![INFEASIBLE_PAIR; bricks.len()]; task.steps.len()];
    for (i, step) in task.steps.iter().enumerate() {
        let target = targets[i];
        for (j, brick) in bricks.iter().enumerate() {
            if brick.brick_type != step.brick_type {
                continue;
            }
            let store = brick.store_cell;
            let mut best = INFEASIBLE_PAIR;
            for mode in &modes {
                if let Some(req) = mode.support_req {
                    if req != supported[i] {
                        continue;
                    }
                }
                let feasible_transit = match &mode.kind {
                    ModeKind::Direct { needs_support_arm } => {
                        let placer_ok = robots.iter().any(|r| {
                            r.base_region.contains(store) && r.base_region.contains(target.xy())
                        });
                        let support_ok = !needs_support_arm
                            || robots.iter().any(|s| {
                                s.base_region.contains(target.xy())
                                    && robots.iter().any(|r| {
                                        r.id != s.id
                                            && r.base_region.contains(store)
                                            && r.base_region.contains(target.xy())
                                    })
                            });
                        if placer_ok && support_ok {
                            Some(leg(chebyshev(store, target) + 1, mode.cell_time_s))
                        } else {
                            None
                        }
                    }
                    ModeKind::ViaHandover => {
                        let h = z0.handover_cell;
                        let ok = robots.iter().any(|g| {
                            g.base_region.contains(store)
                                && g.base_region.contains(h)
                                && robots.iter().any(|t| {
                                    t.id != g.id
                                        && !t.base_region.contains(store)
                                        && t.base_region.contains(h)
                                        && t.base_region.contains(target.xy())
                                })
                        });
                        if ok {
                            let d1 = h.x.abs_diff(store.x).max(h.y.abs_diff(store.y)) + 1;
                            let d2 = chebyshev(h, target) + 1;
                            Some(leg(d1, mode.cell_time_s) + leg(d2, mode.cell_time_s))
                        } else {
                            None
                        }
                    }
                };
                if let Some(t) = feasible_transit {
                    best = best.min(mode.floor_ms + t);
                }
            }
            cost[i][j] = best;
        }
    }
    PairCostTable { cost, col_of }
}

/// Exact min-cost rectangular assignment (Hungarian with potentials).
/// `cost[i][j]` is the cost of giving row i column j; requires
/// `rows <= columns`.
fn min_cost_assignment(cost: &[Vec<u64>]) -> u64 {
    let n = cost.len();
    if n == 0 {
        return 0;
    }
    let m = cost[0].len();
    debug_assert!(n <= m, "assignment needs at least as many columns as rows");
    const INF: i64 = i64::MAX / 4;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; m + 1];
    let mut assigned = vec![0usize; m + 1]; // row occupying column j (1-based)
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        assigned[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![INF; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = assigned[j0];
            let mut delta = INF;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] as i64 - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[assigned[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if assigned[j0] == 0 {
                break;
            }
        }
        while j0 != 0 {
            let j1 = way[j0];
            assigned[j0] = assigned[j1];
            j0 = j1;
        }
    }
    let mut total = 0u64;
    for j in 1..=m {
        if assigned[j] != 0 {
            total += cost[assigned[j] - 1][j - 1];
        }
    }
    total
}

struct Node {
    prefix: Vec<GroundedSkill>,
    state: WorldState,
    g_ms: DurationMs,
}

/// Best-first search over partial grounded sequences. Returns the
/// minimum-cost complete plan; ties break on fewer remaining steps, then
/// lower placing-robot id, then lower brick id, then insertion order.
pub fn plan(
    task: &TaskSpec,
    lib: &SkillLibrary,
    z0: &WorldState,
    evals: &EvaluatorSet,
    opts: &PlanOptions,
) -> Result<Plan, PlanError> {
    plan_with_stats(task, lib, z0, evals, opts).map(|(p, _)| p)
}

pub fn plan_with_stats(
    task: &TaskSpec,
    lib: &SkillLibrary,
    z0: &WorldState,
    evals: &EvaluatorSet,
    opts: &PlanOptions,
) -> Result<(Plan, SearchStats), PlanError> {
    // cumulative inventory check pins down the first unsatisfiable step
    let inv = crate::taskspec::Inventory::from_world(z0);
    let mut used: BTreeMap<crate::world::types::BrickType, u32> = BTreeMap::new();
    for step in &task.steps {
        let u = used.entry(step.brick_type).or_insert(0);
        *u += 1;
        if *u > inv.count(&step.brick_type) {
            return Err(PlanError::NoFeasiblePlan {
                step_index: step.index,
            });
        }
    }

    let targets = ground_all_targets(task)?;
    let supported = static_support_status(task, &targets, z0);
    let pair_costs = build_pair_costs(task, &targets, &supported, lib, evals, z0);
    let total_steps = task.steps.len();

    // h = exact min-cost matching of remaining steps to remaining stored
    // bricks under per-pair step-cost lower bounds
    let h = |done: usize, state: &WorldState| -> DurationMs {
        let mut by_type: BTreeMap<crate::world::types::BrickType, Vec<usize>> = BTreeMap::new();
        for (i, step) in task.steps.iter().enumerate().skip(done) {
            by_type.entry(step.brick_type).or_default().push(i);
        }
        let mut total: DurationMs = 0;
        for (t, rows) in by_type {
            let cols: Vec<usize> = state
                .bricks
                .values()
                .filter(|b| {
                    b.brick_type == t && matches!(b.location, BrickLocation::InStore(_))
                })
                .map(|b| pair_costs.col_of[&b.id])
                .collect();
            if cols.len() < rows.len() {
                total += INFEASIBLE_PAIR; // dead end; ranked last
                continue;
            }
            let cost: Vec<Vec<u64>> = rows
                .iter()
                .map(|r| cols.iter().map(|c| pair_costs.cost[*r][*c]).collect())
                .collect();
            total += min_cost_assignment(&cost);
        }
        total
    };

    let mut stats = SearchStats::default();
    let mut arena: Vec<Node> = vec![Node {
        prefix: Vec::new(),
        state: z0.clone(),
        g_ms: 0,
    }];
    type Key = (DurationMs, usize, RobotId, BrickId, u64);
    let mut heap: BinaryHeap<(Reverse<Key>, usize)> = BinaryHeap::new();
    let mut seq: u64 = 0;
    heap.push((
        Reverse((h(0, z0), total_steps, RobotId::from(""), BrickId::from(""), seq)),
        0,
    ));
    let mut deepest = 0usize;

    while let Some((Reverse(key), idx)) = heap.pop() {
        stats.popped_f.push(key.0);
        let done = arena[idx].prefix.len();
        if done == total_steps {
            let node = &arena[idx];
            return Ok((
                Plan {
                    design_name: task.design_name.clone(),
                    grounded: node.prefix.clone(),
                    total_cost_ms: node.g_ms,
                },
                stats,
            ));
        }
        if stats.expanded >= opts.max_expansions {
            return Err(PlanError::BudgetExhausted {
                expanded: stats.expanded,
            });
        }
        stats.expanded += 1;
        let step = &task.steps[done];
        let candidates = {
            let node = &arena[idx];
            enumerate_candidates_at(lib, evals, &node.state, targets[done], step)?
        };
        if !candidates.is_empty() {
            deepest = deepest.max(done + 1);
        }
        for c in candidates {
            let parent = &arena[idx];
            let mut prefix = parent.prefix.clone();
            let g_ms = parent.g_ms + c.grounded.expected_duration_ms;
            prefix.push(c.grounded.clone());
            let child = Node {
                prefix,
                state: c.end_state,
                g_ms,
            };
            seq += 1;
            stats.generated += 1;
            let f = g_ms + h(done + 1, &child.state);
            let key: Key = (
                f,
                total_steps - (done + 1),
                c.grounded.robot.clone(),
                c.grounded.brick.clone(),
                seq,
            );
            let child_idx = arena.len();
            arena.push(child);
            heap.push((Reverse(key), child_idx));
        }
    }
    Err(PlanError::NoFeasiblePlan {
        step_index: deepest + 1,
    })
}

/// Replay of one atom during plan reconstruction.
#[derive(Debug, Clone)]
pub struct ReplayedAtom {
    /// Global sequential order across the whole plan.
    pub order: usize,
    pub step_index: usize,
    pub atom_index: usize,
    pub skill: Skill,
    pub start_ms: DurationMs,
    pub end_ms: DurationMs,
    /// Cells the atom occupies while executing.
    pub cells: std::collections::BTreeSet<crate::world::types::Cell>,
    /// For transits: the per-cell timed sweep.
    pub transit: Option<crate::world::motion::Trajectory>,
}

/// Cells an atom occupies at its start state.
pub fn atom_cells(
    z: &WorldState,
    atom: &Skill,
) -> std::collections::BTreeSet<crate::world::types::Cell> {
    use crate::world::types::Placement;
    let mut cells = std::collections::BTreeSet::new();
    match &atom.verb {
        Verb::Transit => {
            cells.extend(crate::world::effects::transit_path(z, atom));
        }
        Verb::Pick | Verb::Detect => {
            if let Some(c) = atom.object().and_then(|b| z.brick_cell(&b)) {
                cells.insert(c);
            }
        }
        Verb::PlaceDown | Verb::PlaceUp => {
            if let (Some(brick), Some(BindingValue::Cell3(target))) =
                (atom.object(), atom.binding("target"))
            {
                if let Some(b) = z.bricks.get(&brick) {
                    cells.extend(
                        Placement::new(b.brick_type, b.orientation, *target).footprint(),
                    );
                }
            }
        }
        Verb::SupportUp | Verb::SupportDown | Verb::Handover => {
            if let Some(BindingValue::Cell(at)) = atom.binding("at") {
                cells.insert(*at);
            }
        }
        Verb::Custom(_) => {}
    }
    if let Some(r) = atom.actor().and_then(|r| z.robots.get(&r)) {
        cells.insert(r.eef_cell);
    }
    cells
}

/// Deterministically replay a plan from `z0` with policy durations,
/// returning the final state and the per-atom timeline. Fails if any
/// precondition is violated (the plan is unsound for this world).
pub fn replay_plan(
    lib: &SkillLibrary,
    plan: &Plan,
    z0: &WorldState,
) -> Result<(WorldState, Vec<ReplayedAtom>), PlanError> {
    let mut z = z0.clone();
    let mut out = Vec::new();
    let mut order = 0usize;
    for g in &plan.grounded {
        let atoms = expand_grounded(lib, g, &z)?;
        for (atom_index, atom) in atoms.iter().enumerate() {
            let start = z.clock_ms;
            let cells = atom_cells(&z, atom);
            let transit = match atom.verb {
                Verb::Transit => Some(crate::world::effects::transit_trajectory(&z, atom)),
                _ => None,
            };
            let next = crate::world::effects::apply_effect(&z, atom)?;
            out.push(ReplayedAtom {
                order,
                step_index: g.step_index,
                atom_index,
                skill: atom.clone(),
                start_ms: start,
                end_ms: next.clock_ms,
                cells,
                transit,
            });
            order += 1;
            z = next;
        }
    }
    Ok((z, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skill::library::builtin;
    use crate::taskspec::{designs, StepTarget};
    use crate::world::config::WorldConfig;

    fn simple_task(n: usize) -> TaskSpec {
        let mut steps = Vec::new();
        for i in 0..n {
            steps.push(AssemblyStep {
                index: i + 1,
                brick_type: crate::world::types::BrickType::new(2, 4),
                target: StepTarget::Absolute(Cell3::new(18 + 6 * (i as i32 % 2), 18 + 4 * (i as i32 / 2), 0)),
                meta_hint: None,
            });
        }
        TaskSpec {
            design_name: format!("simple{n}"),
            steps,
        }
    }

    #[test]
    fn empty_task_plans_to_empty_plan() {
        let z = WorldConfig::two_arm_demo(2).build().unwrap();
        let lib = builtin();
        let evals = EvaluatorSet::from_library(&lib);
        let task = TaskSpec {
            design_name: "empty".into(),
            steps: vec![],
        };
        let p = plan(&task, &lib, &z, &evals, &PlanOptions::default()).unwrap();
        assert!(p.grounded.is_empty());
        assert_eq!(p.total_cost_ms, 0);
    }

    #[test]
    fn single_brick_grounds_to_pick_place() {
        let z = WorldConfig::two_arm_demo(2).build().unwrap();
        let lib = builtin();
        let evals = EvaluatorSet::from_library(&lib);
        let p = plan(&simple_task(1), &lib, &z, &evals, &PlanOptions::default()).unwrap();
        assert_eq!(p.grounded.len(), 1);
        assert_eq!(p.grounded[0].meta, "PickPlace");
        // soundness: replaying raises no violations and places the brick
        let (zf, atoms) = replay_plan(&lib, &p, &z).unwrap();
        assert_eq!(atoms.len(), 4); // detect, pick, transit, place
        let brick = &zf.bricks[p.grounded[0].brick.as_str()];
        assert_eq!(
            brick.location,
            BrickLocation::OnPlate(p.grounded[0].target)
        );
    }

    #[test]
    fn insufficient_inventory_is_reported_at_the_failing_step() {
        let z = WorldConfig::two_arm_demo(0).build().unwrap(); // only 2x2 bricks
        let lib = builtin();
        let evals = EvaluatorSet::from_library(&lib);
        let err = plan(&simple_task(2), &lib, &z, &evals, &PlanOptions::default()).unwrap_err();
        assert!(matches!(err, PlanError::NoFeasiblePlan { step_index: 1 }));
    }

    #[test]
    fn budget_errors_are_distinguished() {
        let z = designs::bench_world().build().unwrap();
        let lib = builtin();
        let evals = EvaluatorSet::from_library(&lib);
        let err = plan(
            &designs::faucet(),
            &lib,
            &z,
            &evals,
            &PlanOptions { max_expansions: 1 },
        )
        .unwrap_err();
        assert!(matches!(err, PlanError::BudgetExhausted { .. }));
    }

    #[test]
    fn popped_f_values_never_decrease() {
        let z = WorldConfig::two_arm_demo(4).build().unwrap();
        let lib = builtin();
        let evals = EvaluatorSet::from_library(&lib);
        let (_, stats) = plan_with_stats(&simple_task(2), &lib, &z, &evals, &PlanOptions::default()).unwrap();
        for w in stats.popped_f.windows(2) {
            assert!(w[0] <= w[1], "frontier f regressed: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn plans_are_deterministic() {
        let z = WorldConfig::two_arm_demo(4).build().unwrap();
        let lib = builtin();
        let evals = EvaluatorSet::from_library(&lib);
        let a = plan(&simple_task(3), &lib, &z, &evals, &PlanOptions::default()).unwrap();
        let b = plan(&simple_task(3), &lib, &z, &evals, &PlanOptions::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.digest(), b.digest());
    }
}
