//! Temporal plan graphs: precedence DAGs over per-robot trajectory
//! segments, with makespan analysis and dispatch ordering.

pub mod gantt;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ids::{DurationMs, RobotId};
use crate::planner::{replay_plan, Plan, PlanError, ReplayedAtom};
use crate::skill::{SkillLibrary, Verb};
use crate::world::types::{Cell, Placement, WorldState};

/// Errors from TPG construction.
#[derive(Debug, thiserror::Error)]
pub enum TpgError {
    #[error("temporal plan graph contains a cycle through node {0}")]
    CyclicDependency(usize),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("tpg file error: {0}")]
    File(String),
}

/// One executable segment on a robot lane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TpgNode {
    pub id: usize,
    pub robot: RobotId,
    /// Plan step this segment belongs to.
    pub step_index: usize,
    /// Atom position within the step's expansion.
    pub atom_index: usize,
    /// Segment position within the atom (transits split by zone).
    pub segment_index: usize,
    /// Total number of segments of this atom.
    pub segment_count: usize,
    /// Skill name of the atom (e.g. `pick`, `transit`).
    pub skill: String,
    pub verb: Verb,
    pub duration_ms: DurationMs,
    /// Cells swept or touched while this segment runs.
    pub cells: BTreeSet<Cell>,
    /// Position in the sequential plan's atom order.
    pub seq_order: usize,
}

/// Edge kinds: intra-robot chaining vs. cross-robot ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Intra,
    Inter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TpgEdge {
    pub from: usize,
    pub to: usize,
    pub kind: EdgeKind,
}

/// A temporal plan graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tpg {
    pub nodes: Vec<TpgNode>,
    pub edges: Vec<TpgEdge>,
    /// First node of each robot's lane.
    pub sources: BTreeMap<RobotId, usize>,
}

impl Tpg {
    pub fn predecessors(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges
            .iter()
            .filter(move |e| e.to == node)
            .map(|e| e.from)
    }

    pub fn successors(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges
            .iter()
            .filter(move |e| e.from == node)
            .map(|e| e.to)
    }

    /// Node ids in topological order; error if a cycle exists.
    pub fn topo_order(&self) -> Result<Vec<usize>, TpgError> {
        let n = self.nodes.len();
        let mut indegree = vec![0usize; n];
        for e in &self.edges {
            indegree[e.to] += 1;
        }
        let mut queue: VecDeque<usize> = (0..n).filter(|i| indegree[*i] == 0).collect();
        let mut out = Vec::with_capacity(n);
        while let Some(i) = queue.pop_front() {
            out.push(i);
            for s in self.successors(i) {
                indegree[s] -= 1;
                if indegree[s] == 0 {
                    queue.push_back(s);
                }
            }
        }
        if out.len() != n {
            let stuck = (0..n).find(|i| indegree[*i] > 0).unwrap_or(0);
            return Err(TpgError::CyclicDependency(stuck));
        }
        Ok(out)
    }

    /// Sum of all node durations: the sequential execution time.
    pub fn sequential_duration_ms(&self) -> DurationMs {
        self.nodes.iter().map(|n| n.duration_ms).sum()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("tpg serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Tpg, TpgError> {
        serde_json::from_str(s).map_err(|e| TpgError::File(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Tpg, TpgError> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| TpgError::File(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }
}

/// Split a replayed atom into segments. Transits split where the swept
/// cells change reachability zone; handovers split into a give and a
/// receive segment; everything else is one segment.
fn segment_atom(z0: &WorldState, atom: &ReplayedAtom) -> Vec<(BTreeSet<Cell>, DurationMs)> {
    match atom.skill.verb {
        Verb::Transit => {
            let traj = match &atom.transit {
                Some(t) if !t.segments.is_empty() => t,
                _ => return vec![(atom.cells.clone(), atom.end_ms - atom.start_ms)],
            };
            let mut out: Vec<(BTreeSet<Cell>, DurationMs)> = Vec::new();
            let zone_of = |c: Cell| -> Vec<RobotId> {
                z0.robots
                    .values()
                    .filter(|r| r.base_region.contains(c))
                    .map(|r| r.id.clone())
                    .collect()
            };
            let mut current_zone: Option<Vec<RobotId>> = None;
            for seg in &traj.segments {
                let cell = *seg.cells.iter().next().expect("segment has a cell");
                let zone = zone_of(cell);
                if current_zone.as_ref() == Some(&zone) {
                    let last = out.last_mut().expect("zone run started");
                    last.0.extend(seg.cells.iter().copied());
                    last.1 += seg.duration_ms;
                } else {
                    out.push((seg.cells.clone(), seg.duration_ms));
                    current_zone = Some(zone);
                }
            }
            out
        }
        Verb::Handover => {
            let total = atom.end_ms - atom.start_ms;
            let give = total / 2;
            let receive = total - give;
            vec![
                (atom.cells.clone(), give.max(1)),
                (atom.cells.clone(), receive.max(1)),
            ]
        }
        _ => vec![(atom.cells.clone(), atom.end_ms - atom.start_ms)],
    }
}

/// The robot that physically moves during a segment. Handover receive
/// segments belong to the taker's lane.
fn segment_robot(atom: &ReplayedAtom, segment_index: usize) -> Option<RobotId> {
    if atom.skill.verb == Verb::Handover && segment_index == 1 {
        let takers = atom.skill.robot_params();
        takers.get(1).and_then(|n| atom.skill.bound_robot(n))
    } else {
        atom.skill.actor()
    }
}

/// Post-process a sequential plan into a temporal plan graph.
///
/// Per-robot chains follow the sequential order (intra edges). Inter edges
/// order, in sequential direction: segments of different robots with
/// overlapping cell occupancy, consecutive atoms of one step that switch
/// arms, and placements that physically support a later step placed by the
/// other arm.
pub fn build_tpg(plan: &Plan, lib: &SkillLibrary, z0: &WorldState) -> Result<Tpg, TpgError> {
    let (_, atoms) = replay_plan(lib, plan, z0)?;

    let mut nodes: Vec<TpgNode> = Vec::new();
    let mut last_node_of_atom: BTreeMap<usize, usize> = BTreeMap::new(); // atom order -> node id
    let mut first_node_of_atom: BTreeMap<usize, usize> = BTreeMap::new();
    for atom in &atoms {
        let segments = segment_atom(z0, atom);
        let count = segments.len();
        for (si, (cells, duration_ms)) in segments.into_iter().enumerate() {
            let robot = segment_robot(atom, si).unwrap_or_else(|| RobotId::from("r?"));
            let id = nodes.len();
            if si == 0 {
                first_node_of_atom.insert(atom.order, id);
            }
            last_node_of_atom.insert(atom.order, id);
            nodes.push(TpgNode {
                id,
                robot,
                step_index: atom.step_index,
                atom_index: atom.atom_index,
                segment_index: si,
                segment_count: count,
                skill: atom.skill.name.clone(),
                verb: atom.skill.verb.clone(),
                duration_ms: duration_ms.max(1),
                cells,
                seq_order: atom.order,
            });
        }
    }

    let mut edges: Vec<TpgEdge> = Vec::new();
    let mut edge_set: BTreeSet<(usize, usize)> = BTreeSet::new();
    let push_edge = |edges: &mut Vec<TpgEdge>,
                     edge_set: &mut BTreeSet<(usize, usize)>,
                     from: usize,
                     to: usize,
                     kind: EdgeKind| {
        if from != to && edge_set.insert((from, to)) {
            edges.push(TpgEdge { from, to, kind });
        }
    };

    // intra edges: consecutive segments of each robot lane, sequential order
    let mut sources: BTreeMap<RobotId, usize> = BTreeMap::new();
    let mut last_of_robot: BTreeMap<RobotId, usize> = BTreeMap::new();
    for node in &nodes {
        match last_of_robot.get(&node.robot) {
            Some(prev) => {
                push_edge(&mut edges, &mut edge_set, *prev, node.id, EdgeKind::Intra);
            }
            None => {
                sources.insert(node.robot.clone(), node.id);
            }
        }
        last_of_robot.insert(node.robot.clone(), node.id);
    }

    // consecutive segments of one atom that switch arms (handover)
    for w in nodes.windows(2) {
        if w[0].seq_order == w[1].seq_order && w[0].robot != w[1].robot {
            push_edge(&mut edges, &mut edge_set, w[0].id, w[1].id, EdgeKind::Inter);
        }
    }

    // cross-arm ordering inside one step's expansion (support, handover)
    for pair in atoms.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if a.step_index != b.step_index {
            continue;
        }
        let a_last = &nodes[last_node_of_atom[&a.order]];
        let b_first = &nodes[first_node_of_atom[&b.order]];
        if a_last.robot != b_first.robot {
            push_edge(
                &mut edges,
                &mut edge_set,
                a_last.id,
                b_first.id,
                EdgeKind::Inter,
            );
        }
    }

    // occupancy conflicts: order overlapping segments of different robots
    // by sequential position
    for i in 0..nodes.len() {
        for j in (i + 1)..nodes.len() {
            let (a, b) = (&nodes[i], &nodes[j]);
            if a.robot == b.robot {
                continue;
            }
            if a.cells.intersection(&b.cells).next().is_some() {
                push_edge(&mut edges, &mut edge_set, a.id, b.id, EdgeKind::Inter);
            }
        }
    }

    // task dependencies: a placement supporting a later placement on the
    // other arm must land first
    let place_nodes: Vec<&TpgNode> = nodes
        .iter()
        .filter(|n| matches!(n.verb, Verb::PlaceDown | Verb::PlaceUp))
        .collect();
    for a in &place_nodes {
        for b in &place_nodes {
            if a.seq_order >= b.seq_order || a.robot == b.robot {
                continue;
            }
            let ga = plan
                .grounded
                .iter()
                .find(|g| g.step_index == a.step_index)
                .expect("plan step for node");
            let gb = plan
                .grounded
                .iter()
                .find(|g| g.step_index == b.step_index)
                .expect("plan step for node");
            if gb.target.level == ga.target.level + 1 {
                let fa = footprint_of(z0, plan, a.step_index);
                let fb = footprint_of(z0, plan, b.step_index);
                if fa.intersection(&fb).next().is_some() {
                    push_edge(&mut edges, &mut edge_set, a.id, b.id, EdgeKind::Inter);
                }
            }
        }
    }

    let tpg = Tpg {
        nodes,
        edges,
        sources,
    };
    tpg.topo_order()?;
    Ok(tpg)
}

fn footprint_of(z0: &WorldState, plan: &Plan, step_index: usize) -> BTreeSet<Cell> {
    let g = plan
        .grounded
        .iter()
        .find(|g| g.step_index == step_index)
        .expect("grounded step");
    match z0.bricks.get(&g.brick) {
        Some(b) => Placement::new(b.brick_type, b.orientation, g.target)
            .footprint()
            .into_iter()
            .collect(),
        None => BTreeSet::new(),
    }
}

/// Longest weighted path through the DAG: the parallel completion time.
pub fn makespan(tpg: &Tpg) -> DurationMs {
    let order = match tpg.topo_order() {
        Ok(o) => o,
        Err(_) => return 0,
    };
    let mut finish = vec![0u64; tpg.nodes.len()];
    let mut best = 0;
    for i in order {
        let start = tpg
            .predecessors(i)
            .map(|p| finish[p])
            .max()
            .unwrap_or(0);
        finish[i] = start + tpg.nodes[i].duration_ms;
        best = best.max(finish[i]);
    }
    best
}

/// Earliest-start schedule per node, ignoring resource contention beyond
/// the graph's own edges (lanes are chains, so this is dispatch-feasible).
pub fn earliest_schedule(tpg: &Tpg) -> Vec<(DurationMs, DurationMs)> {
    let order = tpg.topo_order().expect("acyclic");
    let mut times = vec![(0u64, 0u64); tpg.nodes.len()];
    for i in order {
        let start = tpg.predecessors(i).map(|p| times[p].1).max().unwrap_or(0);
        times[i] = (start, start + tpg.nodes[i].duration_ms);
    }
    times
}

/// Per-robot dispatch queues plus the readiness predicate.
#[derive(Debug, Clone)]
pub struct Dispatch {
    pub queues: BTreeMap<RobotId, Vec<usize>>,
    preds: Vec<Vec<usize>>,
}

impl Dispatch {
    /// A node is executable once every predecessor has completed.
    pub fn ready(&self, node: usize, completed: &BTreeSet<usize>) -> bool {
        self.preds[node].iter().all(|p| completed.contains(p))
    }
}

/// Build dispatch queues: per-robot order equals the intra-chain order.
pub fn dispatch_order(tpg: &Tpg) -> Dispatch {
    let mut queues: BTreeMap<RobotId, Vec<usize>> = BTreeMap::new();
    for node in &tpg.nodes {
        queues.entry(node.robot.clone()).or_default().push(node.id);
    }
    let mut preds = vec![Vec::new(); tpg.nodes.len()];
    for e in &tpg.edges {
        preds[e.to].push(e.from);
    }
    Dispatch { queues, preds }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::{plan, PlanOptions};
    use crate::skill::library::{builtin, EvaluatorSet};
    use crate::taskspec::{designs, AssemblyStep, StepTarget, TaskSpec};
    use crate::world::types::Cell3;

    fn two_step_single_robot() -> (Tpg, Plan) {
        let z = designs::bench_world().build().unwrap();
        let lib = builtin();
        let evals = EvaluatorSet::from_library(&lib);
        // both targets deep in r1's exclusive zone
        let task = TaskSpec {
            design_name: "left".into(),
            steps: vec![
                AssemblyStep {
                    index: 1,
                    brick_type: crate::world::types::BrickType::new(2, 4),
                    target: StepTarget::Absolute(Cell3::new(4, 20, 0)),
                    meta_hint: None,
                },
                AssemblyStep {
                    index: 2,
                    brick_type: crate::world::types::BrickType::new(2, 4),
                    target: StepTarget::Absolute(Cell3::new(10, 20, 0)),
                    meta_hint: None,
                },
            ],
        };
        let p = plan(&task, &lib, &z, &evals, &PlanOptions::default()).unwrap();
        (build_tpg(&p, &lib, &z).unwrap(), p)
    }

    #[test]
    fn single_robot_plan_is_one_chain_without_inter_edges() {
        let (tpg, plan) = two_step_single_robot();
        assert!(plan.grounded.iter().all(|g| g.robot == "r1".into()));
        assert!(tpg.edges.iter().all(|e| e.kind == EdgeKind::Intra));
        assert_eq!(makespan(&tpg), tpg.sequential_duration_ms());
    }

    #[test]
    fn disjoint_lanes_run_in_parallel() {
        let z = designs::disjoint_world().build().unwrap();
        let lib = builtin();
        let evals = EvaluatorSet::from_library(&lib);
        let p = plan(&designs::disjoint_task(), &lib, &z, &evals, &PlanOptions::default()).unwrap();
        let robots: BTreeSet<_> = p.grounded.iter().map(|g| g.robot.clone()).collect();
        assert_eq!(robots.len(), 2, "both arms should be used");
        let tpg = build_tpg(&p, &lib, &z).unwrap();
        assert!(tpg.edges.iter().all(|e| e.kind == EdgeKind::Intra));
        let mut lane_sums: BTreeMap<RobotId, DurationMs> = BTreeMap::new();
        for n in &tpg.nodes {
            *lane_sums.entry(n.robot.clone()).or_insert(0) += n.duration_ms;
        }
        let max_lane = lane_sums.values().max().copied().unwrap();
        assert_eq!(makespan(&tpg), max_lane);
        assert!(makespan(&tpg) < tpg.sequential_duration_ms());
    }

    #[test]
    fn makespan_of_simple_chain_and_parallel_lanes() {
        // hand-built graphs
        let mk_node = |id: usize, robot: &str, d: DurationMs| TpgNode {
            id,
            robot: robot.into(),
            step_index: 1,
            atom_index: id,
            segment_index: 0,
            segment_count: 1,
            skill: "pick".into(),
            verb: Verb::Pick,
            duration_ms: d,
            cells: BTreeSet::new(),
            seq_order: id,
        };
        let chain = Tpg {
            nodes: vec![mk_node(0, "r1", 2000), mk_node(1, "r1", 3000)],
            edges: vec![TpgEdge { from: 0, to: 1, kind: EdgeKind::Intra }],
            sources: [("r1".into(), 0)].into_iter().collect(),
        };
        assert_eq!(makespan(&chain), 5000);

        let lanes = Tpg {
            nodes: vec![mk_node(0, "r1", 5000), mk_node(1, "r2", 7000)],
            edges: vec![],
            sources: [("r1".into(), 0), ("r2".into(), 1)].into_iter().collect(),
        };
        assert_eq!(makespan(&lanes), 7000);
    }

    #[test]
    fn diamond_readiness_requires_both_branches() {
        let mk_node = |id: usize, robot: &str| TpgNode {
            id,
            robot: robot.into(),
            step_index: 1,
            atom_index: id,
            segment_index: 0,
            segment_count: 1,
            skill: "pick".into(),
            verb: Verb::Pick,
            duration_ms: 1000,
            cells: BTreeSet::new(),
            seq_order: id,
        };
        let tpg = Tpg {
            nodes: vec![
                mk_node(0, "r1"),
                mk_node(1, "r1"),
                mk_node(2, "r2"),
                mk_node(3, "r2"),
            ],
            edges: vec![
                TpgEdge { from: 0, to: 1, kind: EdgeKind::Intra },
                TpgEdge { from: 0, to: 2, kind: EdgeKind::Inter },
                TpgEdge { from: 1, to: 3, kind: EdgeKind::Inter },
                TpgEdge { from: 2, to: 3, kind: EdgeKind::Intra },
            ],
            sources: [("r1".into(), 0), ("r2".into(), 2)].into_iter().collect(),
        };
        let d = dispatch_order(&tpg);
        let mut completed = BTreeSet::new();
        assert!(d.ready(0, &completed));
        assert!(!d.ready(3, &completed));
        completed.insert(0);
        completed.insert(1);
        assert!(!d.ready(3, &completed), "join needs both branches");
        completed.insert(2);
        assert!(d.ready(3, &completed));
    }

    #[test]
    fn cycles_are_detected() {
        let mk_node = |id: usize| TpgNode {
            id,
            robot: "r1".into(),
            step_index: 1,
            atom_index: id,
            segment_index: 0,
            segment_count: 1,
            skill: "pick".into(),
            verb: Verb::Pick,
            duration_ms: 1000,
            cells: BTreeSet::new(),
            seq_order: id,
        };
        let tpg = Tpg {
            nodes: vec![mk_node(0), mk_node(1)],
            edges: vec![
                TpgEdge { from: 0, to: 1, kind: EdgeKind::Intra },
                TpgEdge { from: 1, to: 0, kind: EdgeKind::Intra },
            ],
            sources: BTreeMap::new(),
        };
        assert!(matches!(tpg.topo_order(), Err(TpgError::CyclicDependency(_))));
    }

    #[test]
    fn golden_tpgs_are_acyclic_and_dominated_by_sequential_time() {
        let z = designs::bench_world().build().unwrap();
        let lib = builtin();
        let evals = EvaluatorSet::from_library(&lib);
        for task in designs::golden_designs() {
            let p = plan(&task, &lib, &z, &evals, &PlanOptions::default()).unwrap();
            let tpg = build_tpg(&p, &lib, &z).unwrap();
            assert!(tpg.topo_order().is_ok());
            assert!(makespan(&tpg) <= tpg.sequential_duration_ms());
            // inter edges never reverse sequential order
            for e in &tpg.edges {
                assert!(
                    tpg.nodes[e.from].seq_order <= tpg.nodes[e.to].seq_order,
                    "{} edge reverses sequential order",
                    task.design_name
                );
            }
        }
    }
}
