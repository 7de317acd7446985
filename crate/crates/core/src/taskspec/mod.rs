//! Assembly task documents: the typed schema through which task sequences
//! enter the system, relative-constraint grounding, and inventory checks.

pub mod designs;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ids::BrickId;
use crate::world::types::{BrickLocation, BrickType, Cell, Cell3, Orientation, WorldState};

/// Meta skills a task document may name as hints.
pub const META_NAMES: [&str; 3] = ["PickPlace", "PickPlacewSupport", "PickHandoverPlace"];

/// Errors from task parsing and grounding.
#[derive(Debug, Clone, thiserror::Error)]
pub enum TaskError {
    #[error("schema violation at {path}: {reason}")]
    SchemaViolation { path: String, reason: String },
    #[error("unknown relation {0:?}")]
    UnknownRelation(String),
    #[error("unknown meta skill name {0:?}")]
    UnknownMetaSkillName(String),
    #[error("step {step} anchors to step {anchor}, which is not placed yet")]
    UnplacedAnchor { step: usize, anchor: usize },
}

fn schema_err<T>(path: impl Into<String>, reason: impl Into<String>) -> Result<T, TaskError> {
    Err(TaskError::SchemaViolation {
        path: path.into(),
        reason: reason.into(),
    })
}

/// Spatial relation of a step to an earlier anchor step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    AlignedCenter,
    ShiftedLeft,
    ShiftedRight,
    ShiftedFront,
    ShiftedBack,
}

impl Relation {
    fn parse(s: &str) -> Result<Relation, TaskError> {
        Ok(match s {
            "AlignedCenter" => Relation::AlignedCenter,
            "ShiftedLeft" => Relation::ShiftedLeft,
            "ShiftedRight" => Relation::ShiftedRight,
            "ShiftedFront" => Relation::ShiftedFront,
            "ShiftedBack" => Relation::ShiftedBack,
            other => return Err(TaskError::UnknownRelation(other.to_string())),
        })
    }

    fn name(&self) -> &'static str {
        match self {
            Relation::AlignedCenter => "AlignedCenter",
            Relation::ShiftedLeft => "ShiftedLeft",
            Relation::ShiftedRight => "ShiftedRight",
            Relation::ShiftedFront => "ShiftedFront",
            Relation::ShiftedBack => "ShiftedBack",
        }
    }
}

/// Where a step's brick goes: an absolute plate pose or a relative
/// constraint against an earlier step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepTarget {
    Absolute(Cell3),
    Relative { anchor: usize, relation: Relation },
}

/// One assembly step.
#[derive(Debug, Clone, PartialEq)]
pub struct AssemblyStep {
    pub index: usize,
    pub brick_type: BrickType,
    pub target: StepTarget,
    pub meta_hint: Option<String>,
}

/// An ordered assembly sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub design_name: String,
    pub steps: Vec<AssemblyStep>,
}

impl TaskSpec {
    /// Demanded brick counts per type.
    pub fn demand(&self) -> BTreeMap<BrickType, u32> {
        let mut d = BTreeMap::new();
        for s in &self.steps {
            *d.entry(s.brick_type).or_insert(0) += 1;
        }
        d
    }
}

// --- raw document form -----------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct RawTask {
    design_name: String,
    steps: Vec<RawStep>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawStep {
    index: usize,
    brick_type: String,
    target: RawTarget,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta_hint: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawTarget {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    abs: Option<[i32; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rel: Option<RawRel>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawRel {
    anchor: usize,
    relation: String,
}

/// Parse and validate a task document.
pub fn parse_task(document: &str) -> Result<TaskSpec, TaskError> {
    let raw: RawTask = match serde_json::from_str(document) {
        Ok(r) => r,
        Err(e) => return schema_err("$", e.to_string()),
    };
    if raw.steps.is_empty() {
        return schema_err("$.steps", "must not be empty");
    }
    let mut steps = Vec::with_capacity(raw.steps.len());
    for (i, rs) in raw.steps.iter().enumerate() {
        let path = format!("$.steps[{i}]");
        if rs.index != i + 1 {
            return schema_err(
                format!("{path}.index"),
                format!("indices must be contiguous from 1; expected {}, got {}", i + 1, rs.index),
            );
        }
        let brick_type: BrickType = match rs.brick_type.clone().try_into() {
            Ok(t) => t,
            Err(e) => return schema_err(format!("{path}.brick_type"), e),
        };
        let target = match (&rs.target.abs, &rs.target.rel) {
            (Some(a), None) => StepTarget::Absolute(Cell3::new(a[0], a[1], a[2])),
            (None, Some(r)) => {
                let relation = Relation::parse(&r.relation)?;
                if r.anchor >= rs.index {
                    return schema_err(
                        format!("{path}.target.rel.anchor"),
                        format!("anchor {} must precede step {}", r.anchor, rs.index),
                    );
                }
                if r.anchor == 0 {
                    return schema_err(format!("{path}.target.rel.anchor"), "steps are numbered from 1");
                }
                StepTarget::Relative {
                    anchor: r.anchor,
                    relation,
                }
            }
            _ => {
                return schema_err(
                    format!("{path}.target"),
                    "exactly one of `abs` or `rel` is required",
                )
            }
        };
        if let Some(hint) = &rs.meta_hint {
            if !META_NAMES.contains(&hint.as_str()) {
                return Err(TaskError::UnknownMetaSkillName(hint.clone()));
            }
        }
        steps.push(AssemblyStep {
            index: rs.index,
            brick_type,
            target,
            meta_hint: rs.meta_hint.clone(),
        });
    }
    Ok(TaskSpec {
        design_name: raw.design_name,
        steps,
    })
}

pub fn parse_task_file(path: &Path) -> Result<TaskSpec, TaskError> {
    let s = std::fs::read_to_string(path)
        .map_err(|e| TaskError::SchemaViolation {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
    parse_task(&s)
}

/// Serialize a task back to its document form.
pub fn serialize_task(task: &TaskSpec) -> String {
    let raw = RawTask {
        design_name: task.design_name.clone(),
        steps: task
            .steps
            .iter()
            .map(|s| RawStep {
                index: s.index,
                brick_type: s.brick_type.to_string(),
                target: match &s.target {
                    StepTarget::Absolute(at) => RawTarget {
                        abs: Some([at.x, at.y, at.level]),
                        rel: None,
                    },
                    StepTarget::Relative { anchor, relation } => RawTarget {
                        abs: None,
                        rel: Some(RawRel {
                            anchor: *anchor,
                            relation: relation.name().to_string(),
                        }),
                    },
                },
                meta_hint: s.meta_hint.clone(),
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&raw).expect("task serializes");
    s.push('\n');
    s
}

/// Ground a step's target to a concrete pose. Relative constraints place
/// one level above the anchor; `Shifted*` additionally moves by half the
/// step brick's footprint along the named axis (x for left/right, y for
/// front/back), at the default orientation.
pub fn ground_relative(
    step: &AssemblyStep,
    placed: &BTreeMap<usize, Cell3>,
) -> Result<Cell3, TaskError> {
    match &step.target {
        StepTarget::Absolute(at) => Ok(*at),
        StepTarget::Relative { anchor, relation } => {
            let base = placed.get(anchor).ok_or(TaskError::UnplacedAnchor {
                step: step.index,
                anchor: *anchor,
            })?;
            let p = crate::world::types::Placement::new(
                step.brick_type,
                Orientation::Deg0,
                Cell3::new(0, 0, 0),
            );
            let (ex, ey) = p.extents();
            let (dx, dy) = match relation {
                Relation::AlignedCenter => (0, 0),
                Relation::ShiftedLeft => (-(ex / 2), 0),
                Relation::ShiftedRight => (ex / 2, 0),
                Relation::ShiftedFront => (0, -(ey / 2)),
                Relation::ShiftedBack => (0, ey / 2),
            };
            Ok(Cell3::new(base.x + dx, base.y + dy, base.level + 1))
        }
    }
}

/// Brick instances available per type, with store cells.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Inventory {
    pub available: BTreeMap<BrickType, Vec<(BrickId, Cell)>>,
}

impl Inventory {
    /// Inventory of a world's stored bricks.
    pub fn from_world(z: &WorldState) -> Inventory {
        let mut available: BTreeMap<BrickType, Vec<(BrickId, Cell)>> = BTreeMap::new();
        for b in z.bricks.values() {
            if let BrickLocation::InStore(c) = b.location {
                available.entry(b.brick_type).or_default().push((b.id.clone(), c));
            }
        }
        Inventory { available }
    }

    pub fn count(&self, t: &BrickType) -> u32 {
        self.available.get(t).map(|v| v.len() as u32).unwrap_or(0)
    }
}

/// Result of checking a task against an inventory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InventoryReport {
    pub ok: bool,
    /// Missing count per brick type.
    pub deficits: BTreeMap<BrickType, u32>,
}

/// Demand vs. availability per brick type.
pub fn validate_inventory(task: &TaskSpec, inv: &Inventory) -> InventoryReport {
    let mut deficits = BTreeMap::new();
    for (t, needed) in task.demand() {
        let have = inv.count(&t);
        if have < needed {
            deficits.insert(t, needed - have);
        }
    }
    InventoryReport {
        ok: deficits.is_empty(),
        deficits,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(index: usize, t: &str, target: StepTarget) -> AssemblyStep {
        AssemblyStep {
            index,
            brick_type: t.to_string().try_into().unwrap(),
            target,
            meta_hint: None,
        }
    }

    #[test]
    fn parse_rejects_empty_steps() {
        let doc = r#"{"design_name":"x","steps":[]}"#;
        assert!(matches!(
            parse_task(doc),
            Err(TaskError::SchemaViolation { path, .. }) if path == "$.steps"
        ));
    }

    #[test]
    fn parse_rejects_unknown_relation() {
        let doc = r#"{"design_name":"x","steps":[
            {"index":1,"brick_type":"2x4","target":{"abs":[1,1,0]}},
            {"index":2,"brick_type":"2x4","target":{"rel":{"anchor":1,"relation":"ShiftedDiagonal"}}}
        ]}"#;
        assert!(matches!(
            parse_task(doc),
            Err(TaskError::UnknownRelation(r)) if r == "ShiftedDiagonal"
        ));
    }

    #[test]
    fn parse_rejects_unknown_meta_hint_and_bad_anchor() {
        let doc = r#"{"design_name":"x","steps":[
            {"index":1,"brick_type":"2x4","target":{"abs":[1,1,0]},"meta_hint":"FlyToMoon"}
        ]}"#;
        assert!(matches!(parse_task(doc), Err(TaskError::UnknownMetaSkillName(_))));

        let doc = r#"{"design_name":"x","steps":[
            {"index":1,"brick_type":"2x4","target":{"rel":{"anchor":1,"relation":"AlignedCenter"}}}
        ]}"#;
        assert!(parse_task(doc).is_err());
    }

    #[test]
    fn parse_serialize_round_trip() {
        let doc = r#"{"design_name":"demo","steps":[
            {"index":1,"brick_type":"2x4","target":{"abs":[10,10,0]}},
            {"index":2,"brick_type":"2x4","target":{"rel":{"anchor":1,"relation":"ShiftedLeft"}},"meta_hint":"PickPlace"}
        ]}"#;
        let task = parse_task(doc).unwrap();
        let again = parse_task(&serialize_task(&task)).unwrap();
        assert_eq!(task, again);
    }

    #[test]
    fn grounding_matches_half_footprint_rule() {
        let mut placed = BTreeMap::new();
        placed.insert(1usize, Cell3::new(10, 10, 0));

        let aligned = step(2, "2x4", StepTarget::Relative { anchor: 1, relation: Relation::AlignedCenter });
        assert_eq!(ground_relative(&aligned, &placed).unwrap(), Cell3::new(10, 10, 1));

        let left = step(2, "2x4", StepTarget::Relative { anchor: 1, relation: Relation::ShiftedLeft });
        assert_eq!(ground_relative(&left, &placed).unwrap(), Cell3::new(8, 10, 1));

        let back = step(2, "2x4", StepTarget::Relative { anchor: 1, relation: Relation::ShiftedBack });
        assert_eq!(ground_relative(&back, &placed).unwrap(), Cell3::new(10, 11, 1));

        let unplaced = step(3, "2x4", StepTarget::Relative { anchor: 2, relation: Relation::AlignedCenter });
        assert!(matches!(
            ground_relative(&unplaced, &placed),
            Err(TaskError::UnplacedAnchor { step: 3, anchor: 2 })
        ));
    }

    #[test]
    fn inventory_validation_counts_deficits() {
        let task = TaskSpec {
            design_name: "t".into(),
            steps: vec![
                step(1, "2x4", StepTarget::Absolute(Cell3::new(0, 0, 0))),
                step(2, "2x4", StepTarget::Absolute(Cell3::new(6, 0, 0))),
                step(3, "2x4", StepTarget::Absolute(Cell3::new(12, 0, 0))),
            ],
        };
        let mut inv = Inventory::default();
        inv.available.entry(BrickType::new(2, 4)).or_default().extend([
            (BrickId::from("b1"), Cell::new(0, 40)),
            (BrickId::from("b2"), Cell::new(3, 40)),
        ]);
        let report = validate_inventory(&task, &inv);
        assert!(!report.ok);
        assert_eq!(report.deficits[&BrickType::new(2, 4)], 1);

        // empty task against empty inventory is fine
        let empty = TaskSpec { design_name: "e".into(), steps: vec![] };
        assert!(validate_inventory(&empty, &Inventory::default()).ok);

        // adding inventory never creates a deficit
        inv.available
            .entry(BrickType::new(2, 4))
            .or_default()
            .push((BrickId::from("b3"), Cell::new(6, 40)));
        assert!(validate_inventory(&task, &inv).ok);
    }
}
