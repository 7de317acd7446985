//! Predicate trees over world snapshots.
//!
//! Conditions are written in the skill library over named parameters
//! (`$robot`, `$brick`, `$target`, ...) and become ground once a skill is
//! concretized and expanded. Ground conditions evaluate totally and
//! deterministically against a [`WorldState`].
//!
//! The atom set is closed: new predicates are added here as enum variants,
//! not as free-form expressions.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ids::{BrickId, RobotId};
use crate::world::types::{
    BrickLocation, Cell, Cell3, GripperKind, Placement, WorldState,
};

/// A literal value or a named parameter slot.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Term<T> {
    Value(T),
    Param(String),
}

impl<T: Clone> Term<T> {
    pub fn value(&self) -> Option<&T> {
        match self {
            Term::Value(v) => Some(v),
            Term::Param(_) => None,
        }
    }

    pub fn is_param(&self) -> bool {
        matches!(self, Term::Param(_))
    }
}

impl<T> From<T> for Term<T> {
    fn from(v: T) -> Self {
        Term::Value(v)
    }
}

/// Values a parameter slot can be bound to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BindingValue {
    Robot(RobotId),
    Brick(BrickId),
    Cell(Cell),
    Cell3(Cell3),
    Num(f64),
    Text(String),
}

/// Parameter name → value map used by concretization and meta expansion.
pub type Bindings = BTreeMap<String, BindingValue>;

fn bind<T: Clone>(term: &Term<T>, b: &Bindings, pick: impl Fn(&BindingValue) -> Option<T>) -> Term<T> {
    match term {
        Term::Value(v) => Term::Value(v.clone()),
        Term::Param(name) => match b.get(name).and_then(|v| pick(v)) {
            Some(v) => Term::Value(v),
            None => Term::Param(name.clone()),
        },
    }
}

fn bind_robot(t: &Term<RobotId>, b: &Bindings) -> Term<RobotId> {
    bind(t, b, |v| match v {
        BindingValue::Robot(r) => Some(r.clone()),
        _ => None,
    })
}

fn bind_brick(t: &Term<BrickId>, b: &Bindings) -> Term<BrickId> {
    bind(t, b, |v| match v {
        BindingValue::Brick(id) => Some(id.clone()),
        _ => None,
    })
}

fn bind_cell(t: &Term<Cell>, b: &Bindings) -> Term<Cell> {
    bind(t, b, |v| match v {
        BindingValue::Cell(c) => Some(*c),
        // A cell3 binding supplies its plate-plane cell where a 2D cell is
        // expected (support and handover sites are given as placements).
        BindingValue::Cell3(c) => Some(c.xy()),
        _ => None,
    })
}

fn bind_cell3(t: &Term<Cell3>, b: &Bindings) -> Term<Cell3> {
    bind(t, b, |v| match v {
        BindingValue::Cell3(c) => Some(*c),
        _ => None,
    })
}

/// A place expression: a literal cell, the plate-plane cell of a
/// possibly-stacked target, or wherever a brick currently sits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaceExpr {
    Cell(Term<Cell>),
    XyOf(Term<Cell3>),
    CellOfBrick(Term<BrickId>),
}

impl PlaceExpr {
    fn substitute(&self, b: &Bindings) -> PlaceExpr {
        match self {
            PlaceExpr::Cell(t) => PlaceExpr::Cell(bind_cell(t, b)),
            PlaceExpr::XyOf(t) => PlaceExpr::XyOf(bind_cell3(t, b)),
            PlaceExpr::CellOfBrick(t) => PlaceExpr::CellOfBrick(bind_brick(t, b)),
        }
    }

    fn is_ground(&self) -> bool {
        match self {
            PlaceExpr::Cell(t) => !t.is_param(),
            PlaceExpr::XyOf(t) => !t.is_param(),
            PlaceExpr::CellOfBrick(t) => !t.is_param(),
        }
    }

    /// Resolve to a concrete cell, if ground and resolvable in `z`.
    pub fn resolve(&self, z: &WorldState) -> Option<Cell> {
        match self {
            PlaceExpr::Cell(t) => t.value().copied(),
            PlaceExpr::XyOf(t) => t.value().map(|c| c.xy()),
            PlaceExpr::CellOfBrick(t) => t.value().and_then(|id| z.brick_cell(id)),
        }
    }
}

/// A brick-location pattern for `brick_at` atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocExpr {
    InHand(Term<RobotId>),
    OnPlate(Term<Cell3>),
}

impl LocExpr {
    fn substitute(&self, b: &Bindings) -> LocExpr {
        match self {
            LocExpr::InHand(t) => LocExpr::InHand(bind_robot(t, b)),
            LocExpr::OnPlate(t) => LocExpr::OnPlate(bind_cell3(t, b)),
        }
    }

    fn is_ground(&self) -> bool {
        match self {
            LocExpr::InHand(t) => !t.is_param(),
            LocExpr::OnPlate(t) => !t.is_param(),
        }
    }

    fn matches(&self, loc: &BrickLocation) -> bool {
        match (self, loc) {
            (LocExpr::InHand(Term::Value(r)), BrickLocation::InHand(holder)) => r == holder,
            (LocExpr::OnPlate(Term::Value(at)), BrickLocation::OnPlate(actual)) => at == actual,
            _ => false,
        }
    }
}

/// The closed atom set. Every atom is defined for every well-formed state;
/// references to unknown entities evaluate to false rather than erroring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Atom {
    /// Robot's gripper is occupied.
    Holding(Term<RobotId>),
    /// Brick is in some robot's hand.
    InAnyHand(Term<BrickId>),
    /// Brick is exactly at the given location.
    BrickAt(Term<BrickId>, LocExpr),
    /// Robot can reach the given place.
    Reachable(Term<RobotId>, PlaceExpr),
    /// Placing this brick at the target satisfies the majority-stud rule.
    Stable(Term<BrickId>, Term<Cell3>),
    /// Every stud of the placement is backed at level-1 (always true at
    /// level 0).
    FullySupported(Term<BrickId>, Term<Cell3>),
    /// No placed brick overlaps the placement footprint at its level.
    PlacementFree(Term<BrickId>, Term<Cell3>),
    /// Robot's gripper can handle the brick.
    GripperCompatible(Term<RobotId>, Term<BrickId>),
    /// Some placed brick covers the cell at any level.
    Occupied(Term<Cell>),
    /// Some robot is actively bracing the cell.
    SupportActive(PlaceExpr),
    /// Brick pose has been confirmed by a detect skill.
    Detected(Term<BrickId>),
    /// Robot end effector is at the place.
    EefAt(Term<RobotId>, PlaceExpr),
}

impl Atom {
    fn substitute(&self, b: &Bindings) -> Atom {
        match self {
            Atom::Holding(r) => Atom::Holding(bind_robot(r, b)),
            Atom::InAnyHand(k) => Atom::InAnyHand(bind_brick(k, b)),
            Atom::BrickAt(k, loc) => Atom::BrickAt(bind_brick(k, b), loc.substitute(b)),
            Atom::Reachable(r, p) => Atom::Reachable(bind_robot(r, b), p.substitute(b)),
            Atom::Stable(k, t) => Atom::Stable(bind_brick(k, b), bind_cell3(t, b)),
            Atom::FullySupported(k, t) => Atom::FullySupported(bind_brick(k, b), bind_cell3(t, b)),
            Atom::PlacementFree(k, t) => Atom::PlacementFree(bind_brick(k, b), bind_cell3(t, b)),
            Atom::GripperCompatible(r, k) => {
                Atom::GripperCompatible(bind_robot(r, b), bind_brick(k, b))
            }
            Atom::Occupied(c) => Atom::Occupied(bind_cell(c, b)),
            Atom::SupportActive(p) => Atom::SupportActive(p.substitute(b)),
            Atom::Detected(k) => Atom::Detected(bind_brick(k, b)),
            Atom::EefAt(r, p) => Atom::EefAt(bind_robot(r, b), p.substitute(b)),
        }
    }

    fn is_ground(&self) -> bool {
        match self {
            Atom::Holding(r) => !r.is_param(),
            Atom::InAnyHand(k) => !k.is_param(),
            Atom::BrickAt(k, loc) => !k.is_param() && loc.is_ground(),
            Atom::Reachable(r, p) => !r.is_param() && p.is_ground(),
            Atom::Stable(k, t) | Atom::FullySupported(k, t) | Atom::PlacementFree(k, t) => {
                !k.is_param() && !t.is_param()
            }
            Atom::GripperCompatible(r, k) => !r.is_param() && !k.is_param(),
            Atom::Occupied(c) => !c.is_param(),
            Atom::SupportActive(p) => p.is_ground(),
            Atom::Detected(k) => !k.is_param(),
            Atom::EefAt(r, p) => !r.is_param() && p.is_ground(),
        }
    }

    /// Evaluate against a snapshot. Non-ground atoms are unsatisfied.
    fn eval(&self, z: &WorldState) -> bool {
        match self {
            Atom::Holding(Term::Value(r)) => {
                z.robots.get(r).map(|r| r.holding.is_some()).unwrap_or(false)
            }
            Atom::InAnyHand(Term::Value(k)) => z
                .bricks
                .get(k)
                .map(|b| matches!(b.location, BrickLocation::InHand(_)))
                .unwrap_or(false),
            Atom::BrickAt(Term::Value(k), loc) => z
                .bricks
                .get(k)
                .map(|b| loc.matches(&b.location))
                .unwrap_or(false),
            Atom::Reachable(Term::Value(r), p) => match (z.robots.get(r), p.resolve(z)) {
                (Some(robot), Some(cell)) => robot.base_region.contains(cell),
                _ => false,
            },
            Atom::Stable(Term::Value(k), Term::Value(at)) => match placement_of(z, k, *at) {
                Some(p) => crate::world::check_stability(z, &p),
                None => false,
            },
            Atom::FullySupported(Term::Value(k), Term::Value(at)) => {
                match placement_of(z, k, *at) {
                    Some(p) => crate::world::fully_supported(z, &p),
                    None => false,
                }
            }
            Atom::PlacementFree(Term::Value(k), Term::Value(at)) => match placement_of(z, k, *at) {
                Some(p) => p
                    .footprint()
                    .iter()
                    .all(|c| z.plate.contains(*c) && z.occupant(*c, at.level).is_none()),
                None => false,
            },
            Atom::GripperCompatible(Term::Value(r), Term::Value(k)) => {
                match (z.robots.get(r), z.bricks.get(k)) {
                    (Some(robot), Some(brick)) => match robot.gripper {
                        GripperKind::Suction => true,
                        GripperKind::Parallel => {
                            brick.brick_type.min_extent() <= robot.max_grip_studs
                        }
                    },
                    _ => false,
                }
            }
            Atom::Occupied(Term::Value(c)) => z.cell_occupied(*c),
            Atom::SupportActive(p) => match p.resolve(z) {
                Some(cell) => z.robots.values().any(|r| r.supporting == Some(cell)),
                None => false,
            },
            Atom::Detected(Term::Value(k)) => z.detected.contains(k),
            Atom::EefAt(Term::Value(r), p) => match (z.robots.get(r), p.resolve(z)) {
                (Some(robot), Some(cell)) => robot.eef_cell == cell,
                _ => false,
            },
            _ => false, // unbound parameter somewhere
        }
    }
}

fn placement_of(z: &WorldState, brick: &BrickId, at: Cell3) -> Option<Placement> {
    z.bricks
        .get(brick)
        .map(|b| Placement::new(b.brick_type, b.orientation, at))
}

/// A predicate tree with `and`/`or`/`not` connectives over [`Atom`] leaves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Const(bool),
    Atom(Atom),
    All(Vec<Condition>),
    Any(Vec<Condition>),
    Not(Box<Condition>),
}

impl Condition {
    pub const TRUE: Condition = Condition::Const(true);

    pub fn all(parts: impl IntoIterator<Item = Condition>) -> Condition {
        Condition::All(parts.into_iter().collect())
    }

    /// Replace bound parameters, leaving unknown ones in place.
    pub fn substitute(&self, b: &Bindings) -> Condition {
        match self {
            Condition::Const(v) => Condition::Const(*v),
            Condition::Atom(a) => Condition::Atom(a.substitute(b)),
            Condition::All(parts) => {
                Condition::All(parts.iter().map(|p| p.substitute(b)).collect())
            }
            Condition::Any(parts) => {
                Condition::Any(parts.iter().map(|p| p.substitute(b)).collect())
            }
            Condition::Not(inner) => Condition::Not(Box::new(inner.substitute(b))),
        }
    }

    /// True when no parameter slots remain.
    pub fn is_ground(&self) -> bool {
        match self {
            Condition::Const(_) => true,
            Condition::Atom(a) => a.is_ground(),
            Condition::All(parts) | Condition::Any(parts) => parts.iter().all(|p| p.is_ground()),
            Condition::Not(inner) => inner.is_ground(),
        }
    }

    /// Total, deterministic evaluation. Atoms with unbound parameters are
    /// unsatisfied; runtime paths only see ground conditions.
    pub fn eval(&self, z: &WorldState) -> bool {
        match self {
            Condition::Const(v) => *v,
            Condition::Atom(a) => a.eval(z),
            Condition::All(parts) => parts.iter().all(|p| p.eval(z)),
            Condition::Any(parts) => parts.iter().any(|p| p.eval(z)),
            Condition::Not(inner) => !inner.eval(z),
        }
    }

    /// First unsatisfied atom (pre-order), for precondition diagnostics.
    pub fn first_failure(&self, z: &WorldState) -> Option<String> {
        match self {
            Condition::Const(true) => None,
            Condition::Const(false) => Some("false".to_string()),
            Condition::Atom(a) => {
                if a.eval(z) {
                    None
                } else {
                    Some(format!("{a:?}"))
                }
            }
            Condition::All(parts) => parts.iter().find_map(|p| p.first_failure(z)),
            Condition::Any(parts) => {
                if self.eval(z) {
                    None
                } else {
                    parts.first().and_then(|p| p.first_failure(z))
                }
            }
            Condition::Not(inner) => {
                if self.eval(z) {
                    None
                } else {
                    Some(format!("not({:?})", inner))
                }
            }
        }
    }

    /// Evaluate every atom leaf, labeled in prefix notation. Powers the
    /// atom-level condition reports in skill logs.
    pub fn atom_results(&self, z: &WorldState) -> Vec<(String, bool)> {
        fn walk(c: &Condition, z: &WorldState, out: &mut Vec<(String, bool)>) {
            match c {
                Condition::Const(_) => {}
                Condition::Atom(a) => {
                    let label = prefix::to_value(&Condition::Atom(a.clone())).to_string();
                    out.push((label, a.eval(z)));
                }
                Condition::All(parts) | Condition::Any(parts) => {
                    for p in parts {
                        walk(p, z, out);
                    }
                }
                Condition::Not(inner) => walk(inner, z, out),
            }
        }
        let mut out = Vec::new();
        walk(self, z, &mut out);
        out
    }

    /// Parameter names referenced anywhere in the tree.
    pub fn params(&self) -> Vec<String> {
        fn term_param<T>(t: &Term<T>, out: &mut Vec<String>) {
            if let Term::Param(p) = t {
                out.push(p.clone());
            }
        }
        fn place(p: &PlaceExpr, out: &mut Vec<String>) {
            match p {
                PlaceExpr::Cell(t) => term_param(t, out),
                PlaceExpr::XyOf(t) => term_param(t, out),
                PlaceExpr::CellOfBrick(t) => term_param(t, out),
            }
        }
        fn walk(c: &Condition, out: &mut Vec<String>) {
            match c {
                Condition::Const(_) => {}
                Condition::Atom(a) => match a {
                    Atom::Holding(r) => term_param(r, out),
                    Atom::InAnyHand(k) | Atom::Detected(k) => term_param(k, out),
                    Atom::BrickAt(k, loc) => {
                        term_param(k, out);
                        match loc {
                            LocExpr::InHand(r) => term_param(r, out),
                            LocExpr::OnPlate(t) => term_param(t, out),
                        }
                    }
                    Atom::Reachable(r, p) | Atom::EefAt(r, p) => {
                        term_param(r, out);
                        place(p, out);
                    }
                    Atom::Stable(k, t) | Atom::FullySupported(k, t) | Atom::PlacementFree(k, t) => {
                        term_param(k, out);
                        term_param(t, out);
                    }
                    Atom::GripperCompatible(r, k) => {
                        term_param(r, out);
                        term_param(k, out);
                    }
                    Atom::Occupied(c) => term_param(c, out),
                    Atom::SupportActive(p) => place(p, out),
                },
                Condition::All(parts) | Condition::Any(parts) => {
                    for p in parts {
                        walk(p, out);
                    }
                }
                Condition::Not(inner) => walk(inner, out),
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out.sort();
        out.dedup();
        out
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", prefix::to_value(self))
    }
}

/// Prefix-notation (s-expression style JSON arrays) reader and writer for
/// conditions as they appear in skill library files.
pub mod prefix {
    use super::*;
    use serde_json::{json, Value};

    /// Errors from parsing a prefix-notation condition expression.
    #[derive(Debug, thiserror::Error)]
    #[error("bad condition expression at {path}: {reason}")]
    pub struct ParseError {
        pub path: String,
        pub reason: String,
    }

    fn err<T>(path: &str, reason: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            path: path.to_string(),
            reason: reason.into(),
        })
    }

    pub fn parse(v: &Value) -> Result<Condition, ParseError> {
        parse_at(v, "$")
    }

    fn parse_at(v: &Value, path: &str) -> Result<Condition, ParseError> {
        match v {
            Value::Bool(b) => Ok(Condition::Const(*b)),
            Value::Array(items) => {
                let head = match items.first() {
                    Some(Value::String(s)) => s.as_str(),
                    _ => return err(path, "expected [op, ...] with a string op"),
                };
                let args = &items[1..];
                match head {
                    "and" | "or" => {
                        let parts = args
                            .iter()
                            .enumerate()
                            .map(|(i, a)| parse_at(a, &format!("{path}[{}]", i + 1)))
                            .collect::<Result<Vec<_>, _>>()?;
                        Ok(if head == "and" {
                            Condition::All(parts)
                        } else {
                            Condition::Any(parts)
                        })
                    }
                    "not" => {
                        if args.len() != 1 {
                            return err(path, "not takes one argument");
                        }
                        Ok(Condition::Not(Box::new(parse_at(
                            &args[0],
                            &format!("{path}[1]"),
                        )?)))
                    }
                    _ => Ok(Condition::Atom(parse_atom(head, args, path)?)),
                }
            }
            _ => err(path, "expected boolean or array"),
        }
    }

    fn parse_atom(head: &str, args: &[Value], path: &str) -> Result<Atom, ParseError> {
        let need = |n: usize| -> Result<(), ParseError> {
            if args.len() == n {
                Ok(())
            } else {
                err(path, format!("{head} takes {n} argument(s), got {}", args.len()))
            }
        };
        match head {
            "holding" => {
                need(1)?;
                Ok(Atom::Holding(robot_term(&args[0], path)?))
            }
            "in_any_hand" => {
                need(1)?;
                Ok(Atom::InAnyHand(brick_term(&args[0], path)?))
            }
            "brick_at" => {
                need(2)?;
                Ok(Atom::BrickAt(
                    brick_term(&args[0], path)?,
                    loc_expr(&args[1], path)?,
                ))
            }
            "reachable" => {
                need(2)?;
                Ok(Atom::Reachable(
                    robot_term(&args[0], path)?,
                    place_expr(&args[1], path)?,
                ))
            }
            "stable" => {
                need(2)?;
                Ok(Atom::Stable(
                    brick_term(&args[0], path)?,
                    cell3_term(&args[1], path)?,
                ))
            }
            "fully_supported" => {
                need(2)?;
                Ok(Atom::FullySupported(
                    brick_term(&args[0], path)?,
                    cell3_term(&args[1], path)?,
                ))
            }
            "placement_free" => {
                need(2)?;
                Ok(Atom::PlacementFree(
                    brick_term(&args[0], path)?,
                    cell3_term(&args[1], path)?,
                ))
            }
            "gripper_compatible" => {
                need(2)?;
                Ok(Atom::GripperCompatible(
                    robot_term(&args[0], path)?,
                    brick_term(&args[1], path)?,
                ))
            }
            "occupied" => {
                need(1)?;
                Ok(Atom::Occupied(cell_term(&args[0], path)?))
            }
            "support_active" => {
                need(1)?;
                Ok(Atom::SupportActive(place_expr(&args[0], path)?))
            }
            "detected" => {
                need(1)?;
                Ok(Atom::Detected(brick_term(&args[0], path)?))
            }
            "eef_at" => {
                need(2)?;
                Ok(Atom::EefAt(
                    robot_term(&args[0], path)?,
                    place_expr(&args[1], path)?,
                ))
            }
            other => err(path, format!("unknown atom {other:?}")),
        }
    }

    fn param_or<T>(
        v: &Value,
        path: &str,
        from_str: impl Fn(&str) -> Term<T>,
    ) -> Result<Term<T>, ParseError> {
        match v {
            Value::String(s) if s.starts_with('$') => Ok(Term::Param(s[1..].to_string())),
            Value::String(s) => Ok(from_str(s)),
            _ => err(path, "expected identifier string"),
        }
    }

    fn robot_term(v: &Value, path: &str) -> Result<Term<RobotId>, ParseError> {
        param_or(v, path, |s| Term::Value(RobotId::from(s)))
    }

    fn brick_term(v: &Value, path: &str) -> Result<Term<BrickId>, ParseError> {
        param_or(v, path, |s| Term::Value(BrickId::from(s)))
    }

    fn cell_term(v: &Value, path: &str) -> Result<Term<Cell>, ParseError> {
        match v {
            Value::String(s) if s.starts_with('$') => Ok(Term::Param(s[1..].to_string())),
            Value::Array(xy) if xy.len() == 2 => {
                let x = int(&xy[0], path)?;
                let y = int(&xy[1], path)?;
                Ok(Term::Value(Cell::new(x, y)))
            }
            _ => err(path, "expected \"$param\" or [x, y]"),
        }
    }

    fn cell3_term(v: &Value, path: &str) -> Result<Term<Cell3>, ParseError> {
        match v {
            Value::String(s) if s.starts_with('$') => Ok(Term::Param(s[1..].to_string())),
            Value::Array(xyz) if xyz.len() == 3 => {
                let x = int(&xyz[0], path)?;
                let y = int(&xyz[1], path)?;
                let level = int(&xyz[2], path)?;
                Ok(Term::Value(Cell3::new(x, y, level)))
            }
            _ => err(path, "expected \"$param\" or [x, y, level]"),
        }
    }

    fn place_expr(v: &Value, path: &str) -> Result<PlaceExpr, ParseError> {
        match v {
            Value::Array(items) => match items.first() {
                Some(Value::String(op)) if op == "cell" => {
                    Ok(PlaceExpr::Cell(cell_term(&Value::Array(items[1..].to_vec()), path)?))
                }
                Some(Value::String(op)) if op == "xy_of" => {
                    if items.len() != 2 {
                        return err(path, "xy_of takes one argument");
                    }
                    Ok(PlaceExpr::XyOf(cell3_term(&items[1], path)?))
                }
                Some(Value::String(op)) if op == "cell_of" => {
                    if items.len() != 2 {
                        return err(path, "cell_of takes one argument");
                    }
                    Ok(PlaceExpr::CellOfBrick(brick_term(&items[1], path)?))
                }
                // bare [x, y]
                Some(Value::Number(_)) if items.len() == 2 => {
                    Ok(PlaceExpr::Cell(cell_term(v, path)?))
                }
                _ => err(path, "expected [\"cell\"|\"xy_of\"|\"cell_of\", ...] or [x, y]"),
            },
            Value::String(s) if s.starts_with('$') => {
                Ok(PlaceExpr::Cell(Term::Param(s[1..].to_string())))
            }
            _ => err(path, "expected place expression"),
        }
    }

    fn loc_expr(v: &Value, path: &str) -> Result<LocExpr, ParseError> {
        match v {
            Value::Array(items) => match items.first() {
                Some(Value::String(op)) if op == "in_hand" => {
                    if items.len() != 2 {
                        return err(path, "in_hand takes one argument");
                    }
                    Ok(LocExpr::InHand(robot_term(&items[1], path)?))
                }
                Some(Value::String(op)) if op == "on_plate" => {
                    if items.len() != 2 {
                        return err(path, "on_plate takes one argument");
                    }
                    Ok(LocExpr::OnPlate(cell3_term(&items[1], path)?))
                }
                _ => err(path, "expected [\"in_hand\", robot] or [\"on_plate\", cell3]"),
            },
            _ => err(path, "expected location expression"),
        }
    }

    fn int(v: &Value, path: &str) -> Result<i32, ParseError> {
        v.as_i64()
            .map(|n| n as i32)
            .ok_or_else(|| ParseError {
                path: path.to_string(),
                reason: "expected integer".to_string(),
            })
    }

    /// Serialize back to the prefix JSON form.
    pub fn to_value(c: &Condition) -> Value {
        match c {
            Condition::Const(b) => json!(*b),
            Condition::All(parts) => {
                let mut arr = vec![json!("and")];
                arr.extend(parts.iter().map(to_value));
                Value::Array(arr)
            }
            Condition::Any(parts) => {
                let mut arr = vec![json!("or")];
                arr.extend(parts.iter().map(to_value));
                Value::Array(arr)
            }
            Condition::Not(inner) => json!(["not", to_value(inner)]),
            Condition::Atom(a) => atom_to_value(a),
        }
    }

    fn term_str<T: fmt::Display>(t: &Term<T>) -> Value {
        match t {
            Term::Value(v) => json!(v.to_string()),
            Term::Param(p) => json!(format!("${p}")),
        }
    }

    fn cell_val(t: &Term<Cell>) -> Value {
        match t {
            Term::Value(c) => json!([c.x, c.y]),
            Term::Param(p) => json!(format!("${p}")),
        }
    }

    fn cell3_val(t: &Term<Cell3>) -> Value {
        match t {
            Term::Value(c) => json!([c.x, c.y, c.level]),
            Term::Param(p) => json!(format!("${p}")),
        }
    }

    fn place_val(p: &PlaceExpr) -> Value {
        match p {
            PlaceExpr::Cell(t) => match t {
                Term::Value(c) => json!(["cell", c.x, c.y]),
                Term::Param(p) => json!(format!("${p}")),
            },
            PlaceExpr::XyOf(t) => json!(["xy_of", cell3_val(t)]),
            PlaceExpr::CellOfBrick(t) => json!(["cell_of", term_str(t)]),
        }
    }

    fn atom_to_value(a: &Atom) -> Value {
        match a {
            Atom::Holding(r) => json!(["holding", term_str(r)]),
            Atom::InAnyHand(k) => json!(["in_any_hand", term_str(k)]),
            Atom::BrickAt(k, loc) => {
                let loc = match loc {
                    LocExpr::InHand(r) => json!(["in_hand", term_str(r)]),
                    LocExpr::OnPlate(t) => json!(["on_plate", cell3_val(t)]),
                };
                json!(["brick_at", term_str(k), loc])
            }
            Atom::Reachable(r, p) => json!(["reachable", term_str(r), place_val(p)]),
            Atom::Stable(k, t) => json!(["stable", term_str(k), cell3_val(t)]),
            Atom::FullySupported(k, t) => json!(["fully_supported", term_str(k), cell3_val(t)]),
            Atom::PlacementFree(k, t) => json!(["placement_free", term_str(k), cell3_val(t)]),
            Atom::GripperCompatible(r, k) => {
                json!(["gripper_compatible", term_str(r), term_str(k)])
            }
            Atom::Occupied(c) => json!(["occupied", cell_val(c)]),
            Atom::SupportActive(p) => json!(["support_active", place_val(p)]),
            Atom::Detected(k) => json!(["detected", term_str(k)]),
            Atom::EefAt(r, p) => json!(["eef_at", term_str(r), place_val(p)]),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn parse(v: serde_json::Value) -> Condition {
        prefix::parse(&v).unwrap()
    }

    #[test]
    fn prefix_round_trip() {
        let src = json!([
            "and",
            ["not", ["holding", "$robot"]],
            ["reachable", "$robot", ["cell_of", "$brick"]],
            ["gripper_compatible", "$robot", "$brick"]
        ]);
        let cond = parse(src.clone());
        assert_eq!(prefix::to_value(&cond), src);
        assert_eq!(
            cond.params(),
            vec!["brick".to_string(), "robot".to_string()]
        );
    }

    #[test]
    fn substitution_grounds_params() {
        let cond = parse(json!(["holding", "$robot"]));
        assert!(!cond.is_ground());
        let mut b = Bindings::new();
        b.insert("robot".into(), BindingValue::Robot(RobotId::from("r1")));
        let ground = cond.substitute(&b);
        assert!(ground.is_ground());
        assert_eq!(
            ground,
            Condition::Atom(Atom::Holding(Term::Value(RobotId::from("r1"))))
        );
    }

    #[test]
    fn unknown_atom_is_rejected() {
        let e = prefix::parse(&json!(["levitating", "$brick"])).unwrap_err();
        assert!(e.reason.contains("unknown atom"));
    }

    #[test]
    fn bad_arity_is_rejected() {
        assert!(prefix::parse(&json!(["holding"])).is_err());
        assert!(prefix::parse(&json!(["not"])).is_err());
    }
}
