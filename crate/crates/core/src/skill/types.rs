//! Skill tuple types: verb, nouns, policy, conditions, evaluator.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ids::{secs_to_ms, BrickId, DurationMs, RobotId};
use crate::skill::condition::{Bindings, BindingValue, Condition};
use crate::world::types::BrickType;

/// Action type of a skill. The named verbs map 1:1 to world effect
/// functions; custom verbs are belief-only no-ops until an effect is
/// registered for them.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Verb {
    Transit,
    Pick,
    PlaceUp,
    PlaceDown,
    SupportUp,
    SupportDown,
    Handover,
    Detect,
    Custom(String),
}

impl Verb {
    pub const ATOMIC: [Verb; 8] = [
        Verb::Transit,
        Verb::Pick,
        Verb::PlaceUp,
        Verb::PlaceDown,
        Verb::SupportUp,
        Verb::SupportDown,
        Verb::Handover,
        Verb::Detect,
    ];

    pub fn name(&self) -> &str {
        match self {
            Verb::Transit => "transit",
            Verb::Pick => "pick",
            Verb::PlaceUp => "place_up",
            Verb::PlaceDown => "place_down",
            Verb::SupportUp => "support_up",
            Verb::SupportDown => "support_down",
            Verb::Handover => "handover",
            Verb::Detect => "detect",
            Verb::Custom(name) => name,
        }
    }

    /// Verbs that move a brick; the targets of risk-gated outcome checks.
    pub fn is_manipulation(&self) -> bool {
        matches!(
            self,
            Verb::Pick | Verb::PlaceUp | Verb::PlaceDown | Verb::Handover
        )
    }
}

impl fmt::Display for Verb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Verb {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "transit" => Verb::Transit,
            "pick" => Verb::Pick,
            "place_up" => Verb::PlaceUp,
            "place_down" => Verb::PlaceDown,
            "support_up" => Verb::SupportUp,
            "support_down" => Verb::SupportDown,
            "handover" => Verb::Handover,
            "detect" => Verb::Detect,
            other => Verb::Custom(other.to_string()),
        })
    }
}

impl Serialize for Verb {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Verb {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(s.parse().unwrap())
    }
}

/// A reference to a manipulable object: a concrete brick or a category.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectRef {
    Instance(BrickId),
    Category(BrickType),
}

/// The nouns a skill applies to. Abstract skills hold categories;
/// concretized skills hold instances.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NounSet {
    #[serde(default)]
    pub robots: Vec<RobotId>,
    #[serde(default)]
    pub objects: Vec<ObjectRef>,
    #[serde(default)]
    pub workspace: String,
}

impl NounSet {
    pub fn is_instance_level(&self) -> bool {
        self.objects
            .iter()
            .all(|o| matches!(o, ObjectRef::Instance(_)))
    }
}

/// Kinds of parameter slots a skill template declares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Robot,
    Brick {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        category: Option<BrickType>,
    },
    Cell,
    Cell3,
}

/// One declared parameter slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
}

impl ParamSpec {
    pub fn robot(name: &str) -> Self {
        Self {
            name: name.to_string(),
            kind: ParamKind::Robot,
        }
    }

    pub fn brick(name: &str) -> Self {
        Self {
            name: name.to_string(),
            kind: ParamKind::Brick { category: None },
        }
    }

    pub fn cell(name: &str) -> Self {
        Self {
            name: name.to_string(),
            kind: ParamKind::Cell,
        }
    }

    pub fn cell3(name: &str) -> Self {
        Self {
            name: name.to_string(),
            kind: ParamKind::Cell3,
        }
    }
}

/// A named implementation variant of a policy (e.g. two motion planners),
/// the arms of policy-level algorithm selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImplVariant {
    pub name: String,
    pub duration_multiplier: f64,
    pub nominal_success: f64,
}

/// Executable-policy description: which effect runs, how long it nominally
/// takes, and tunable parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub effect: Verb,
    pub nominal_duration_s: f64,
    #[serde(default)]
    pub parameters: BTreeMap<String, serde_json::Value>,
    pub variants: Vec<ImplVariant>,
}

impl PolicySpec {
    pub fn new(effect: Verb, nominal_duration_s: f64) -> Self {
        Self {
            effect,
            nominal_duration_s,
            parameters: BTreeMap::new(),
            variants: vec![ImplVariant {
                name: "default".to_string(),
                duration_multiplier: 1.0,
                nominal_success: 1.0,
            }],
        }
    }

    pub fn nominal_duration_ms(&self) -> DurationMs {
        secs_to_ms(self.nominal_duration_s)
    }

    /// Seconds the end effector spends crossing one cell during transit.
    pub fn cell_time_s(&self) -> f64 {
        self.parameters
            .get("cell_time_s")
            .and_then(|v| v.as_f64())
            .unwrap_or(0.05)
    }

    /// The active implementation variant (selected by name parameter, else
    /// the first registered).
    pub fn active_variant(&self) -> &ImplVariant {
        let chosen = self.parameters.get("variant").and_then(|v| v.as_str());
        chosen
            .and_then(|name| self.variants.iter().find(|v| v.name == name))
            .unwrap_or(&self.variants[0])
    }

    /// Smallest duration multiplier across variants; used for admissible
    /// cost lower bounds.
    pub fn min_variant_multiplier(&self) -> f64 {
        self.variants
            .iter()
            .map(|v| v.duration_multiplier)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.nominal_duration_s <= 0.0 {
            return Err(format!(
                "policy for {} has non-positive nominal duration",
                self.effect
            ));
        }
        if self.variants.is_empty() {
            return Err(format!("policy for {} has no variants", self.effect));
        }
        for v in &self.variants {
            if !(0.0..=1.0).contains(&v.nominal_success) {
                return Err(format!("variant {} success out of [0,1]", v.name));
            }
            if v.duration_multiplier <= 0.0 {
                return Err(format!("variant {} multiplier must be positive", v.name));
            }
        }
        Ok(())
    }
}

/// Coarse plate zone by which robots can reach it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bucket {
    Exclusive(RobotId),
    Shared,
    Unreachable,
}

/// Object slot of an evaluator/risk context: a brick instance or its class.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKey {
    Class(BrickType),
    Instance(BrickId),
}

/// Context under which costs, success rates, and risks are estimated.
/// `None` fields widen the context.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ContextKey {
    pub verb: Verb,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robot: Option<RobotId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<ObjectKey>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bucket: Option<Bucket>,
}

impl ContextKey {
    pub fn verb(verb: Verb) -> Self {
        Self {
            verb,
            robot: None,
            object: None,
            bucket: None,
        }
    }

    pub fn with_robot(mut self, robot: RobotId) -> Self {
        self.robot = Some(robot);
        self
    }

    pub fn with_object(mut self, object: ObjectKey) -> Self {
        self.object = Some(object);
        self
    }

    pub fn with_bucket(mut self, bucket: Bucket) -> Self {
        self.bucket = Some(bucket);
        self
    }

    /// Successively widened versions of this key, most specific first:
    /// drop bucket, then object, then robot.
    pub fn widening_chain(&self) -> Vec<ContextKey> {
        let mut chain = vec![self.clone()];
        let mut k = self.clone();
        if k.bucket.is_some() {
            k.bucket = None;
            chain.push(k.clone());
        }
        if k.object.is_some() {
            k.object = None;
            chain.push(k.clone());
        }
        if k.robot.is_some() {
            k.robot = None;
            chain.push(k.clone());
        }
        chain.dedup();
        chain
    }
}

/// Serialize context-keyed maps as pair lists (JSON object keys must be
/// strings).
pub mod ctx_map {
    use super::ContextKey;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    pub fn serialize<S: Serializer, V: Serialize>(
        map: &BTreeMap<ContextKey, V>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        map.iter().collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>, V: Deserialize<'de>>(
        d: D,
    ) -> Result<BTreeMap<ContextKey, V>, D::Error> {
        Ok(Vec::<(ContextKey, V)>::deserialize(d)?.into_iter().collect())
    }
}

/// Per-context cost and success model. Lookups always return a value,
/// widening the context and finally falling back to the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluator {
    #[serde(default, with = "ctx_map")]
    pub cost_ms: BTreeMap<ContextKey, DurationMs>,
    #[serde(default, with = "ctx_map")]
    pub success: BTreeMap<ContextKey, f64>,
    pub default_cost_ms: DurationMs,
    pub default_success: f64,
}

impl Evaluator {
    pub fn with_defaults(default_cost_ms: DurationMs, default_success: f64) -> Self {
        Self {
            cost_ms: BTreeMap::new(),
            success: BTreeMap::new(),
            default_cost_ms,
            default_success,
        }
    }

    pub fn cost(&self, key: &ContextKey) -> DurationMs {
        for k in key.widening_chain() {
            if let Some(c) = self.cost_ms.get(&k) {
                return *c;
            }
        }
        self.default_cost_ms
    }

    pub fn success(&self, key: &ContextKey) -> f64 {
        for k in key.widening_chain() {
            if let Some(p) = self.success.get(&k) {
                return *p;
            }
        }
        self.default_success
    }

    pub fn validate(&self) -> Result<(), String> {
        for (k, p) in &self.success {
            if !(0.0..=1.0).contains(p) || !p.is_finite() {
                return Err(format!("success for {k:?} out of [0,1]"));
            }
        }
        if !(0.0..=1.0).contains(&self.default_success) {
            return Err("default success out of [0,1]".to_string());
        }
        Ok(())
    }
}

/// Atomic vs meta skill.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkillKind {
    Atomic,
    Meta,
}

/// The skill tuple: verb, nouns, policy, pre/post-conditions, evaluator.
/// Parameter slots are declared in `params`; `bindings` holds whatever has
/// been resolved so far (nouns at concretization, cells at expansion).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skill {
    pub name: String,
    pub verb: Verb,
    pub kind: SkillKind,
    pub params: Vec<ParamSpec>,
    pub nouns: NounSet,
    pub policy: PolicySpec,
    pub pre: Condition,
    pub post: Condition,
    pub evaluator: Evaluator,
    #[serde(default)]
    pub bindings: Bindings,
}

impl Skill {
    /// Bound value of a parameter, if any.
    pub fn binding(&self, name: &str) -> Option<&BindingValue> {
        self.bindings.get(name)
    }

    pub fn bound_robot(&self, name: &str) -> Option<RobotId> {
        match self.bindings.get(name) {
            Some(BindingValue::Robot(r)) => Some(r.clone()),
            _ => None,
        }
    }

    pub fn bound_brick(&self, name: &str) -> Option<BrickId> {
        match self.bindings.get(name) {
            Some(BindingValue::Brick(b)) => Some(b.clone()),
            _ => None,
        }
    }

    /// Robot parameter names in declaration order.
    pub fn robot_params(&self) -> Vec<&str> {
        self.params
            .iter()
            .filter(|p| matches!(p.kind, ParamKind::Robot))
            .map(|p| p.name.as_str())
            .collect()
    }

    /// Brick parameter names in declaration order.
    pub fn brick_params(&self) -> Vec<&str> {
        self.params
            .iter()
            .filter(|p| matches!(p.kind, ParamKind::Brick { .. }))
            .map(|p| p.name.as_str())
            .collect()
    }

    /// The robot that performs this skill's motion (first robot slot).
    pub fn actor(&self) -> Option<RobotId> {
        self.robot_params()
            .first()
            .and_then(|name| self.bound_robot(name))
    }

    /// The brick this skill manipulates (first brick slot).
    pub fn object(&self) -> Option<BrickId> {
        self.brick_params()
            .first()
            .and_then(|name| self.bound_brick(name))
    }

    /// True once every declared parameter is bound and conditions are
    /// ground.
    pub fn is_fully_bound(&self) -> bool {
        self.params.iter().all(|p| self.bindings.contains_key(&p.name))
            && self.pre.is_ground()
            && self.post.is_ground()
    }

    /// Apply bindings to conditions and record them.
    pub fn substitute(&self, bindings: &Bindings) -> Skill {
        let mut out = self.clone();
        out.pre = self.pre.substitute(bindings);
        out.post = self.post.substitute(bindings);
        for (k, v) in bindings {
            if self.params.iter().any(|p| &p.name == k) {
                out.bindings.insert(k.clone(), v.clone());
            }
        }
        out
    }

    /// Validate the tuple invariants (complete policy, evaluator in range).
    pub fn validate(&self) -> Result<(), String> {
        self.policy.validate()?;
        self.evaluator.validate()?;
        Ok(())
    }
}

/// One step of a meta-skill body: an atomic template plus the rule mapping
/// its parameters to meta-level parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyStep {
    pub atom: Skill,
    /// atom parameter name → meta parameter name
    pub bind: BTreeMap<String, String>,
}

/// A meta skill: a linear sequence of atomic skills exposed as one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaSkill {
    pub skill: Skill,
    pub body: Vec<BodyStep>,
}

impl MetaSkill {
    pub fn name(&self) -> &str {
        &self.skill.name
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.skill.kind != SkillKind::Meta {
            return Err(format!("meta skill {} not marked meta", self.skill.name));
        }
        if self.body.is_empty() {
            return Err(format!("meta skill {} has an empty body", self.skill.name));
        }
        self.skill.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verb_round_trips_through_strings() {
        for v in Verb::ATOMIC {
            let s = v.name().to_string();
            assert_eq!(s.parse::<Verb>().unwrap(), v);
        }
        assert_eq!(
            "polish".parse::<Verb>().unwrap(),
            Verb::Custom("polish".to_string())
        );
    }

    #[test]
    fn context_widening_drops_fields_in_order() {
        let k = ContextKey::verb(Verb::Pick)
            .with_robot(RobotId::from("r1"))
            .with_object(ObjectKey::Instance(BrickId::from("b1")))
            .with_bucket(Bucket::Shared);
        let chain = k.widening_chain();
        assert_eq!(chain.len(), 4);
        assert!(chain[1].bucket.is_none());
        assert!(chain[2].object.is_none());
        assert!(chain[3].robot.is_none());
    }

    #[test]
    fn evaluator_lookup_always_returns() {
        let mut e = Evaluator::with_defaults(5000, 0.9);
        e.cost_ms.insert(ContextKey::verb(Verb::Pick), 3000);
        let specific = ContextKey::verb(Verb::Pick)
            .with_robot(RobotId::from("r9"))
            .with_object(ObjectKey::Instance(BrickId::from("b7")));
        assert_eq!(e.cost(&specific), 3000); // widened to verb level
        assert_eq!(e.cost(&ContextKey::verb(Verb::Detect)), 5000); // default
        assert_eq!(e.success(&specific), 0.9);
    }
}
