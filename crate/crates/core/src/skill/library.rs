//! Skill library files and the built-in two-arm assembly library.
//!
//! The library file is JSON: atomic skills with verb, parameter slots,
//! policy, prefix-notation conditions, and evaluator tables; meta skills
//! additionally carry an ordered body of atomic steps with parameter
//! binding rules.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ids::{ms_to_secs, secs_to_ms, DurationMs};
use crate::skill::condition::{prefix, BindingValue, Bindings};
use crate::skill::types::{
    BodyStep, Bucket, ContextKey, Evaluator, ImplVariant, MetaSkill, NounSet, ObjectKey,
    ObjectRef, ParamKind, ParamSpec, PolicySpec, Skill, SkillKind, Verb,
};
use crate::skill::ModelError;
use crate::world::types::{Cell, WorldState};

/// A parsed skill library.
#[derive(Debug, Clone)]
pub struct SkillLibrary {
    pub atomics: Vec<Skill>,
    pub metas: Vec<MetaSkill>,
}

impl SkillLibrary {
    pub fn atomic(&self, name: &str) -> Option<&Skill> {
        self.atomics.iter().find(|s| s.name == name)
    }

    pub fn meta(&self, name: &str) -> Option<&MetaSkill> {
        self.metas.iter().find(|m| m.name() == name)
    }

    pub fn meta_names(&self) -> Vec<&str> {
        self.metas.iter().map(|m| m.name()).collect()
    }

    /// Bind an atomic template's noun slots to the given entity ids, in
    /// declared parameter order.
    ///
    /// Convenience for building single atoms (runtime check skills, test
    /// fixtures). Panics on unknown skills or unresolvable nouns.
    pub fn ground_atomic(&self, name: &str, z: &WorldState, pairs: &[(&str, &str)]) -> Skill {
        let skill = self
            .atomic(name)
            .unwrap_or_else(|| panic!("unknown atomic skill {name}"));
        let by_name: BTreeMap<&str, &str> = pairs.iter().copied().collect();
        let mut nouns = NounSet::default();
        for p in &skill.params {
            match p.kind {
                ParamKind::Robot => {
                    if let Some(v) = by_name.get(p.name.as_str()) {
                        nouns.robots.push((*v).into());
                    }
                }
                ParamKind::Brick { .. } => {
                    if let Some(v) = by_name.get(p.name.as_str()) {
                        nouns.objects.push(ObjectRef::Instance((*v).into()));
                    }
                }
                _ => {}
            }
        }
        crate::skill::graph::concretize(skill, &nouns, z)
            .unwrap_or_else(|e| panic!("cannot ground {name}: {e}"))
    }

    /// A concrete transit for `robot` to `to`.
    pub fn ground_transit(&self, robot: &str, to: Cell, z: &WorldState) -> Skill {
        let t = self.ground_atomic("transit", z, &[("robot", robot)]);
        let mut b = Bindings::new();
        b.insert("to".to_string(), BindingValue::Cell(to));
        t.substitute(&b)
    }

    /// Admissible per-step cost floor: the cheapest meta body, counting
    /// non-transit atoms at their smallest variant duration (transit can be
    /// arbitrarily short).
    pub fn min_step_floor_ms(&self) -> DurationMs {
        self.metas
            .iter()
            .map(|m| {
                m.body
                    .iter()
                    .filter(|s| s.atom.verb != Verb::Transit)
                    .map(|s| {
                        (s.atom.policy.nominal_duration_ms() as f64
                            * s.atom.policy.min_variant_multiplier())
                        .floor() as DurationMs
                    })
                    .sum::<DurationMs>()
            })
            .min()
            .unwrap_or(0)
    }

    pub fn from_json(s: &str) -> Result<Self, ModelError> {
        let doc: LibraryDoc =
            serde_json::from_str(s).map_err(|e| ModelError::Schema(e.to_string()))?;
        doc.build()
    }

    pub fn from_file(path: &Path) -> Result<Self, ModelError> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| ModelError::Schema(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }

    pub fn to_json(&self) -> String {
        let doc = LibraryDoc::from_library(self);
        let mut s = serde_json::to_string_pretty(&doc).expect("library serializes");
        s.push('\n');
        s
    }
}

/// The built-in seven-verb manipulation library plus detect, and the three
/// assembly meta skills.
pub fn builtin() -> SkillLibrary {
    static SRC: &str = include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/library.json"));
    SkillLibrary::from_json(SRC).expect("built-in library parses")
}

// ---------------------------------------------------------------------------
// file schema

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LibraryDoc {
    atomic: Vec<SkillDoc>,
    #[serde(default)]
    meta: Vec<MetaDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SkillDoc {
    name: String,
    verb: Verb,
    params: Vec<ParamSpec>,
    policy: PolicyDoc,
    pre: serde_json::Value,
    post: serde_json::Value,
    evaluator: EvaluatorDoc,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PolicyDoc {
    effect: Verb,
    nominal_duration_s: f64,
    #[serde(default)]
    parameters: BTreeMap<String, serde_json::Value>,
    #[serde(default)]
    variants: Vec<ImplVariant>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MetaDoc {
    name: String,
    params: Vec<ParamSpec>,
    nominal_duration_s: f64,
    pre: serde_json::Value,
    post: serde_json::Value,
    body: Vec<BodyStepDoc>,
    #[serde(default)]
    evaluator: Option<EvaluatorDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BodyStepDoc {
    atom: String,
    bind: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EvaluatorDoc {
    default_cost_s: f64,
    default_success: f64,
    #[serde(default)]
    cost: Vec<CostEntryDoc>,
    #[serde(default)]
    success: Vec<SuccessEntryDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CostEntryDoc {
    #[serde(flatten)]
    key: ContextKey,
    cost_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SuccessEntryDoc {
    #[serde(flatten)]
    key: ContextKey,
    success: f64,
}

impl EvaluatorDoc {
    fn build(&self) -> Result<Evaluator, ModelError> {
        let mut e = Evaluator::with_defaults(secs_to_ms(self.default_cost_s), self.default_success);
        for c in &self.cost {
            e.cost_ms.insert(c.key.clone(), secs_to_ms(c.cost_s));
        }
        for s in &self.success {
            e.success.insert(s.key.clone(), s.success);
        }
        e.validate().map_err(ModelError::Schema)?;
        Ok(e)
    }

    fn from_evaluator(e: &Evaluator) -> EvaluatorDoc {
        EvaluatorDoc {
            default_cost_s: ms_to_secs(e.default_cost_ms),
            default_success: e.default_success,
            cost: e
                .cost_ms
                .iter()
                .map(|(k, v)| CostEntryDoc {
                    key: k.clone(),
                    cost_s: ms_to_secs(*v),
                })
                .collect(),
            success: e
                .success
                .iter()
                .map(|(k, v)| SuccessEntryDoc {
                    key: k.clone(),
                    success: *v,
                })
                .collect(),
        }
    }
}

impl PolicyDoc {
    fn build(&self) -> PolicySpec {
        let mut p = PolicySpec::new(self.effect.clone(), self.nominal_duration_s);
        p.parameters = self.parameters.clone();
        if !self.variants.is_empty() {
            p.variants = self.variants.clone();
        }
        p
    }
}

impl LibraryDoc {
    fn build(&self) -> Result<SkillLibrary, ModelError> {
        let mut atomics = Vec::new();
        let mut names = Vec::new();
        for doc in &self.atomic {
            if names.contains(&doc.name) {
                return Err(ModelError::Schema(format!("duplicate skill name {}", doc.name)));
            }
            names.push(doc.name.clone());
            let skill = Skill {
                name: doc.name.clone(),
                verb: doc.verb.clone(),
                kind: SkillKind::Atomic,
                params: doc.params.clone(),
                nouns: NounSet::default(),
                policy: doc.policy.build(),
                pre: prefix::parse(&doc.pre)?,
                post: prefix::parse(&doc.post)?,
                evaluator: doc.evaluator.build()?,
                bindings: Bindings::new(),
            };
            skill.validate().map_err(ModelError::Schema)?;
            atomics.push(skill);
        }
        let mut metas = Vec::new();
        for doc in &self.meta {
            if names.contains(&doc.name) {
                return Err(ModelError::Schema(format!("duplicate skill name {}", doc.name)));
            }
            names.push(doc.name.clone());
            let mut body = Vec::new();
            for step in &doc.body {
                let atom = atomics
                    .iter()
                    .find(|a| a.name == step.atom)
                    .ok_or_else(|| ModelError::UnknownSkill(step.atom.clone()))?
                    .clone();
                body.push(BodyStep {
                    atom,
                    bind: step.bind.clone(),
                });
            }
            let evaluator = match &doc.evaluator {
                Some(e) => e.build()?,
                None => Evaluator::with_defaults(secs_to_ms(doc.nominal_duration_s), 0.98),
            };
            let meta = MetaSkill {
                skill: Skill {
                    name: doc.name.clone(),
                    verb: Verb::Custom(doc.name.clone()),
                    kind: SkillKind::Meta,
                    params: doc.params.clone(),
                    nouns: NounSet::default(),
                    policy: PolicySpec::new(Verb::Custom("meta".to_string()), doc.nominal_duration_s),
                    pre: prefix::parse(&doc.pre)?,
                    post: prefix::parse(&doc.post)?,
                    evaluator,
                    bindings: Bindings::new(),
                },
                body,
            };
            meta.validate().map_err(ModelError::Schema)?;
            metas.push(meta);
        }
        Ok(SkillLibrary { atomics, metas })
    }

    fn from_library(lib: &SkillLibrary) -> LibraryDoc {
        LibraryDoc {
            atomic: lib
                .atomics
                .iter()
                .map(|s| SkillDoc {
                    name: s.name.clone(),
                    verb: s.verb.clone(),
                    params: s.params.clone(),
                    policy: PolicyDoc {
                        effect: s.policy.effect.clone(),
                        nominal_duration_s: s.policy.nominal_duration_s,
                        parameters: s.policy.parameters.clone(),
                        variants: s.policy.variants.clone(),
                    },
                    pre: prefix::to_value(&s.pre),
                    post: prefix::to_value(&s.post),
                    evaluator: EvaluatorDoc::from_evaluator(&s.evaluator),
                })
                .collect(),
            meta: lib
                .metas
                .iter()
                .map(|m| MetaDoc {
                    name: m.skill.name.clone(),
                    params: m.skill.params.clone(),
                    nominal_duration_s: m.skill.policy.nominal_duration_s,
                    pre: prefix::to_value(&m.skill.pre),
                    post: prefix::to_value(&m.skill.post),
                    body: m
                        .body
                        .iter()
                        .map(|b| BodyStepDoc {
                            atom: b.atom.name.clone(),
                            bind: b.bind.clone(),
                        })
                        .collect(),
                    evaluator: Some(EvaluatorDoc::from_evaluator(&m.skill.evaluator)),
                })
                .collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// evaluator set

/// The per-skill evaluators the planner consults, improved in place by the
/// adaptation loop and persisted alongside the library.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatorSet {
    pub by_skill: BTreeMap<String, Evaluator>,
}

impl EvaluatorSet {
    pub fn from_library(lib: &SkillLibrary) -> Self {
        let mut by_skill = BTreeMap::new();
        for s in &lib.atomics {
            by_skill.insert(s.name.clone(), s.evaluator.clone());
        }
        for m in &lib.metas {
            by_skill.insert(m.skill.name.clone(), m.skill.evaluator.clone());
        }
        Self { by_skill }
    }

    /// Explicit cost entry for a skill context, widening the key; `None`
    /// when nothing was recorded (callers fall back to simulated duration).
    pub fn cost_override(&self, skill_name: &str, key: &ContextKey) -> Option<DurationMs> {
        let e = self.by_skill.get(skill_name)?;
        for k in key.widening_chain() {
            if let Some(c) = e.cost_ms.get(&k) {
                return Some(*c);
            }
        }
        None
    }

    pub fn success(&self, skill_name: &str, key: &ContextKey) -> f64 {
        self.by_skill
            .get(skill_name)
            .map(|e| e.success(key))
            .unwrap_or(1.0)
    }

    pub fn add_cost(&mut self, skill_name: &str, key: ContextKey, cost_ms: DurationMs) {
        self.by_skill
            .entry(skill_name.to_string())
            .or_insert_with(|| Evaluator::with_defaults(cost_ms, 1.0))
            .cost_ms
            .insert(key, cost_ms);
    }

    pub fn set_success(&mut self, skill_name: &str, key: ContextKey, p: f64) {
        self.by_skill
            .entry(skill_name.to_string())
            .or_insert_with(|| Evaluator::with_defaults(0, 1.0))
            .success
            .insert(key, p);
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Entry<'a> {
            skill: &'a str,
            #[serde(flatten)]
            evaluator: EvaluatorDoc,
        }
        let entries: Vec<Entry> = self
            .by_skill
            .iter()
            .map(|(name, e)| Entry {
                skill: name,
                evaluator: EvaluatorDoc::from_evaluator(e),
            })
            .collect();
        let mut s = serde_json::to_string_pretty(&entries).expect("evaluator set serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self, ModelError> {
        #[derive(Deserialize)]
        struct Entry {
            skill: String,
            #[serde(flatten)]
            evaluator: EvaluatorDoc,
        }
        let entries: Vec<Entry> =
            serde_json::from_str(s).map_err(|e| ModelError::Schema(e.to_string()))?;
        let mut by_skill = BTreeMap::new();
        for e in entries {
            by_skill.insert(e.skill, e.evaluator.build()?);
        }
        Ok(Self { by_skill })
    }
}

/// Bucket of a cell for evaluator/risk contexts, by reachability.
pub fn context_bucket(z: &WorldState, cell: Cell) -> Bucket {
    crate::world::bucket_of(z, cell)
}

/// Risk/evaluator context for one ground atom at a state.
pub fn atom_context(z: &WorldState, atom: &Skill) -> ContextKey {
    let mut key = ContextKey::verb(atom.verb.clone());
    if let Some(r) = atom.actor() {
        key = key.with_robot(r);
    }
    if let Some(b) = atom.object() {
        key = key.with_object(ObjectKey::Instance(b));
    }
    if let Some(cell) = atom.object().and_then(|b| z.brick_cell(&b)) {
        key = key.with_bucket(context_bucket(z, cell));
    }
    key
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::config::WorldConfig;

    #[test]
    fn builtin_library_parses_and_round_trips() {
        let lib = builtin();
        assert_eq!(lib.atomics.len(), 8);
        assert_eq!(
            lib.meta_names(),
            vec!["PickPlace", "PickPlacewSupport", "PickHandoverPlace"]
        );
        let json = lib.to_json();
        let reparsed = SkillLibrary::from_json(&json).unwrap();
        assert_eq!(reparsed.atomics, lib.atomics);
        assert_eq!(reparsed.metas.len(), lib.metas.len());
    }

    #[test]
    fn step_floor_counts_non_transit_atoms() {
        let lib = builtin();
        let floor = lib.min_step_floor_ms();
        assert!(floor > 0);
        // PickPlace without its transit: detect + pick + place_down
        let expected: DurationMs = ["detect", "pick", "place_down"]
            .iter()
            .map(|n| lib.atomic(n).unwrap().policy.nominal_duration_ms())
            .sum();
        assert_eq!(floor, expected);
    }

    #[test]
    fn evaluator_set_round_trips() {
        let lib = builtin();
        let mut evals = EvaluatorSet::from_library(&lib);
        evals.add_cost(
            "pick",
            ContextKey::verb(Verb::Pick).with_robot("r1".into()),
            9000,
        );
        let json = evals.to_json();
        let back = EvaluatorSet::from_json(&json).unwrap();
        assert_eq!(back, evals);
    }

    #[test]
    fn atom_context_carries_entities() {
        let z = WorldConfig::two_arm_demo(2).build().unwrap();
        let lib = builtin();
        let pick = lib.ground_atomic("pick", &z, &[("robot", "r1"), ("brick", "b1")]);
        let key = atom_context(&z, &pick);
        assert_eq!(key.verb, Verb::Pick);
        assert_eq!(key.robot, Some("r1".into()));
        assert!(key.object.is_some());
        assert!(key.bucket.is_some());
    }
}
