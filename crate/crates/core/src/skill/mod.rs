//! Skill definitions, conditions, composition, and the skill graph.

pub mod condition;
pub mod graph;
pub mod library;
pub mod types;

pub use condition::{Atom, BindingValue, Bindings, Condition, LocExpr, PlaceExpr, Term};
pub use graph::{build_graph, concretize, expand_meta, feasible_edge, SkillGraph};
pub use library::{EvaluatorSet, SkillLibrary};
pub use types::{
    BodyStep, Bucket, ContextKey, Evaluator, ImplVariant, MetaSkill, NounSet, ObjectKey,
    ObjectRef, ParamKind, ParamSpec, PolicySpec, Skill, SkillKind, Verb,
};

/// Errors from skill-model operations.
#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("unresolved noun for parameter {param}: {reason}")]
    UnresolvedNoun { param: String, reason: String },
    #[error("missing binding for parameter {0}")]
    MissingBinding(String),
    #[error("unknown skill {0}")]
    UnknownSkill(String),
    #[error("invalid skill definition: {0}")]
    Invalid(String),
    #[error(transparent)]
    Condition(#[from] condition::prefix::ParseError),
    #[error("library schema error: {0}")]
    Schema(String),
}
