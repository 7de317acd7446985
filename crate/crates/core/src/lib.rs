//! Skill-graph planning and execution for multi-robot brick assembly.
//!
//! The crate covers the full loop: a typed skill model with pre/post
//! conditions over a discretized brick world, best-first grounding of
//! assembly sequences, temporal-plan-graph scheduling for two-arm
//! parallelism, a seeded discrete-event executor with failure injection,
//! structured per-skill logging with replay, and closed-loop adaptation
//! (risk estimation, check insertion, task reallocation, bias correction,
//! and bandit policy selection).

pub mod adapt;
pub mod datalog;
pub mod exec;
pub mod ids;
pub mod planner;
pub mod tpg;
pub mod skill;
pub mod taskspec;
pub mod world;

pub use adapt::{BanditState, BiasEstimator, FailureHistory, RiskModel};
pub use exec::{BatchSummary, ExecMode, ExecutionConfig, ExecutionTrace, FailureModel, Outcome};
pub use datalog::{LogStore, SkillLogRecord};
pub use ids::{BrickId, DurationMs, RobotId, RunId, TimeMs};
pub use planner::{GroundedSkill, Plan, PlanError, PlanOptions};
pub use skill::{Condition, EvaluatorSet, MetaSkill, Skill, SkillGraph, SkillLibrary, Verb};
pub use taskspec::{Inventory, TaskSpec};
pub use tpg::{makespan, Tpg};
pub use world::{WorldConfig, WorldState};
