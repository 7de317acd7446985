//! Closed-loop improvement from execution logs: failure-probability
//! estimation, evaluator updates, risk-gated check insertion, penalty-based
//! task reallocation, parametric bias correction, and bandit policy
//! selection.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datalog::LogStore;
use crate::exec::um_to_mm;
use crate::ids::{BrickId, DurationMs, RobotId, TimeMs};
use crate::planner::{
    expand_grounded, plan, Plan, PlanError, PlanOptions,
};
use crate::skill::library::{atom_context, EvaluatorSet, SkillLibrary};
use crate::skill::types::{ctx_map, ContextKey, ObjectKey, Verb};
use crate::taskspec::TaskSpec;
use crate::world::types::{BrickLocation, WorldState};

/// Errors from adaptation operations.
#[derive(Debug, thiserror::Error)]
pub enum AdaptError {
    #[error("no redundant instance available for failing brick type {0}")]
    NoFeasiblePlan(String),
    #[error("no arms registered for context {0:?}")]
    NoArms(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Model(#[from] crate::skill::ModelError),
    #[error("adapt file error: {0}")]
    File(String),
}

// ---------------------------------------------------------------------------
// risk estimation

/// Attempt/failure counts for one context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub attempts: u64,
    pub failures: u64,
}

impl RiskEstimate {
    /// Laplace-smoothed failure probability, strictly inside (0, 1).
    pub fn probability(&self) -> f64 {
        (self.failures as f64 + 1.0) / (self.attempts as f64 + 2.0)
    }
}

/// Per-context failure estimates with hierarchical backoff: a context never
/// seen falls back to wider contexts and finally to the 0.5 prior.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RiskModel {
    #[serde(with = "ctx_map")]
    pub estimates: BTreeMap<ContextKey, RiskEstimate>,
}

impl RiskModel {
    /// Smoothed failure probability for a context, backing off from brick
    /// level to robot level to verb level, then the 0.5 prior.
    pub fn probability(&self, key: &ContextKey) -> f64 {
        for k in key.widening_chain() {
            if let Some(e) = self.estimates.get(&k) {
                if e.attempts > 0 {
                    return e.probability();
                }
            }
        }
        0.5
    }

    pub fn observe(&mut self, key: ContextKey, failed: bool) {
        let e = self.estimates.entry(key).or_default();
        e.attempts += 1;
        if failed {
            e.failures += 1;
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("risk model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<RiskModel, AdaptError> {
        serde_json::from_str(s).map_err(|e| AdaptError::File(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<RiskModel, AdaptError> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| AdaptError::File(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }
}

/// Estimate per-context failure probabilities from a log store. Counts
/// robot attempts only: operator recoveries and detect-checks are not
/// robot executions. Counts accrue at verb, (verb, robot), and
/// (verb, robot, brick) granularity.
pub fn estimate_risk(store: &LogStore) -> RiskModel {
    let mut model = RiskModel::default();
    for r in store.records() {
        if !r.is_robot_attempt() {
            continue;
        }
        let failed = r.outcome == crate::exec::AttemptOutcome::Failed;
        model.observe(ContextKey::verb(r.verb.clone()), failed);
        if let Some(robot) = &r.robot {
            model.observe(
                ContextKey::verb(r.verb.clone()).with_robot(robot.clone()),
                failed,
            );
            if let Some(brick) = &r.object {
                model.observe(
                    ContextKey::verb(r.verb.clone())
                        .with_robot(robot.clone())
                        .with_object(ObjectKey::Instance(brick.clone())),
                    failed,
                );
            }
        }
    }
    model
}

/// Push risk estimates into the evaluators: success entries become
/// `1 - p`, cost entries inflate to the expected cost under retries,
/// `cost / (1 - p)`, capped at `cap_multiplier` times the base cost.
pub fn update_evaluators(
    risk: &RiskModel,
    evals: &mut EvaluatorSet,
    lib: &SkillLibrary,
    cap_multiplier: f64,
) {
    for (key, est) in &risk.estimates {
        let p = est.probability();
        for atom in lib.atomics.iter().filter(|a| a.verb == key.verb) {
            let base = atom.policy.nominal_duration_ms();
            let inflated = ((base as f64 / (1.0 - p)).min(base as f64 * cap_multiplier)).round()
                as DurationMs;
            evals.set_success(&atom.name, key.clone(), 1.0 - p);
            evals.add_cost(&atom.name, key.clone(), inflated.max(base));
        }
    }
}

/// Append a detect-outcome check after every manipulation atom whose
/// context risk exceeds the threshold. Below-threshold steps are left
/// unmonitored.
pub fn insert_checks(
    plan_in: &Plan,
    risk: &RiskModel,
    threshold: f64,
    lib: &SkillLibrary,
    z0: &WorldState,
) -> Result<Plan, AdaptError> {
    let mut out = plan_in.clone();
    let mut sim = z0.clone();
    for g in out.grounded.iter_mut() {
        let mut bare = g.clone();
        bare.checks_after.clear();
        let atoms = expand_grounded(lib, &bare, &sim)?;
        let mut checks = Vec::new();
        for (i, atom) in atoms.iter().enumerate() {
            if atom.verb.is_manipulation() {
                let key = atom_context(&sim, atom);
                if risk.probability(&key) > threshold {
                    checks.push(i);
                }
            }
            if let Ok(next) = crate::world::effects::apply_effect(&sim, atom) {
                sim = next;
            }
        }
        g.checks_after = checks;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// reallocation

/// One observed failure, traceable to a log record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureEvent {
    pub record_id: usize,
    pub robot: RobotId,
    pub step_index: usize,
    pub brick: BrickId,
    pub verb: Verb,
    pub t_ms: TimeMs,
}

/// Failure tuples extracted from logs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FailureHistory {
    pub events: Vec<FailureEvent>,
}

impl FailureHistory {
    /// All failed robot attempts with an identified robot and brick.
    pub fn from_store(store: &LogStore) -> FailureHistory {
        let events = store
            .records()
            .iter()
            .filter(|r| r.is_robot_attempt() && r.outcome == crate::exec::AttemptOutcome::Failed)
            .filter_map(|r| {
                Some(FailureEvent {
                    record_id: r.record_id,
                    robot: r.robot.clone()?,
                    step_index: r.step_index,
                    brick: r.object.clone()?,
                    verb: r.verb.clone(),
                    t_ms: r.end_ms,
                })
            })
            .collect();
        FailureHistory { events }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("history serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<FailureHistory, AdaptError> {
        serde_json::from_str(s).map_err(|e| AdaptError::File(e.to_string()))
    }
}

/// Inject a cost penalty for every history-matching (verb, robot, brick)
/// context and re-plan. With a penalty above the candidate cost spread the
/// planner bypasses the failing context whenever the inventory offers an
/// alternative; without a redundant instance of the failing type this is
/// an error.
pub fn reallocate(
    task: &TaskSpec,
    history: &FailureHistory,
    penalty_ms: DurationMs,
    lib: &SkillLibrary,
    z0: &WorldState,
    evals: &EvaluatorSet,
    opts: &PlanOptions,
) -> Result<Plan, AdaptError> {
    // redundancy precondition: every failing brick type has an unfailed
    // alternative in store
    for e in &history.events {
        let Some(failing) = z0.bricks.get(&e.brick) else {
            continue;
        };
        let alternative = z0.bricks.values().any(|b| {
            b.brick_type == failing.brick_type
                && b.id != failing.id
                && matches!(b.location, BrickLocation::InStore(_))
                && !history.events.iter().any(|h| h.brick == b.id)
        });
        if !alternative {
            return Err(AdaptError::NoFeasiblePlan(failing.brick_type.to_string()));
        }
    }

    let mut penalized = evals.clone();
    for e in &history.events {
        let key = ContextKey::verb(e.verb.clone())
            .with_robot(e.robot.clone())
            .with_object(ObjectKey::Instance(e.brick.clone()));
        for atom in lib.atomics.iter().filter(|a| a.verb == e.verb) {
            let base = atom.policy.nominal_duration_ms();
            penalized.add_cost(&atom.name, key.clone(), base + penalty_ms);
        }
    }
    Ok(plan(task, lib, z0, &penalized, opts)?)
}

// ---------------------------------------------------------------------------
// parametric bias correction

/// Running-mean estimator of systematic pose bias, in millimeters.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BiasEstimator {
    pub count: u64,
    pub mean_mm: (f64, f64),
    /// Set once a correction has been applied to a target.
    #[serde(default)]
    pub correction_applied: bool,
}

impl BiasEstimator {
    /// Fold in one observed offset.
    pub fn observe_mm(&mut self, offset_mm: (f64, f64)) {
        self.count += 1;
        let n = self.count as f64;
        self.mean_mm.0 += (offset_mm.0 - self.mean_mm.0) / n;
        self.mean_mm.1 += (offset_mm.1 - self.mean_mm.1) / n;
    }

    pub fn observe_um(&mut self, offset_um: (i64, i64)) {
        self.observe_mm((um_to_mm(offset_um.0), um_to_mm(offset_um.1)));
    }

    /// Subtract the current bias estimate from a target pose. Identity
    /// before any observation.
    pub fn apply(&mut self, target_mm: (f64, f64)) -> (f64, f64) {
        if self.count == 0 {
            return target_mm;
        }
        self.correction_applied = true;
        (target_mm.0 - self.mean_mm.0, target_mm.1 - self.mean_mm.1)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("bias estimator serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<BiasEstimator, AdaptError> {
        serde_json::from_str(s).map_err(|e| AdaptError::File(e.to_string()))
    }
}

/// Fold every logged pick offset observation into a bias estimate.
pub fn estimate_bias(store: &LogStore) -> BiasEstimator {
    let mut est = BiasEstimator::default();
    for r in store.records() {
        if let Some(offset) = r.observed_offset_um {
            est.observe_um(offset);
        }
    }
    est
}

// ---------------------------------------------------------------------------
// bandit policy selection

/// Statistics of one arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmStats {
    pub name: String,
    pub pulls: u64,
    pub mean_reward: f64,
}

/// Upper-confidence-bound state per context. Contexts are free-form labels
/// such as `transit:shared`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditState {
    /// Exploration constant.
    pub exploration: f64,
    pub contexts: BTreeMap<String, Vec<ArmStats>>,
}

impl Default for BanditState {
    fn default() -> Self {
        BanditState {
            exploration: 0.5,
            contexts: BTreeMap::new(),
        }
    }
}

impl BanditState {
    pub fn register_arm(&mut self, context: &str, arm: &str) {
        let arms = self.contexts.entry(context.to_string()).or_default();
        if !arms.iter().any(|a| a.name == arm) {
            arms.push(ArmStats {
                name: arm.to_string(),
                pulls: 0,
                mean_reward: 0.0,
            });
        }
    }

    /// UCB1 selection: any unpulled arm first (registration order), then
    /// the arm maximizing `mean + c * sqrt(ln N / n)`. Ties break toward
    /// the earliest-registered arm.
    pub fn select(&self, context: &str) -> Result<&str, AdaptError> {
        let arms = self
            .contexts
            .get(context)
            .filter(|a| !a.is_empty())
            .ok_or_else(|| AdaptError::NoArms(context.to_string()))?;
        if let Some(unpulled) = arms.iter().find(|a| a.pulls == 0) {
            return Ok(&unpulled.name);
        }
        let total: u64 = arms.iter().map(|a| a.pulls).sum();
        let ln_total = (total as f64).ln();
        let mut best = &arms[0];
        let mut best_score = f64::NEG_INFINITY;
        for a in arms {
            let score = a.mean_reward + self.exploration * (ln_total / a.pulls as f64).sqrt();
            if score > best_score {
                best_score = score;
                best = a;
            }
        }
        Ok(&best.name)
    }

    /// Incremental-mean reward update.
    pub fn update(&mut self, context: &str, arm: &str, reward: f64) -> Result<(), AdaptError> {
        let arms = self
            .contexts
            .get_mut(context)
            .ok_or_else(|| AdaptError::NoArms(context.to_string()))?;
        let a = arms
            .iter_mut()
            .find(|a| a.name == arm)
            .ok_or_else(|| AdaptError::NoArms(format!("{context}/{arm}")))?;
        a.pulls += 1;
        a.mean_reward += (reward - a.mean_reward) / a.pulls as f64;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("bandit state serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<BanditState, AdaptError> {
        serde_json::from_str(s).map_err(|e| AdaptError::File(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<BanditState, AdaptError> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| AdaptError::File(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }
}

/// Execution reward: success indicator discounted by normalized runtime.
/// `weight` mixes the runtime term (0 ignores runtime entirely).
pub fn execution_reward(
    success: bool,
    runtime_ms: DurationMs,
    runtime_cap_ms: DurationMs,
    weight: f64,
) -> f64 {
    if !success {
        return 0.0;
    }
    let normalized = if runtime_cap_ms == 0 {
        0.0
    } else {
        (runtime_ms as f64 / runtime_cap_ms as f64).min(1.0)
    };
    (1.0 - weight.clamp(0.0, 1.0) * normalized).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unseen_context_uses_the_prior() {
        let model = RiskModel::default();
        let key = ContextKey::verb(Verb::Pick);
        assert_eq!(model.probability(&key), 0.5);
    }

    #[test]
    fn laplace_smoothing_matches_the_formula() {
        let mut model = RiskModel::default();
        let key = ContextKey::verb(Verb::Pick);
        for i in 0..8 {
            model.observe(key.clone(), i < 2);
        }
        // 8 attempts, 2 failures -> (2+1)/(8+2) = 0.3
        assert!((model.probability(&key) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn backoff_walks_from_brick_to_verb_level() {
        let mut model = RiskModel::default();
        model.observe(ContextKey::verb(Verb::Pick), true);
        let specific = ContextKey::verb(Verb::Pick)
            .with_robot("r1".into())
            .with_object(ObjectKey::Instance("b9".into()));
        // only the verb level has data
        assert!((model.probability(&specific) - (2.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn evaluator_update_inflates_costs_geometrically() {
        let lib = crate::skill::library::builtin();
        let mut evals = EvaluatorSet::from_library(&lib);
        let mut risk = RiskModel::default();
        let key = ContextKey::verb(Verb::Pick);
        // 198 failures in 398 attempts -> p = 199/400 = 0.4975
        for i in 0..398 {
            risk.observe(key.clone(), i < 198);
        }
        update_evaluators(&risk, &mut evals, &lib, 10.0);
        let base = lib.atomic("pick").unwrap().policy.nominal_duration_ms();
        let cost = evals.cost_override("pick", &key).unwrap();
        let expected = (base as f64 / (1.0 - 199.0 / 400.0)).round() as u64;
        assert_eq!(cost, expected);
        assert!((evals.success("pick", &key) - (1.0 - 199.0 / 400.0)).abs() < 1e-9);

        // p = 0 context leaves cost essentially unchanged
        let mut risk0 = RiskModel::default();
        let key0 = ContextKey::verb(Verb::Transit);
        for _ in 0..100_000 {
            risk0.observe(key0.clone(), false);
        }
        let mut evals0 = EvaluatorSet::from_library(&lib);
        update_evaluators(&risk0, &mut evals0, &lib, 10.0);
        let t = lib.atomic("transit").unwrap().policy.nominal_duration_ms();
        assert_eq!(evals0.cost_override("transit", &key0).unwrap(), t);
    }

    #[test]
    fn bias_estimator_tracks_constant_offsets() {
        let mut est = BiasEstimator::default();
        assert_eq!(est.apply((10.0, 5.0)), (10.0, 5.0)); // identity before data
        for _ in 0..50 {
            est.observe_mm((2.0, 0.0));
        }
        assert!((est.mean_mm.0 - 2.0).abs() < 1e-12);
        assert_eq!(est.mean_mm.1, 0.0);
        let corrected = est.apply((10.0, 5.0));
        assert!((corrected.0 - 8.0).abs() < 1e-12);
        assert!((corrected.1 - 5.0).abs() < 1e-12);
    }

    #[test]
    fn bias_estimate_converges_on_noisy_offsets() {
        // statistical oracle: mean of n draws lands within 3 sigma / sqrt(n)
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let (bx, by, sigma, n) = (1.5f64, -0.5f64, 0.5f64, 200usize);
        let normal = rand_distr::Normal::new(0.0, sigma).unwrap();
        let mut est = BiasEstimator::default();
        for _ in 0..n {
            let dx = bx + rand_distr::Distribution::sample(&normal, &mut rng);
            let dy = by + rand_distr::Distribution::sample(&normal, &mut rng);
            est.observe_mm((dx, dy));
        }
        let tol = 3.0 * sigma / (n as f64).sqrt();
        assert!((est.mean_mm.0 - bx).abs() <= tol);
        assert!((est.mean_mm.1 - by).abs() <= tol);
        // correction then re-injecting the bias reproduces the target
        let target = (20.0, 20.0);
        let corrected = est.apply(target);
        let landed = (corrected.0 + bx, corrected.1 + by);
        assert!((landed.0 - target.0).abs() <= tol);
        assert!((landed.1 - target.1).abs() <= tol);
    }

    #[test]
    fn single_arm_is_always_selected_and_missing_context_errors() {
        let mut b = BanditState::default();
        assert!(matches!(b.select("ctx"), Err(AdaptError::NoArms(_))));
        b.register_arm("ctx", "only");
        for _ in 0..5 {
            assert_eq!(b.select("ctx").unwrap(), "only");
            b.update("ctx", "only", 0.5).unwrap();
        }
    }

    #[test]
    fn unpulled_arms_are_tried_before_any_repeat() {
        let mut b = BanditState::default();
        b.register_arm("ctx", "a");
        b.register_arm("ctx", "b");
        b.register_arm("ctx", "c");
        let first = b.select("ctx").unwrap().to_string();
        b.update("ctx", &first, 1.0).unwrap();
        let second = b.select("ctx").unwrap().to_string();
        assert_ne!(first, second);
        b.update("ctx", &second, 1.0).unwrap();
        let third = b.select("ctx").unwrap().to_string();
        assert_ne!(third, first);
        assert_ne!(third, second);
    }

    #[test]
    fn ucb_prefers_the_better_arm() {
        // simulation oracle: deterministic 0.9 vs 0.1 rewards
        let mut b = BanditState::default();
        b.register_arm("ctx", "good");
        b.register_arm("ctx", "bad");
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut good_pulls = 0;
        for _ in 0..100 {
            let arm = b.select("ctx").unwrap().to_string();
            let base = if arm == "good" { 0.9 } else { 0.1 };
            let _ = rng.gen::<f64>();
            if arm == "good" {
                good_pulls += 1;
            }
            b.update("ctx", &arm, base).unwrap();
        }
        assert!(good_pulls >= 90, "good arm pulled {good_pulls}/100");
    }

    #[test]
    fn reward_mixes_success_and_runtime() {
        assert_eq!(execution_reward(false, 100, 1000, 1.0), 0.0);
        assert_eq!(execution_reward(true, 0, 1000, 1.0), 1.0);
        assert!((execution_reward(true, 500, 1000, 1.0) - 0.5).abs() < 1e-12);
        assert_eq!(execution_reward(true, 500, 1000, 0.0), 1.0);
        let r = execution_reward(true, 5000, 1000, 1.0);
        assert!((0.0..=1.0).contains(&r));
    }

    #[test]
    fn risk_and_bandit_states_round_trip_as_json() {
        let mut risk = RiskModel::default();
        risk.observe(
            ContextKey::verb(Verb::Pick).with_robot("r1".into()),
            true,
        );
        let back = RiskModel::from_json(&risk.to_json()).unwrap();
        assert_eq!(back, risk);

        let mut bandit = BanditState::default();
        bandit.register_arm("transit:shared", "rrt_connect");
        bandit.register_arm("transit:shared", "bit_star");
        bandit.update("transit:shared", "rrt_connect", 0.8).unwrap();
        let back = BanditState::from_json(&bandit.to_json()).unwrap();
        assert_eq!(back, bandit);
    }
}
