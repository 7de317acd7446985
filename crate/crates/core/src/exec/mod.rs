//! Deterministic discrete-event execution of grounded plans, sequential or
//! asynchronous, with seeded failure injection, runtime condition checks,
//! and operator recovery.

use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::ids::{BrickId, DurationMs, RobotId, RunId, TimeMs};
use crate::planner::{expand_grounded, Plan, PlanError};

use crate::skill::library::SkillLibrary;
use crate::skill::types::{Bucket, Skill, Verb};
use crate::skill::ModelError;
use crate::tpg::{build_tpg, dispatch_order, TpgError};
use crate::world::effects::{effect_image, effective_duration_ms};
use crate::world::types::{BrickLocation, Cell, WorldState};
use crate::world::WorldError;

/// Executor errors. Injected failures are trace events, not errors; these
/// are genuine engine faults.
#[derive(Debug, thiserror::Error)]
pub enum ExecError {
    #[error("invalid execution input: {0}")]
    InvalidInput(String),
    #[error("execution engine invariant violated: {0}")]
    EngineInvariant(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tpg(#[from] TpgError),
    #[error(transparent)]
    World(#[from] WorldError),
}

/// Sequential (one arm at a time) or asynchronous (dispatch over the
/// temporal plan graph).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExecMode {
    #[default]
    Sequential,
    Async,
}

/// A base failure probability for a verb, optionally narrowed to a robot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseFailure {
    pub verb: Verb,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robot: Option<RobotId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub brick: Option<BrickId>,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionFailure {
    pub bucket: Bucket,
    pub probability: f64,
}

/// Failure probability model: base per (verb, robot, brick), additive wear
/// term, additive position term, clamped to [0, 1].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FailureModel {
    #[serde(default)]
    pub base: Vec<BaseFailure>,
    #[serde(default)]
    pub per_brick_wear: f64,
    /// Cap on the additive wear contribution.
    #[serde(default)]
    pub wear_cap: f64,
    #[serde(default)]
    pub per_position: Vec<PositionFailure>,
}

impl FailureModel {
    /// No injected failures.
    pub fn none() -> FailureModel {
        FailureModel::default()
    }

    /// A flat per-verb probability.
    pub fn flat(verb: Verb, probability: f64) -> FailureModel {
        FailureModel {
            base: vec![BaseFailure {
                verb,
                robot: None,
                brick: None,
                probability,
            }],
            ..FailureModel::default()
        }
    }

    /// Effective failure probability for an attempt. The most specific
    /// matching base rule wins (brick > robot > verb).
    pub fn probability(
        &self,
        verb: &Verb,
        robot: Option<&RobotId>,
        brick: Option<&BrickId>,
        wear: u32,
        bucket: Option<&Bucket>,
    ) -> f64 {
        let mut best: Option<(u32, f64)> = None;
        for rule in &self.base {
            if rule.verb != *verb {
                continue;
            }
            if rule.robot.is_some() && rule.robot.as_ref() != robot {
                continue;
            }
            if rule.brick.is_some() && rule.brick.as_ref() != brick {
                continue;
            }
            let specificity =
                rule.robot.is_some() as u32 + 2 * rule.brick.is_some() as u32;
            if best.map(|(s, _)| specificity >= s).unwrap_or(true) {
                best = Some((specificity, rule.probability));
            }
        }
        let mut p = best.map(|(_, p)| p).unwrap_or(0.0);
        let wear_add = (self.per_brick_wear * wear as f64).min(self.wear_cap.max(0.0));
        p += wear_add;
        if let Some(b) = bucket {
            p += self
                .per_position
                .iter()
                .find(|r| r.bucket == *b)
                .map(|r| r.probability)
                .unwrap_or(0.0);
        }
        p.clamp(0.0, 1.0)
    }
}

/// Millimeter-scale pose noise applied to stored bricks before execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub bias_mm: (f64, f64),
    pub sigma_mm: f64,
}

/// Recovery behavior after a detected failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryPolicy {
    /// Abort at the failed step (restart-from-scratch baseline).
    None,
    /// An operator restores the failed skill's post-condition with the
    /// given probability and time cost.
    Operator {
        success_probability: f64,
        time_cost_ms: DurationMs,
    },
}

impl Default for RecoveryPolicy {
    fn default() -> Self {
        RecoveryPolicy::None
    }
}

/// Full execution configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionConfig {
    #[serde(default)]
    pub mode: ExecMode,
    pub seed: u64,
    #[serde(default)]
    pub failures: FailureModel,
    /// Evaluate every atom's post-condition inline after execution.
    #[serde(default)]
    pub checks_enabled: bool,
    #[serde(default)]
    pub recovery: RecoveryPolicy,
    /// Duration divisor; 2.0 runs twice as fast.
    #[serde(default = "default_speed")]
    pub speed_scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseModel>,
    /// Error rates of inserted detect-check atoms.
    #[serde(default)]
    pub check_false_negative: f64,
    #[serde(default)]
    pub check_false_positive: f64,
}

fn default_speed() -> f64 {
    1.0
}

impl ExecutionConfig {
    pub fn new(seed: u64) -> ExecutionConfig {
        ExecutionConfig {
            mode: ExecMode::Sequential,
            seed,
            failures: FailureModel::none(),
            checks_enabled: false,
            recovery: RecoveryPolicy::None,
            speed_scale: 1.0,
            noise: None,
            check_false_negative: 0.0,
            check_false_positive: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ExecError> {
        if self.speed_scale <= 0.0 {
            return Err(ExecError::InvalidInput("speed_scale must be positive".into()));
        }
        let probs_ok = |p: f64| (0.0..=1.0).contains(&p);
        if !probs_ok(self.check_false_negative) || !probs_ok(self.check_false_positive) {
            return Err(ExecError::InvalidInput("check error rates must be in [0,1]".into()));
        }
        if let RecoveryPolicy::Operator {
            success_probability, ..
        } = self.recovery
        {
            if !probs_ok(success_probability) {
                return Err(ExecError::InvalidInput(
                    "recovery success probability must be in [0,1]".into(),
                ));
            }
        }
        for rule in &self.failures.base {
            if !probs_ok(rule.probability) {
                return Err(ExecError::InvalidInput("failure probability out of [0,1]".into()));
            }
        }
        Ok(())
    }
}

/// Trace event kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Start,
    End,
    CheckPass,
    CheckFail,
    FailureInjected,
    Pause,
    Recover,
    Abort,
}

/// One event in the execution trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub t_ms: TimeMs,
    pub kind: EventKind,
    /// `s<step>.a<atom>` subject label.
    pub subject: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

/// Outcome of one atom attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttemptOutcome {
    Success,
    Failed,
    Recovered,
}

/// Structured record of one atomic skill attempt; the raw material for
/// skill logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomAttempt {
    pub attempt_id: usize,
    /// Attempts of the same atom share a retry group.
    pub retry_group: usize,
    pub attempt_no: u32,
    pub step_index: usize,
    pub atom_index: usize,
    pub skill: String,
    pub verb: Verb,
    pub robot: Option<RobotId>,
    pub brick: Option<BrickId>,
    pub policy_parameters: BTreeMap<String, serde_json::Value>,
    pub bindings: crate::skill::Bindings,
    pub start_ms: TimeMs,
    pub end_ms: TimeMs,
    pub pre_eval: Vec<(String, bool)>,
    pub post_eval: Vec<(String, bool)>,
    pub outcome: AttemptOutcome,
    /// Brick pose offset observed during a pick, when noise is active.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed_offset_um: Option<(i64, i64)>,
    /// Store cell a brick was dropped to on failure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drop_cell: Option<Cell>,
    /// Position of the atom this check verifies, for check atoms.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check_of: Option<usize>,
}

/// Run outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    AbortedAt { step_index: usize },
}

/// Success/survival summary in the construction-table sense.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSummary {
    pub success: bool,
    /// Bricks placed (contiguous prefix of steps at their targets) before
    /// the first unrecovered failure.
    pub survival_length: usize,
    pub design_size: usize,
    pub wall_makespan_ms: DurationMs,
}

/// Full execution trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub run_id: RunId,
    pub plan_digest: String,
    pub seed: u64,
    pub mode: ExecMode,
    /// The state execution actually started from (after noise injection).
    pub initial_state: WorldState,
    pub final_state: WorldState,
    pub outcome: Outcome,
    pub summary: OutcomeSummary,
    pub events: Vec<TraceEvent>,
    pub attempts: Vec<AtomAttempt>,
}

impl ExecutionTrace {
    /// One JSON object per line: header, events, attempts, footer.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let header = serde_json::json!({
            "kind": "header",
            "run_id": self.run_id,
            "plan_digest": self.plan_digest,
            "seed": self.seed,
            "mode": self.mode,
            "initial_state": self.initial_state,
        });
        out.push_str(&header.to_string());
        out.push('\n');
        for e in &self.events {
            let line = serde_json::json!({"kind": "event", "event": e});
            out.push_str(&line.to_string());
            out.push('\n');
        }
        for a in &self.attempts {
            let line = serde_json::json!({"kind": "attempt", "attempt": a});
            out.push_str(&line.to_string());
            out.push('\n');
        }
        let footer = serde_json::json!({
            "kind": "footer",
            "outcome": self.outcome,
            "summary": self.summary,
            "final_state": self.final_state,
        });
        out.push_str(&footer.to_string());
        out.push('\n');
        out
    }

    pub fn from_jsonl(s: &str) -> Result<ExecutionTrace, ExecError> {
        let mut run_id = None;
        let mut plan_digest = String::new();
        let mut seed = 0;
        let mut mode = ExecMode::Sequential;
        let mut initial_state = None;
        let mut events = Vec::new();
        let mut attempts = Vec::new();
        let mut footer: Option<(Outcome, OutcomeSummary, WorldState)> = None;
        for (ln, line) in s.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let v: serde_json::Value = serde_json::from_str(line)
                .map_err(|e| ExecError::InvalidInput(format!("line {}: {e}", ln + 1)))?;
            match v["kind"].as_str() {
                Some("header") => {
                    run_id = Some(RunId::new(v["run_id"].as_str().unwrap_or("")));
                    plan_digest = v["plan_digest"].as_str().unwrap_or("").to_string();
                    seed = v["seed"].as_u64().unwrap_or(0);
                    mode = serde_json::from_value(v["mode"].clone())
                        .map_err(|e| ExecError::InvalidInput(e.to_string()))?;
                    initial_state = Some(
                        serde_json::from_value(v["initial_state"].clone())
                            .map_err(|e| ExecError::InvalidInput(e.to_string()))?,
                    );
                }
                Some("event") => events.push(
                    serde_json::from_value(v["event"].clone())
                        .map_err(|e| ExecError::InvalidInput(e.to_string()))?,
                ),
                Some("attempt") => attempts.push(
                    serde_json::from_value(v["attempt"].clone())
                        .map_err(|e| ExecError::InvalidInput(e.to_string()))?,
                ),
                Some("footer") => {
                    footer = Some((
                        serde_json::from_value(v["outcome"].clone())
                            .map_err(|e| ExecError::InvalidInput(e.to_string()))?,
                        serde_json::from_value(v["summary"].clone())
                            .map_err(|e| ExecError::InvalidInput(e.to_string()))?,
                        serde_json::from_value(v["final_state"].clone())
                            .map_err(|e| ExecError::InvalidInput(e.to_string()))?,
                    ));
                }
                _ => return Err(ExecError::InvalidInput(format!("line {}: unknown kind", ln + 1))),
            }
        }
        let (outcome, summary, final_state) = footer
            .ok_or_else(|| ExecError::InvalidInput("trace has no footer".to_string()))?;
        Ok(ExecutionTrace {
            run_id: run_id.ok_or_else(|| ExecError::InvalidInput("trace has no header".into()))?,
            plan_digest,
            seed,
            mode,
            initial_state: initial_state
                .ok_or_else(|| ExecError::InvalidInput("trace header lacks state".into()))?,
            final_state,
            outcome,
            summary,
            events,
            attempts,
        })
    }
}

/// Millimeters to integer micrometers.
pub fn mm_to_um(mm: f64) -> i64 {
    (mm * 1000.0).round() as i64
}

/// Integer micrometers to millimeters.
pub fn um_to_mm(um: i64) -> f64 {
    um as f64 / 1000.0
}

/// Split-mix style derivation of per-trial seeds from a master seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Attach millimeter pose offsets to stored bricks; identity when `noise`
/// is `None` or zero-scaled. Deterministic per seed.
pub fn inject_runtime_state_noise(
    z: &WorldState,
    noise: &Option<NoiseModel>,
    rng: &mut ChaCha8Rng,
) -> WorldState {
    let Some(noise) = noise else {
        return z.clone();
    };
    let mut out = z.clone();
    let normal = if noise.sigma_mm > 0.0 {
        Some(Normal::new(0.0, noise.sigma_mm).expect("valid sigma"))
    } else {
        None
    };
    for brick in out.bricks.values_mut() {
        if matches!(brick.location, BrickLocation::InStore(_)) {
            let dx = noise.bias_mm.0 + normal.map(|n| n.sample(rng)).unwrap_or(0.0);
            let dy = noise.bias_mm.1 + normal.map(|n| n.sample(rng)).unwrap_or(0.0);
            brick.pose_offset_um = (mm_to_um(dx), mm_to_um(dy));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// engine

struct Engine<'a> {
    cfg: &'a ExecutionConfig,
    rng: ChaCha8Rng,
    state: WorldState,
    events: Vec<TraceEvent>,
    attempts: Vec<AtomAttempt>,
    aborted_at: Option<usize>,
    next_attempt_id: usize,
    next_retry_group: usize,
}

struct AtomContext<'s> {
    step_index: usize,
    atom_index: usize,
    atom: &'s Skill,
    /// Atom the check verifies, when this atom is a check.
    checked: Option<&'s Skill>,
}

enum AtomResult {
    Continue,
    Abort,
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a ExecutionConfig, state: WorldState) -> Engine<'a> {
        Engine {
            cfg,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            state,
            events: Vec::new(),
            attempts: Vec::new(),
            aborted_at: None,
            next_attempt_id: 0,
            next_retry_group: 0,
        }
    }

    fn subject(step: usize, atom: usize) -> String {
        format!("s{step:02}.a{atom}")
    }

    fn event(&mut self, t_ms: TimeMs, kind: EventKind, subject: String, detail: String) {
        self.events.push(TraceEvent {
            t_ms,
            kind,
            subject,
            detail,
        });
    }

    fn scaled(&self, d: DurationMs) -> DurationMs {
        ((d as f64 / self.cfg.speed_scale).round() as DurationMs).max(1)
    }

    fn failure_probability(&self, atom: &Skill) -> f64 {
        let robot = atom.actor();
        let brick = atom.object();
        let wear = brick
            .as_ref()
            .and_then(|b| self.state.bricks.get(b))
            .map(|b| b.wear_count)
            .unwrap_or(0);
        let bucket = brick
            .as_ref()
            .and_then(|b| self.state.brick_cell(b))
            .map(|c| crate::world::bucket_of(&self.state, c));
        self.cfg.failures.probability(
            &atom.verb,
            robot.as_ref(),
            brick.as_ref(),
            wear,
            bucket.as_ref(),
        )
    }

    /// Drop any held brick involved in the atom back to its store cell.
    fn perturb_failure(&mut self, atom: &Skill) -> Option<Cell> {
        let brick = atom.object()?;
        let b = self.state.bricks.get(&brick)?;
        if !matches!(b.location, BrickLocation::InHand(_)) {
            return None;
        }
        let store = b.store_cell;
        let mut next = self.state.clone();
        if let Some(bi) = next.bricks.get_mut(&brick) {
            bi.location = BrickLocation::InStore(store);
        }
        for r in next.robots.values_mut() {
            if r.holding.as_ref() == Some(&brick) {
                r.holding = None;
            }
        }
        self.state = next;
        Some(store)
    }

    /// Execute one atom attempt spanning `[start, start+duration)`.
    /// Returns the end time and whether execution may continue.
    fn run_atom(
        &mut self,
        ctx: &AtomContext,
        start_ms: TimeMs,
        duration_ms: DurationMs,
    ) -> Result<(TimeMs, AtomResult), ExecError> {
        let subject = Self::subject(ctx.step_index, ctx.atom_index);
        let atom = ctx.atom;
        self.event(start_ms, EventKind::Start, subject.clone(), atom.name.clone());
        let pre_eval = atom.pre.atom_results(&self.state);
        let retry_group = self.next_retry_group;
        self.next_retry_group += 1;

        // runtime precondition: violations abort (downstream effect of
        // undetected failures)
        if !atom.pre.eval(&self.state) {
            let failing = atom
                .pre
                .first_failure(&self.state)
                .unwrap_or_else(|| "unknown".to_string());
            let end = start_ms + duration_ms;
            self.push_attempt(AtomAttempt {
                attempt_id: 0,
                retry_group,
                attempt_no: 1,
                step_index: ctx.step_index,
                atom_index: ctx.atom_index,
                skill: atom.name.clone(),
                verb: atom.verb.clone(),
                robot: atom.actor(),
                brick: atom.object(),
                policy_parameters: atom.policy.parameters.clone(),
                bindings: atom.bindings.clone(),
                start_ms,
                end_ms: end,
                pre_eval,
                post_eval: Vec::new(),
                outcome: AttemptOutcome::Failed,
                observed_offset_um: None,
                drop_cell: None,
                check_of: self.check_of_param(atom),
            });
            self.event(
                end,
                EventKind::Abort,
                subject,
                format!("precondition violated: {failing}"),
            );
            self.aborted_at = Some(ctx.step_index);
            self.state.clock_ms = end;
            return Ok((end, AtomResult::Abort));
        }

        let end = start_ms + duration_ms;

        if let Some(checked) = ctx.checked {
            return self.run_check_atom(ctx, checked, start_ms, end, retry_group, pre_eval);
        }

        // injected stochastic failure
        let p_fail = self.failure_probability(atom);
        let fail: bool = self.rng.gen_bool(p_fail.clamp(0.0, 1.0));

        let observed_offset = if atom.verb == Verb::Pick {
            atom.object()
                .and_then(|b| self.state.bricks.get(&b))
                .map(|b| b.pose_offset_um)
                .filter(|_| self.cfg.noise.is_some())
        } else {
            None
        };

        let mut drop_cell = None;
        if fail {
            self.event(end, EventKind::FailureInjected, subject.clone(), atom.name.clone());
            drop_cell = self.perturb_failure(atom);
        } else {
            let image = effect_image(&self.state, atom);
            image
                .validate()
                .map_err(ExecError::EngineInvariant)?;
            self.state = image;
        }
        self.state.clock_ms = end;

        let post_eval = atom.post.atom_results(&self.state);
        let post_ok = atom.post.eval(&self.state);
        let outcome = if fail { AttemptOutcome::Failed } else { AttemptOutcome::Success };
        self.push_attempt(AtomAttempt {
            attempt_id: 0,
            retry_group,
            attempt_no: 1,
            step_index: ctx.step_index,
            atom_index: ctx.atom_index,
            skill: atom.name.clone(),
            verb: atom.verb.clone(),
            robot: atom.actor(),
            brick: atom.object(),
            policy_parameters: atom.policy.parameters.clone(),
            bindings: atom.bindings.clone(),
            start_ms,
            end_ms: end,
            pre_eval,
            post_eval,
            outcome,
            observed_offset_um: observed_offset,
            drop_cell,
            check_of: None,
        });
        self.event(end, EventKind::End, subject.clone(), atom.name.clone());

        if self.cfg.checks_enabled {
            if post_ok {
                self.event(end, EventKind::CheckPass, subject.clone(), String::new());
            } else {
                self.event(end, EventKind::CheckFail, subject.clone(), String::new());
                return self.recover(ctx, atom, end, retry_group, subject);
            }
        }
        Ok((end, AtomResult::Continue))
    }

    fn check_of_param(&self, atom: &Skill) -> Option<usize> {
        atom.policy
            .parameters
            .get("check_of")
            .and_then(|v| v.as_u64())
            .map(|v| v as usize)
    }

    /// A detect-check atom: verify the checked atom's post-condition with
    /// configurable false-negative/false-positive rates.
    fn run_check_atom(
        &mut self,
        ctx: &AtomContext,
        checked: &Skill,
        start_ms: TimeMs,
        end_ms: TimeMs,
        retry_group: usize,
        pre_eval: Vec<(String, bool)>,
    ) -> Result<(TimeMs, AtomResult), ExecError> {
        let subject = Self::subject(ctx.step_index, ctx.atom_index);
        let atom = ctx.atom;
        // the detect belief effect itself
        let image = effect_image(&self.state, atom);
        self.state = image;
        self.state.clock_ms = end_ms;

        let truly_ok = checked.post.eval(&self.state);
        let flip: bool = if truly_ok {
            self.rng.gen_bool(self.cfg.check_false_positive.clamp(0.0, 1.0))
        } else {
            self.rng.gen_bool(self.cfg.check_false_negative.clamp(0.0, 1.0))
        };
        let observed_ok = if flip { !truly_ok } else { truly_ok };

        let post_eval = checked.post.atom_results(&self.state);
        self.push_attempt(AtomAttempt {
            attempt_id: 0,
            retry_group,
            attempt_no: 1,
            step_index: ctx.step_index,
            atom_index: ctx.atom_index,
            skill: atom.name.clone(),
            verb: atom.verb.clone(),
            robot: atom.actor(),
            brick: atom.object(),
            policy_parameters: atom.policy.parameters.clone(),
            bindings: atom.bindings.clone(),
            start_ms,
            end_ms,
            pre_eval,
            post_eval,
            outcome: if observed_ok { AttemptOutcome::Success } else { AttemptOutcome::Failed },
            observed_offset_um: None,
            drop_cell: None,
            check_of: self.check_of_param(atom),
        });
        self.event(end_ms, EventKind::End, subject.clone(), atom.name.clone());
        if observed_ok {
            self.event(end_ms, EventKind::CheckPass, subject, checked.name.clone());
            Ok((end_ms, AtomResult::Continue))
        } else {
            self.event(end_ms, EventKind::CheckFail, subject, checked.name.clone());
            self.recover(ctx, checked, end_ms, retry_group, Self::subject(ctx.step_index, ctx.atom_index))
        }
    }

    /// Apply the recovery policy to restore `failed`'s post-condition.
    fn recover(
        &mut self,
        ctx: &AtomContext,
        failed: &Skill,
        t_ms: TimeMs,
        retry_group: usize,
        subject: String,
    ) -> Result<(TimeMs, AtomResult), ExecError> {
        match self.cfg.recovery {
            RecoveryPolicy::None => {
                self.event(t_ms, EventKind::Abort, subject, "no recovery policy".to_string());
                self.aborted_at = Some(ctx.step_index);
                Ok((t_ms, AtomResult::Abort))
            }
            RecoveryPolicy::Operator {
                success_probability,
                time_cost_ms,
            } => {
                self.event(t_ms, EventKind::Pause, subject.clone(), "operator requested".into());
                let ok: bool = self.rng.gen_bool(success_probability.clamp(0.0, 1.0));
                let cost = self.scaled(time_cost_ms);
                let end = t_ms + cost;
                if ok {
                    let image = effect_image(&self.state, failed);
                    image.validate().map_err(ExecError::EngineInvariant)?;
                    self.state = image;
                    self.state.clock_ms = end;
                    let post_eval = failed.post.atom_results(&self.state);
                    self.push_attempt(AtomAttempt {
                        attempt_id: 0,
                        retry_group,
                        attempt_no: 2,
                        step_index: ctx.step_index,
                        atom_index: ctx.atom_index,
                        skill: failed.name.clone(),
                        verb: failed.verb.clone(),
                        robot: failed.actor(),
                        brick: failed.object(),
                        policy_parameters: failed.policy.parameters.clone(),
                        bindings: failed.bindings.clone(),
                        start_ms: t_ms,
                        end_ms: end,
                        pre_eval: Vec::new(),
                        post_eval,
                        outcome: AttemptOutcome::Recovered,
                        observed_offset_um: None,
                        drop_cell: None,
                        check_of: None,
                    });
                    self.event(end, EventKind::Recover, subject, failed.name.clone());
                    Ok((end, AtomResult::Continue))
                } else {
                    self.state.clock_ms = end;
                    self.event(end, EventKind::Abort, subject, "operator recovery failed".into());
                    self.aborted_at = Some(ctx.step_index);
                    Ok((end, AtomResult::Abort))
                }
            }
        }
    }

    fn push_attempt(&mut self, mut attempt: AtomAttempt) {
        attempt.attempt_id = self.next_attempt_id;
        self.next_attempt_id += 1;
        self.attempts.push(attempt);
    }
}

/// Longest contiguous prefix of plan steps whose bricks sit at their
/// grounded targets.
fn survival_length(plan: &Plan, z: &WorldState) -> usize {
    let mut n = 0;
    for g in &plan.grounded {
        let ok = z
            .bricks
            .get(&g.brick)
            .map(|b| b.location == BrickLocation::OnPlate(g.target))
            .unwrap_or(false);
        if ok {
            n += 1;
        } else {
            break;
        }
    }
    n
}

/// Execute a plan under the given configuration. Deterministic for equal
/// (plan, state, config) triples.
pub fn execute(
    plan: &Plan,
    lib: &SkillLibrary,
    z0: &WorldState,
    cfg: &ExecutionConfig,
) -> Result<ExecutionTrace, ExecError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6e6f_6973_655f_7631);
    let start_state = inject_runtime_state_noise(z0, &cfg.noise, &mut rng);
    match cfg.mode {
        ExecMode::Sequential => execute_sequential(plan, lib, &start_state, cfg),
        ExecMode::Async => execute_async(plan, lib, &start_state, cfg),
    }
}

fn finish_trace(
    plan: &Plan,
    cfg: &ExecutionConfig,
    initial_state: WorldState,
    mut engine: Engine,
    wall_ms: DurationMs,
) -> ExecutionTrace {
    // async completion processing can append events out of wall-clock
    // order; a stable sort restores the time order without disturbing
    // logical order at equal timestamps
    engine.events.sort_by_key(|e| e.t_ms);
    let mut outcome = match engine.aborted_at {
        Some(step) => Outcome::AbortedAt { step_index: step },
        None => Outcome::Completed,
    };
    let survival = survival_length(plan, &engine.state);
    // structural completion check: never report a false success
    if outcome == Outcome::Completed && survival < plan.grounded.len() {
        outcome = Outcome::AbortedAt {
            step_index: plan
                .grounded
                .get(survival)
                .map(|g| g.step_index)
                .unwrap_or(plan.grounded.len()),
        };
    }
    let summary = OutcomeSummary {
        success: outcome == Outcome::Completed,
        survival_length: survival,
        design_size: plan.grounded.len(),
        wall_makespan_ms: wall_ms,
    };
    let run_id = RunId::new(format!("run-{}-{:016x}", plan.design_name, cfg.seed));
    ExecutionTrace {
        run_id,
        plan_digest: plan.digest(),
        seed: cfg.seed,
        mode: cfg.mode,
        initial_state,
        final_state: engine.state.clone(),
        outcome,
        summary,
        events: engine.events,
        attempts: engine.attempts,
    }
}

fn execute_sequential(
    plan: &Plan,
    lib: &SkillLibrary,
    z0: &WorldState,
    cfg: &ExecutionConfig,
) -> Result<ExecutionTrace, ExecError> {
    let mut engine = Engine::new(cfg, z0.clone());
    let mut t = z0.clock_ms;
    'steps: for g in &plan.grounded {
        let atoms = expand_grounded(lib, g, &engine.state)?;
        for (atom_index, atom) in atoms.iter().enumerate() {
            let checked_pos = engine.check_of_param(atom);
            let checked = checked_pos.and_then(|p| atoms.get(p));
            let duration = engine.scaled(effective_duration_ms(&engine.state, atom));
            let ctx = AtomContext {
                step_index: g.step_index,
                atom_index,
                atom,
                checked,
            };
            let (end, result) = engine.run_atom(&ctx, t, duration)?;
            t = end;
            if matches!(result, AtomResult::Abort) {
                break 'steps;
            }
        }
    }
    let wall = t - z0.clock_ms;
    Ok(finish_trace(plan, cfg, z0.clone(), engine, wall))
}

fn execute_async(
    plan: &Plan,
    lib: &SkillLibrary,
    z0: &WorldState,
    cfg: &ExecutionConfig,
) -> Result<ExecutionTrace, ExecError> {
    let tpg = build_tpg(plan, lib, z0)?;
    let dispatch = dispatch_order(&tpg);
    let mut engine = Engine::new(cfg, z0.clone());

    // expansions are binding-level and state-independent; durations come
    // from the static segment estimates scaled by speed
    let mut expansions: BTreeMap<usize, Vec<Skill>> = BTreeMap::new();
    {
        let mut sim = z0.clone();
        for g in &plan.grounded {
            let atoms = expand_grounded(lib, g, &sim)?;
            for atom in &atoms {
                if let Ok(next) = crate::world::effects::apply_effect(&sim, atom) {
                    sim = next;
                }
            }
            expansions.insert(g.step_index, atoms);
        }
    }

    let mut lane_pos: BTreeMap<RobotId, usize> = BTreeMap::new();
    let mut completed: BTreeSet<usize> = BTreeSet::new();
    let mut running: BinaryHeap<std::cmp::Reverse<(TimeMs, usize)>> = BinaryHeap::new();
    let mut busy_until: BTreeMap<RobotId, TimeMs> = BTreeMap::new();
    let mut atom_started: BTreeMap<(usize, usize), TimeMs> = BTreeMap::new();
    let mut t: TimeMs = z0.clock_ms;
    let mut wall_end: TimeMs = t;
    let mut aborted = false;

    loop {
        // dispatch every lane-head node whose predecessors are done and
        // whose arm is free
        if !aborted {
            let mut dispatched = true;
            while dispatched {
                dispatched = false;
                for (robot, queue) in &dispatch.queues {
                    let pos = lane_pos.entry(robot.clone()).or_insert(0);
                    if *pos >= queue.len() {
                        continue;
                    }
                    let node_id = queue[*pos];
                    let free_at = busy_until.get(robot).copied().unwrap_or(t);
                    if free_at > t {
                        continue;
                    }
                    if dispatch.ready(node_id, &completed) {
                        let node = &tpg.nodes[node_id];
                        let duration = engine.scaled(node.duration_ms);
                        if node.segment_index == 0 {
                            atom_started
                                .entry((node.step_index, node.atom_index))
                                .or_insert(t);
                        }
                        running.push(std::cmp::Reverse((t + duration, node_id)));
                        busy_until.insert(robot.clone(), t + duration);
                        *pos += 1;
                        dispatched = true;
                    }
                }
            }
        }

        let Some(std::cmp::Reverse((end, node_id))) = running.pop() else {
            // nothing running: either done, aborted, or an arm is blocked
            // by a recovery extension
            let lanes_done = dispatch
                .queues
                .iter()
                .all(|(r, q)| lane_pos.get(r).copied().unwrap_or(0) >= q.len());
            if aborted || lanes_done {
                break;
            }
            match busy_until.values().copied().filter(|v| *v > t).min() {
                Some(next_free) => {
                    t = next_free;
                    continue;
                }
                None => break,
            }
        };
        t = end;
        wall_end = wall_end.max(end);
        let node = &tpg.nodes[node_id];
        completed.insert(node_id);

        // atom effects resolve when the final segment completes
        if node.segment_index + 1 == node.segment_count && !aborted {
            let atoms = &expansions[&node.step_index];
            let atom = &atoms[node.atom_index];
            let checked = engine.check_of_param(atom).and_then(|p| atoms.get(p));
            let start = atom_started
                .get(&(node.step_index, node.atom_index))
                .copied()
                .unwrap_or(end.saturating_sub(engine.scaled(node.duration_ms)));
            let ctx = AtomContext {
                step_index: node.step_index,
                atom_index: node.atom_index,
                atom,
                checked,
            };
            let (real_end, result) = engine.run_atom(&ctx, start, end - start)?;
            if real_end > end {
                // recovery extended this arm's busy window
                busy_until.insert(node.robot.clone(), real_end);
                wall_end = wall_end.max(real_end);
            }
            if matches!(result, AtomResult::Abort) {
                aborted = true;
            }
        }
    }
    engine.state.clock_ms = wall_end;
    let wall = wall_end - z0.clock_ms;
    Ok(finish_trace(plan, cfg, z0.clone(), engine, wall))
}

/// Sequential total duration vs. async makespan under a zero-failure
/// configuration.
pub fn compare_modes(
    plan: &Plan,
    lib: &SkillLibrary,
    z0: &WorldState,
) -> Result<(DurationMs, DurationMs), ExecError> {
    let tpg = build_tpg(plan, lib, z0)?;
    Ok((tpg.sequential_duration_ms(), crate::tpg::makespan(&tpg)))
}

/// One batch trial row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial: usize,
    pub seed: u64,
    pub success: bool,
    pub survival_length: usize,
    pub wall_makespan_ms: DurationMs,
}

/// Aggregated batch results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_survival: f64,
    pub min_survival: usize,
    pub max_survival: usize,
    pub mean_makespan_ms: f64,
    pub rows: Vec<TrialRow>,
}

impl BatchSummary {
    /// Order-independent aggregation of trial rows.
    pub fn from_rows(mut rows: Vec<TrialRow>) -> BatchSummary {
        rows.sort_by_key(|r| r.trial);
        let trials = rows.len();
        let successes = rows.iter().filter(|r| r.success).count();
        let mean_survival = if trials == 0 {
            0.0
        } else {
            rows.iter().map(|r| r.survival_length as f64).sum::<f64>() / trials as f64
        };
        let mean_makespan_ms = if trials == 0 {
            0.0
        } else {
            rows.iter().map(|r| r.wall_makespan_ms as f64).sum::<f64>() / trials as f64
        };
        BatchSummary {
            trials,
            successes,
            success_rate: if trials == 0 { 0.0 } else { successes as f64 / trials as f64 },
            mean_survival,
            min_survival: rows.iter().map(|r| r.survival_length).min().unwrap_or(0),
            max_survival: rows.iter().map(|r| r.survival_length).max().unwrap_or(0),
            mean_makespan_ms,
            rows,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }
}

/// Run `n` seeded trials of the same plan; trial seeds derive from the
/// master seed. Single-threaded and deterministic.
pub fn run_batch(
    plan: &Plan,
    lib: &SkillLibrary,
    z0: &WorldState,
    base_cfg: &ExecutionConfig,
    n: usize,
) -> Result<BatchSummary, ExecError> {
    let mut rows = Vec::with_capacity(n);
    for trial in 0..n {
        let mut cfg = base_cfg.clone();
        cfg.seed = derive_seed(base_cfg.seed, trial as u64);
        let trace = execute(plan, lib, z0, &cfg)?;
        rows.push(TrialRow {
            trial,
            seed: cfg.seed,
            success: trace.summary.success,
            survival_length: trace.summary.survival_length,
            wall_makespan_ms: trace.summary.wall_makespan_ms,
        });
    }
    Ok(BatchSummary::from_rows(rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::{plan, PlanOptions};
    use crate::skill::library::{builtin, EvaluatorSet};
    use crate::taskspec::{designs, AssemblyStep, StepTarget, TaskSpec};
    use crate::world::config::WorldConfig;
    use crate::world::types::Cell3;

    fn one_brick_setup() -> (Plan, SkillLibrary, WorldState) {
        let z = WorldConfig::two_arm_demo(2).build().unwrap();
        let lib = builtin();
        let evals = EvaluatorSet::from_library(&lib);
        let task = TaskSpec {
            design_name: "one".into(),
            steps: vec![AssemblyStep {
                index: 1,
                brick_type: crate::world::types::BrickType::new(2, 4),
                target: StepTarget::Absolute(Cell3::new(20, 20, 0)),
                meta_hint: None,
            }],
        };
        let p = plan(&task, &lib, &z, &evals, &PlanOptions::default()).unwrap();
        (p, lib, z)
    }

    #[test]
    fn zero_failure_run_completes() {
        let (p, lib, z) = one_brick_setup();
        let cfg = ExecutionConfig::new(7);
        let trace = execute(&p, &lib, &z, &cfg).unwrap();
        assert_eq!(trace.outcome, Outcome::Completed);
        assert_eq!(trace.summary.survival_length, 1);
        assert!(trace.summary.success);
        // events are time-ordered
        for w in trace.events.windows(2) {
            assert!(w[0].t_ms <= w[1].t_ms);
        }
    }

    #[test]
    fn forced_pick_failure_with_recovery_completes_with_pause_recover() {
        let (p, lib, z) = one_brick_setup();
        let mut cfg = ExecutionConfig::new(11);
        cfg.failures = FailureModel::flat(Verb::Pick, 1.0);
        cfg.checks_enabled = true;
        cfg.recovery = RecoveryPolicy::Operator {
            success_probability: 1.0,
            time_cost_ms: 30_000,
        };
        let trace = execute(&p, &lib, &z, &cfg).unwrap();
        assert_eq!(trace.outcome, Outcome::Completed);
        let kinds: Vec<EventKind> = trace.events.iter().map(|e| e.kind).collect();
        assert!(kinds.contains(&EventKind::FailureInjected));
        assert!(kinds.contains(&EventKind::Pause));
        assert!(kinds.contains(&EventKind::Recover));
        // failed + recovered attempts share a retry group
        let pick_attempts: Vec<&AtomAttempt> = trace
            .attempts
            .iter()
            .filter(|a| a.verb == Verb::Pick)
            .collect();
        assert_eq!(pick_attempts.len(), 2);
        assert_eq!(pick_attempts[0].retry_group, pick_attempts[1].retry_group);
        assert_eq!(pick_attempts[0].outcome, AttemptOutcome::Failed);
        assert_eq!(pick_attempts[1].outcome, AttemptOutcome::Recovered);
    }

    #[test]
    fn forced_failure_without_checks_aborts_downstream_and_never_reports_success() {
        let (p, lib, z) = one_brick_setup();
        let mut cfg = ExecutionConfig::new(3);
        cfg.failures = FailureModel::flat(Verb::Pick, 1.0);
        cfg.checks_enabled = false;
        let trace = execute(&p, &lib, &z, &cfg).unwrap();
        assert!(!trace.summary.success);
        assert!(matches!(trace.outcome, Outcome::AbortedAt { .. }));
        assert_eq!(trace.summary.survival_length, 0);
        // the abort happened at a downstream precondition, not at the pick
        assert!(trace
            .events
            .iter()
            .any(|e| e.kind == EventKind::Abort && e.detail.contains("precondition")));
    }

    #[test]
    fn checks_off_place_failure_is_caught_by_structural_verification() {
        let (p, lib, z) = one_brick_setup();
        let mut cfg = ExecutionConfig::new(5);
        cfg.failures = FailureModel::flat(Verb::PlaceDown, 1.0);
        let trace = execute(&p, &lib, &z, &cfg).unwrap();
        assert!(!trace.summary.success);
        assert!(matches!(trace.outcome, Outcome::AbortedAt { step_index: 1 }));
    }

    #[test]
    fn traces_are_byte_identical_for_equal_seeds() {
        let (p, lib, z) = one_brick_setup();
        let mut cfg = ExecutionConfig::new(123);
        cfg.failures = FailureModel::flat(Verb::Pick, 0.3);
        cfg.checks_enabled = true;
        cfg.recovery = RecoveryPolicy::Operator {
            success_probability: 0.9,
            time_cost_ms: 10_000,
        };
        cfg.noise = Some(NoiseModel {
            bias_mm: (1.0, -0.5),
            sigma_mm: 0.4,
        });
        let a = execute(&p, &lib, &z, &cfg).unwrap();
        let b = execute(&p, &lib, &z, &cfg).unwrap();
        assert_eq!(a.to_jsonl(), b.to_jsonl());
        let reparsed = ExecutionTrace::from_jsonl(&a.to_jsonl()).unwrap();
        assert_eq!(reparsed, a);
    }

    #[test]
    fn async_mode_matches_tpg_makespan_without_failures() {
        let z = designs::disjoint_world().build().unwrap();
        let lib = builtin();
        let evals = EvaluatorSet::from_library(&lib);
        let p = plan(&designs::disjoint_task(), &lib, &z, &evals, &PlanOptions::default()).unwrap();
        let (seq, mk) = compare_modes(&p, &lib, &z).unwrap();
        assert!(mk <= seq);
        let mut cfg = ExecutionConfig::new(1);
        cfg.mode = ExecMode::Async;
        let trace = execute(&p, &lib, &z, &cfg).unwrap();
        assert_eq!(trace.outcome, Outcome::Completed);
        assert_eq!(trace.summary.wall_makespan_ms, mk);
        let mut cfg_seq = ExecutionConfig::new(1);
        cfg_seq.mode = ExecMode::Sequential;
        let seq_trace = execute(&p, &lib, &z, &cfg_seq).unwrap();
        assert_eq!(seq_trace.summary.wall_makespan_ms, seq);
    }

    #[test]
    fn noise_injection_is_seeded_and_identity_at_zero() {
        let z = WorldConfig::two_arm_demo(2).build().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let same = inject_runtime_state_noise(&z, &None, &mut rng);
        assert_eq!(same, z);

        let noise = Some(NoiseModel { bias_mm: (2.0, 0.0), sigma_mm: 0.0 });
        let mut rng1 = ChaCha8Rng::seed_from_u64(9);
        let a = inject_runtime_state_noise(&z, &noise, &mut rng1);
        for b in a.bricks.values() {
            assert_eq!(b.pose_offset_um, (2000, 0));
        }
        let noisy = Some(NoiseModel { bias_mm: (0.0, 0.0), sigma_mm: 0.5 });
        let mut rng2 = ChaCha8Rng::seed_from_u64(10);
        let mut rng3 = ChaCha8Rng::seed_from_u64(10);
        let x = inject_runtime_state_noise(&z, &noisy, &mut rng2);
        let y = inject_runtime_state_noise(&z, &noisy, &mut rng3);
        assert_eq!(x, y);
    }

    #[test]
    fn batch_summaries_are_deterministic_and_order_independent() {
        let (p, lib, z) = one_brick_setup();
        let mut cfg = ExecutionConfig::new(77);
        cfg.failures = FailureModel::flat(Verb::Pick, 0.5);
        let a = run_batch(&p, &lib, &z, &cfg, 20).unwrap();
        let b = run_batch(&p, &lib, &z, &cfg, 20).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        // shuffled merge reproduces the same summary
        let mut rows = a.rows.clone();
        rows.reverse();
        let merged = BatchSummary::from_rows(rows);
        assert_eq!(merged, a);
    }
}
