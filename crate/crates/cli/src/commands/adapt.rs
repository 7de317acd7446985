//! `skillgraph adapt`: closed-loop improvement subcommands.

use std::path::PathBuf;

use anyhow::anyhow;
use clap::{Parser, Subcommand};
use skillgraph_core::adapt::{
    estimate_bias, estimate_risk, insert_checks, reallocate, update_evaluators, AdaptError,
    BanditState, FailureHistory, RiskModel,
};
use skillgraph_core::datalog::LogStore;
use skillgraph_core::ids::secs_to_ms;
use skillgraph_core::planner::{Plan, PlanOptions};
use skillgraph_core::skill::library::EvaluatorSet;

use crate::commands::{load_library, load_task, load_world, map_plan_error, write_output};
use crate::{CliError, CliResult};

#[derive(Parser)]
pub struct Args {
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Subcommand)]
pub enum Sub {
    /// Estimate per-context failure probabilities from logs.
    Estimate {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fold a risk model into evaluator tables.
    UpdateEvals {
        #[arg(long)]
        risk: PathBuf,
        #[arg(long)]
        library: Option<PathBuf>,
        /// Expected-cost inflation cap, as a multiple of the base cost.
        #[arg(long, default_value_t = 10.0)]
        cap: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Insert detect-outcome checks after high-risk manipulation atoms.
    InsertChecks {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        risk: PathBuf,
        #[arg(long)]
        threshold: f64,
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        library: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Penalize failure-history contexts and re-plan.
    Reallocate {
        #[arg(long)]
        task: PathBuf,
        /// Failure history file; defaults to extracting one from --store.
        #[arg(long)]
        history: Option<PathBuf>,
        #[arg(long)]
        store: Option<PathBuf>,
        /// Penalty in seconds added to each failing context.
        #[arg(long)]
        penalty_s: f64,
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        library: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate systematic pose bias from logged pick observations.
    Bias {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Select an arm for a context (registering arms if given).
    BanditSelect {
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        context: String,
        /// Comma-separated arms to register before selecting.
        #[arg(long)]
        arms: Option<String>,
    },
    /// Record a reward for an arm.
    BanditUpdate {
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        context: String,
        #[arg(long)]
        arm: String,
        #[arg(long)]
        reward: f64,
    },
}

fn load_store(path: &PathBuf) -> Result<LogStore, CliError> {
    LogStore::read_dir(path).map_err(|e| CliError::schema(anyhow!("store {}: {e}", path.display())))
}

fn load_risk(path: &PathBuf) -> Result<RiskModel, CliError> {
    RiskModel::from_file(path).map_err(|e| CliError::schema(anyhow!(e)))
}

fn map_adapt_error(e: AdaptError) -> CliError {
    match e {
        AdaptError::NoFeasiblePlan(_) => CliError::no_plan(anyhow!(e)),
        AdaptError::Plan(p) => map_plan_error(p),
        other => CliError::schema(anyhow!(other)),
    }
}

pub fn run(args: Args) -> CliResult {
    match args.command {
        Sub::Estimate { store, out } => {
            let store = load_store(&store)?;
            let risk = estimate_risk(&store);
            write_output(&out, &risk.to_json())?;
            println!("estimated {} contexts -> {}", risk.estimates.len(), out.display());
        }
        Sub::UpdateEvals {
            risk,
            library,
            cap,
            out,
        } => {
            let risk = load_risk(&risk)?;
            let lib = load_library(&library)?;
            let mut evals = EvaluatorSet::from_library(&lib);
            update_evaluators(&risk, &mut evals, &lib, cap);
            write_output(&out, &evals.to_json())?;
            println!("updated evaluators -> {}", out.display());
        }
        Sub::InsertChecks {
            plan,
            risk,
            threshold,
            world,
            library,
            out,
        } => {
            let plan = Plan::from_file(&plan).map_err(|e| CliError::schema(anyhow!(e)))?;
            let risk = load_risk(&risk)?;
            let z0 = load_world(&world)?;
            let lib = load_library(&library)?;
            let checked =
                insert_checks(&plan, &risk, threshold, &lib, &z0).map_err(map_adapt_error)?;
            let inserted: usize = checked.grounded.iter().map(|g| g.checks_after.len()).sum();
            write_output(&out, &checked.to_json())?;
            println!("inserted {inserted} checks -> {}", out.display());
        }
        Sub::Reallocate {
            task,
            history,
            store,
            penalty_s,
            world,
            library,
            out,
        } => {
            let task = load_task(&task)?;
            let z0 = load_world(&world)?;
            let lib = load_library(&library)?;
            let history = match (&history, &store) {
                (Some(h), _) => {
                    let s = std::fs::read_to_string(h)
                        .map_err(|e| CliError::schema(anyhow!("{}: {e}", h.display())))?;
                    FailureHistory::from_json(&s).map_err(|e| CliError::schema(anyhow!(e)))?
                }
                (None, Some(dir)) => FailureHistory::from_store(&load_store(dir)?),
                (None, None) => {
                    return Err(CliError::schema(anyhow!(
                        "reallocate needs --history or --store"
                    )))
                }
            };
            let evals = EvaluatorSet::from_library(&lib);
            let plan = reallocate(
                &task,
                &history,
                secs_to_ms(penalty_s),
                &lib,
                &z0,
                &evals,
                &PlanOptions::default(),
            )
            .map_err(map_adapt_error)?;
            write_output(&out, &plan.to_json())?;
            println!(
                "reallocated around {} failure tuples -> {}",
                history.events.len(),
                out.display()
            );
        }
        Sub::Bias { store, out } => {
            let store = load_store(&store)?;
            let est = estimate_bias(&store);
            write_output(&out, &est.to_json())?;
            println!(
                "bias estimate over {} observations: ({:.3}, {:.3}) mm -> {}",
                est.count, est.mean_mm.0, est.mean_mm.1, out.display()
            );
        }
        Sub::BanditSelect {
            state,
            context,
            arms,
        } => {
            let mut bandit = if state.exists() {
                BanditState::from_file(&state).map_err(|e| CliError::schema(anyhow!(e)))?
            } else {
                BanditState::default()
            };
            if let Some(arms) = arms {
                for arm in arms.split(',').filter(|a| !a.is_empty()) {
                    bandit.register_arm(&context, arm);
                }
            }
            let chosen = bandit
                .select(&context)
                .map_err(map_adapt_error)?
                .to_string();
            write_output(&state, &bandit.to_json())?;
            println!("{chosen}");
        }
        Sub::BanditUpdate {
            state,
            context,
            arm,
            reward,
        } => {
            let mut bandit =
                BanditState::from_file(&state).map_err(|e| CliError::schema(anyhow!(e)))?;
            bandit
                .update(&context, &arm, reward)
                .map_err(map_adapt_error)?;
            write_output(&state, &bandit.to_json())?;
            println!("updated {context}/{arm}");
        }
    }
    Ok(())
}
