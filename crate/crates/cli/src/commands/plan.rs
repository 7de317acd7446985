//! `skillgraph plan`: ground a task into a skill plan.

use std::path::PathBuf;

use anyhow::anyhow;
use clap::Parser;
use skillgraph_core::ids::ms_to_secs;
use skillgraph_core::planner::{plan_with_stats, PlanOptions};
use skillgraph_core::skill::library::EvaluatorSet;
use skillgraph_core::taskspec::{validate_inventory, Inventory};

use crate::commands::{load_library, load_task, load_world, map_plan_error, write_output};
use crate::{CliError, CliResult};

#[derive(Parser)]
pub struct Args {
    /// Assembly task document (JSON).
    #[arg(long)]
    pub task: PathBuf,
    /// World configuration (JSON).
    #[arg(long)]
    pub world: PathBuf,
    /// Skill library; defaults to the built-in two-arm library.
    #[arg(long)]
    pub library: Option<PathBuf>,
    /// Evaluator set overriding the library's own tables.
    #[arg(long)]
    pub evaluators: Option<PathBuf>,
    /// Where to write the plan.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Node-expansion budget for the search.
    #[arg(long, default_value_t = 500_000)]
    pub max_expansions: usize,
}

pub fn run(args: Args) -> CliResult {
    let task = load_task(&args.task)?;
    let z0 = load_world(&args.world)?;
    let lib = load_library(&args.library)?;
    let evals = match &args.evaluators {
        Some(p) => {
            let s = std::fs::read_to_string(p)
                .map_err(|e| CliError::schema(anyhow!("{}: {e}", p.display())))?;
            EvaluatorSet::from_json(&s)
                .map_err(|e| CliError::schema(anyhow!("{}: {e}", p.display())))?
        }
        None => EvaluatorSet::from_library(&lib),
    };

    let report = validate_inventory(&task, &Inventory::from_world(&z0));
    if !report.ok {
        return Err(CliError::no_plan(anyhow!(
            "inventory cannot cover the task; deficits: {:?}",
            report.deficits
        )));
    }

    let opts = PlanOptions {
        max_expansions: args.max_expansions,
    };
    let (plan, stats) =
        plan_with_stats(&task, &lib, &z0, &evals, &opts).map_err(map_plan_error)?;

    println!(
        "plan {}: {} steps, cost {:.3}s ({} expansions)",
        plan.design_name,
        plan.grounded.len(),
        ms_to_secs(plan.total_cost_ms),
        stats.expanded
    );
    println!(
        "{:>4}  {:<18} {:<4} {:<6} {:<5} {:<12} {:>9}",
        "step", "meta", "arm", "helper", "brick", "target", "est(s)"
    );
    for g in &plan.grounded {
        println!(
            "{:>4}  {:<18} {:<4} {:<6} {:<5} {:<12} {:>9.3}",
            g.step_index,
            g.meta,
            g.robot,
            g.helper.as_ref().map(|h| h.as_str()).unwrap_or("-"),
            g.brick,
            format!("{}", g.target),
            ms_to_secs(g.expected_duration_ms),
        );
    }

    if let Some(out) = &args.out {
        write_output(out, &plan.to_json())?;
        println!("wrote {}", out.display());
    }
    Ok(())
}
