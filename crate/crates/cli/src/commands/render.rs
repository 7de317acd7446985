//! `skillgraph render`: Gantt charts from a plan's schedule or a trace.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::anyhow;
use clap::Parser;
use skillgraph_core::exec::ExecutionTrace;
use skillgraph_core::planner::Plan;
use skillgraph_core::tpg::gantt::{render_svg, render_text, Bar, GanttChart};
use skillgraph_core::tpg::build_tpg;

use crate::commands::{load_library, load_world, write_output};
use crate::{CliError, CliResult};

#[derive(Parser)]
pub struct Args {
    /// Render the earliest-start schedule of this plan (needs --world).
    #[arg(long)]
    pub plan: Option<PathBuf>,
    #[arg(long)]
    pub world: Option<PathBuf>,
    #[arg(long)]
    pub library: Option<PathBuf>,
    /// Render actual attempt timing from a trace file.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// text | svg
    #[arg(long, default_value = "text")]
    pub format: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also export the temporal plan graph (node/edge JSON).
    #[arg(long)]
    pub export_tpg: Option<PathBuf>,
}

fn chart_from_trace(trace: &ExecutionTrace) -> GanttChart {
    let mut lanes: BTreeMap<_, Vec<Bar>> = BTreeMap::new();
    for robot in trace.initial_state.robots.keys() {
        lanes.entry(robot.clone()).or_default();
    }
    for a in &trace.attempts {
        if let Some(robot) = &a.robot {
            lanes.entry(robot.clone()).or_default().push(Bar {
                label: a.skill.clone(),
                start_ms: a.start_ms,
                end_ms: a.end_ms,
            });
        }
    }
    for bars in lanes.values_mut() {
        bars.sort_by_key(|b| (b.start_ms, b.end_ms, b.label.clone()));
    }
    GanttChart {
        title: format!("trace {}", trace.run_id),
        lanes,
    }
}

pub fn run(args: Args) -> CliResult {
    let chart = match (&args.plan, &args.trace) {
        (Some(plan_path), None) => {
            let world_path = args
                .world
                .clone()
                .ok_or_else(|| CliError::schema(anyhow!("--plan rendering needs --world")))?;
            let plan = Plan::from_file(plan_path)
                .map_err(|e| CliError::schema(anyhow!("plan {}: {e}", plan_path.display())))?;
            let z0 = load_world(&world_path)?;
            let lib = load_library(&args.library)?;
            let tpg = build_tpg(&plan, &lib, &z0)
                .map_err(|e| CliError::schema(anyhow!(e)))?;
            if let Some(out) = &args.export_tpg {
                write_output(out, &tpg.to_json())?;
            }
            GanttChart::from_tpg(&format!("plan {}", plan.design_name), &tpg)
        }
        (None, Some(trace_path)) => {
            let s = std::fs::read_to_string(trace_path)
                .map_err(|e| CliError::schema(anyhow!("{}: {e}", trace_path.display())))?;
            let trace = ExecutionTrace::from_jsonl(&s)
                .map_err(|e| CliError::schema(anyhow!("{}: {e}", trace_path.display())))?;
            if args.export_tpg.is_some() {
                return Err(CliError::schema(anyhow!(
                    "--export-tpg applies to --plan rendering"
                )));
            }
            chart_from_trace(&trace)
        }
        _ => {
            return Err(CliError::schema(anyhow!(
                "render needs exactly one of --plan or --trace"
            )))
        }
    };

    let rendered = match args.format.as_str() {
        "text" => render_text(&chart),
        "svg" => render_svg(&chart),
        other => return Err(CliError::schema(anyhow!("unknown format {other:?}"))),
    };
    match &args.out {
        Some(out) => {
            write_output(out, &rendered)?;
            println!("wrote {}", out.display());
        }
        None => print!("{rendered}"),
    }
    Ok(())
}
