//! `skillgraph batch`: seeded Monte Carlo execution batches.

use std::path::PathBuf;

use anyhow::anyhow;
use clap::Parser;
use rayon::prelude::*;
use skillgraph_core::exec::{derive_seed, execute, BatchSummary, TrialRow};
use skillgraph_core::ids::ms_to_secs;
use skillgraph_core::planner::Plan;

use crate::commands::{load_library, load_world, write_output};
use crate::commands::execute::{build_config, map_exec_error};
use crate::manifest::RunManifest;
use crate::{CliError, CliResult};

#[derive(Parser)]
pub struct Args {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub plan: Option<PathBuf>,
    #[arg(long)]
    pub world: Option<PathBuf>,
    #[arg(long)]
    pub library: Option<PathBuf>,
    #[arg(long)]
    pub exec_config: Option<PathBuf>,
    /// Master seed; required so batches are reproducible.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of trials.
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub checks: bool,
    #[arg(long)]
    pub recovery_p: Option<f64>,
    #[arg(long, default_value_t = 30.0)]
    pub recovery_cost_s: f64,
    #[arg(long = "fail")]
    pub fail: Vec<String>,
    #[arg(long)]
    pub noise_bias_mm: Option<String>,
    #[arg(long)]
    pub noise_sigma_mm: Option<f64>,
    /// Worker threads for trial fan-out (default: rayon's choice).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Where to write the batch summary (JSON).
    #[arg(long)]
    pub summary_out: Option<PathBuf>,
}

pub fn run(args: Args) -> CliResult {
    let manifest = match &args.manifest {
        Some(p) => RunManifest::load(p).map_err(CliError::schema)?,
        None => RunManifest::default(),
    };
    // reproducibility contract: batches must be explicitly seeded
    let master_seed = args
        .seed
        .or(manifest.seed)
        .ok_or_else(|| CliError::schema(anyhow!("batch mode requires --seed")))?;
    let plan_path = args
        .plan
        .clone()
        .or_else(|| manifest.plan.clone())
        .ok_or_else(|| CliError::schema(anyhow!("--plan (or a manifest plan) is required")))?;
    let world_path = args
        .world
        .clone()
        .or_else(|| manifest.world.clone())
        .ok_or_else(|| CliError::schema(anyhow!("--world (or a manifest world) is required")))?;
    let plan = Plan::from_file(&plan_path)
        .map_err(|e| CliError::schema(anyhow!("plan {}: {e}", plan_path.display())))?;
    let z0 = load_world(&world_path)?;
    let lib = load_library(&args.library)?;
    let mut base_cfg = build_config(
        &manifest,
        &args.exec_config,
        Some(master_seed),
        &args.mode,
        args.checks,
        args.recovery_p,
        args.recovery_cost_s,
        &args.fail,
        &args.noise_bias_mm,
        args.noise_sigma_mm,
    )?;
    base_cfg.seed = master_seed;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::schema(anyhow!(e)))?;
    let rows: Result<Vec<TrialRow>, CliError> = pool.install(|| {
        (0..args.trials)
            .into_par_iter()
            .map(|trial| {
                let mut cfg = base_cfg.clone();
                cfg.seed = derive_seed(master_seed, trial as u64);
                let trace = execute(&plan, &lib, &z0, &cfg).map_err(map_exec_error)?;
                Ok(TrialRow {
                    trial,
                    seed: cfg.seed,
                    success: trace.summary.success,
                    survival_length: trace.summary.survival_length,
                    wall_makespan_ms: trace.summary.wall_makespan_ms,
                })
            })
            .collect()
    });
    let summary = BatchSummary::from_rows(rows?);

    println!(
        "batch {}: {}/{} successes ({:.3}), survival mean {:.2} (min {} max {}), makespan mean {:.3}s",
        plan.design_name,
        summary.successes,
        summary.trials,
        summary.success_rate,
        summary.mean_survival,
        summary.min_survival,
        summary.max_survival,
        ms_to_secs(summary.mean_makespan_ms.round() as u64),
    );
    if let Some(out) = &args.summary_out {
        write_output(out, &summary.to_json())?;
        println!("wrote {}", out.display());
    }
    Ok(())
}
