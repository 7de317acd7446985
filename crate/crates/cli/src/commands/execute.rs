//! `skillgraph execute`: run one plan, write the trace and skill logs.

use std::path::PathBuf;

use anyhow::anyhow;
use clap::Parser;
use skillgraph_core::datalog::{record_into, LogStore};
use skillgraph_core::exec::{
    execute, ExecError, ExecMode, ExecutionConfig, ExecutionTrace, FailureModel, NoiseModel,
    RecoveryPolicy,
};
use skillgraph_core::ids::{ms_to_secs, secs_to_ms};
use skillgraph_core::planner::Plan;
use skillgraph_core::skill::types::Verb;

use crate::commands::{load_library, load_world, write_output};
use crate::manifest::RunManifest;
use crate::{CliError, CliResult};

#[derive(Parser)]
pub struct Args {
    /// Manifest bundling the run inputs; explicit flags override it.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub plan: Option<PathBuf>,
    #[arg(long)]
    pub world: Option<PathBuf>,
    #[arg(long)]
    pub library: Option<PathBuf>,
    /// Execution configuration file (JSON `ExecutionConfig`).
    #[arg(long)]
    pub exec_config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// sequential | async
    #[arg(long)]
    pub mode: Option<String>,
    /// Enable inline post-condition checking.
    #[arg(long)]
    pub checks: bool,
    /// Operator recovery success probability (enables operator recovery).
    #[arg(long)]
    pub recovery_p: Option<f64>,
    /// Operator recovery time cost, seconds.
    #[arg(long, default_value_t = 30.0)]
    pub recovery_cost_s: f64,
    /// Flat failure probability per verb, e.g. `pick=0.109`. Repeatable.
    #[arg(long = "fail")]
    pub fail: Vec<String>,
    /// Store-pose noise: bias x,y in millimeters.
    #[arg(long)]
    pub noise_bias_mm: Option<String>,
    /// Store-pose noise sigma in millimeters.
    #[arg(long)]
    pub noise_sigma_mm: Option<f64>,
    /// Where to write the trace (JSON lines).
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
    /// Log store directory to append this run to.
    #[arg(long)]
    pub log_dir: Option<PathBuf>,
}

/// Merge manifest, config file, and flags into a concrete configuration.
pub fn build_config(
    manifest: &RunManifest,
    exec_config: &Option<PathBuf>,
    seed: Option<u64>,
    mode: &Option<String>,
    checks: bool,
    recovery_p: Option<f64>,
    recovery_cost_s: f64,
    fail: &[String],
    noise_bias_mm: &Option<String>,
    noise_sigma_mm: Option<f64>,
) -> Result<ExecutionConfig, CliError> {
    let cfg_path = exec_config.clone().or_else(|| manifest.exec_config.clone());
    let mut cfg = match cfg_path {
        Some(p) => {
            let s = std::fs::read_to_string(&p)
                .map_err(|e| CliError::schema(anyhow!("{}: {e}", p.display())))?;
            serde_json::from_str::<ExecutionConfig>(&s)
                .map_err(|e| CliError::schema(anyhow!("{}: {e}", p.display())))?
        }
        None => ExecutionConfig::new(0),
    };
    if let Some(seed) = seed.or(manifest.seed) {
        cfg.seed = seed;
    }
    let mode = mode.clone().or_else(|| manifest.mode.clone());
    if let Some(mode) = mode {
        cfg.mode = match mode.as_str() {
            "sequential" | "seq" => ExecMode::Sequential,
            "async" => ExecMode::Async,
            other => return Err(CliError::schema(anyhow!("unknown mode {other:?}"))),
        };
    }
    if checks {
        cfg.checks_enabled = true;
    }
    if let Some(p) = recovery_p {
        cfg.recovery = RecoveryPolicy::Operator {
            success_probability: p,
            time_cost_ms: secs_to_ms(recovery_cost_s),
        };
    }
    if !fail.is_empty() {
        let mut model = FailureModel::none();
        for spec in fail {
            let (verb, p) = spec
                .split_once('=')
                .ok_or_else(|| CliError::schema(anyhow!("--fail expects verb=prob, got {spec:?}")))?;
            let p: f64 = p
                .parse()
                .map_err(|_| CliError::schema(anyhow!("bad probability in {spec:?}")))?;
            let verb: Verb = verb.parse().expect("verb strings are total");
            model.base.push(skillgraph_core::exec::BaseFailure {
                verb,
                robot: None,
                brick: None,
                probability: p,
            });
        }
        cfg.failures = model;
    }
    if noise_bias_mm.is_some() || noise_sigma_mm.is_some() {
        let bias = match noise_bias_mm {
            Some(s) => {
                let (x, y) = s
                    .split_once(',')
                    .ok_or_else(|| CliError::schema(anyhow!("--noise-bias-mm expects x,y")))?;
                (
                    x.trim().parse().map_err(|_| CliError::schema(anyhow!("bad bias x")))?,
                    y.trim().parse().map_err(|_| CliError::schema(anyhow!("bad bias y")))?,
                )
            }
            None => (0.0, 0.0),
        };
        cfg.noise = Some(NoiseModel {
            bias_mm: bias,
            sigma_mm: noise_sigma_mm.unwrap_or(0.0),
        });
    }
    Ok(cfg)
}

pub fn map_exec_error(e: ExecError) -> CliError {
    match e {
        ExecError::EngineInvariant(_) => CliError::engine(anyhow!(e)),
        ExecError::Plan(p) => crate::commands::map_plan_error(p),
        other => CliError::schema(anyhow!(other)),
    }
}

pub fn print_outcome(trace: &ExecutionTrace) {
    println!(
        "run {}: {} | survival {}/{} | makespan {:.3}s | {} events, {} attempts",
        trace.run_id,
        if trace.summary.success { "success" } else { "failed" },
        trace.summary.survival_length,
        trace.summary.design_size,
        ms_to_secs(trace.summary.wall_makespan_ms),
        trace.events.len(),
        trace.attempts.len(),
    );
}

pub fn run(args: Args) -> CliResult {
    let manifest = match &args.manifest {
        Some(p) => RunManifest::load(p).map_err(CliError::schema)?,
        None => RunManifest::default(),
    };
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
    let cfg = build_config(
        &manifest,
        &args.exec_config,
        args.seed,
        &args.mode,
        args.checks,
        args.recovery_p,
        args.recovery_cost_s,
        &args.fail,
        &args.noise_bias_mm,
        args.noise_sigma_mm,
    )?;

    let trace = execute(&plan, &lib, &z0, &cfg).map_err(map_exec_error)?;
    print_outcome(&trace);

    if let Some(out) = &args.trace_out {
        write_output(out, &trace.to_jsonl())?;
        println!("wrote {}", out.display());
    }
    let log_dir = args.log_dir.clone().or_else(|| manifest.log_store.clone());
    if let Some(dir) = log_dir {
        let mut store = if dir.join("meta.jsonl").exists() {
            LogStore::read_dir(&dir).map_err(|e| CliError::schema(anyhow!(e)))?
        } else {
            LogStore::new()
        };
        record_into(&mut store, &trace, &plan).map_err(|e| CliError::schema(anyhow!(e)))?;
        store
            .write_dir(&dir)
            .map_err(|e| CliError::schema(anyhow!(e)))?;
        println!("logged run into {}", dir.display());
    }
    Ok(())
}
