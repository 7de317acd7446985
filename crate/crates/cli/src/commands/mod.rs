//! Subcommand implementations and shared input loading.

pub mod adapt;
pub mod analyze;
pub mod batch;
pub mod execute;
pub mod plan;
pub mod render;

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use skillgraph_core::planner::PlanError;
use skillgraph_core::skill::library::{builtin, SkillLibrary};
use skillgraph_core::taskspec::{parse_task_file, TaskSpec};
use skillgraph_core::world::{WorldConfig, WorldState};

use crate::CliError;

pub fn load_world(path: &Path) -> Result<WorldState, CliError> {
    WorldConfig::from_file(path)
        .and_then(|cfg| cfg.build())
        .map_err(|e| CliError::schema(anyhow!("world config {}: {e}", path.display())))
}

pub fn load_library(path: &Option<PathBuf>) -> Result<SkillLibrary, CliError> {
    match path {
        Some(p) => SkillLibrary::from_file(p)
            .map_err(|e| CliError::schema(anyhow!("skill library {}: {e}", p.display()))),
        None => Ok(builtin()),
    }
}

pub fn load_task(path: &Path) -> Result<TaskSpec, CliError> {
    parse_task_file(path).map_err(|e| CliError::schema(anyhow!("task {}: {e}", path.display())))
}

pub fn map_plan_error(e: PlanError) -> CliError {
    match e {
        PlanError::NoFeasiblePlan { .. } => CliError::no_plan(anyhow!(e)),
        PlanError::BudgetExhausted { .. } => CliError::budget(anyhow!(e)),
        other => CliError::schema(anyhow!(other)),
    }
}

pub fn write_output(path: &Path, content: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))
                .map_err(CliError::schema)?;
        }
    }
    std::fs::write(path, content)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(CliError::schema)
}
