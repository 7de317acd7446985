//! Run manifests: a JSON bundle of inputs for execute/batch invocations.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use serde::{Deserialize, Serialize};

/// Paths and flags for one run; every referenced path must resolve at
/// invocation time. Command-line flags override manifest entries.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunManifest {
    #[serde(default)]
    pub world: Option<PathBuf>,
    #[serde(default)]
    pub task: Option<PathBuf>,
    #[serde(default)]
    pub plan: Option<PathBuf>,
    #[serde(default)]
    pub log_store: Option<PathBuf>,
    #[serde(default)]
    pub exec_config: Option<PathBuf>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub mode: Option<String>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<RunManifest> {
        let s = std::fs::read_to_string(path)
            .with_context(|| format!("reading manifest {}", path.display()))?;
        let m: RunManifest =
            serde_json::from_str(&s).with_context(|| format!("parsing manifest {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let m = m.resolved_against(base);
        m.validate()?;
        Ok(m)
    }

    fn resolved_against(mut self, base: &Path) -> RunManifest {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&path);
                }
            }
        };
        fix(&mut self.world);
        fix(&mut self.task);
        fix(&mut self.plan);
        fix(&mut self.log_store);
        fix(&mut self.exec_config);
        self
    }

    /// Every referenced input path must exist (log stores may be created).
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("world", &self.world),
            ("task", &self.task),
            ("plan", &self.plan),
            ("exec_config", &self.exec_config),
        ] {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(anyhow!("manifest {name} path {} does not exist", p.display()));
                }
            }
        }
        Ok(())
    }
}
