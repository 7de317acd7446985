//! `skillgraph analyze`: summarize a log store.

use std::path::PathBuf;

use anyhow::anyhow;
use clap::Parser;
use skillgraph_core::datalog::{summarize, LogStore, SummaryFilter};
use skillgraph_core::ids::ms_to_secs;

use crate::commands::write_output;
use crate::{CliError, CliResult};

#[derive(Parser)]
pub struct Args {
    /// Log store directory.
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub run: Option<String>,
    #[arg(long)]
    pub verb: Option<String>,
    #[arg(long)]
    pub robot: Option<String>,
    /// Brick class filter, e.g. 2x4.
    #[arg(long)]
    pub class: Option<String>,
    /// Where to write the summary JSON.
    #[arg(long)]
    pub json_out: Option<PathBuf>,
}

pub fn run(args: Args) -> CliResult {
    let store = LogStore::read_dir(&args.store)
        .map_err(|e| CliError::schema(anyhow!("store {}: {e}", args.store.display())))?;
    let filter = SummaryFilter {
        run: args.run.map(|r| r.as_str().into()),
        verb: args.verb.map(|v| v.parse().expect("verb strings are total")),
        robot: args.robot.map(|r| r.as_str().into()),
        object_class: match args.class {
            Some(c) => Some(
                c.try_into()
                    .map_err(|e: String| CliError::schema(anyhow!(e)))?,
            ),
            None => None,
        },
    };
    let summary = summarize(&store, &filter);
    println!(
        "{} records in {} runs match",
        summary.total_records,
        store.runs().count()
    );
    println!(
        "{:<12} {:<4} {:<6} {:>6} {:>6} {:>6} {:>8} {:>8} {:>8}",
        "verb", "arm", "class", "count", "ok", "rate", "p50(s)", "p90(s)", "p95(s)"
    );
    for g in &summary.groups {
        println!(
            "{:<12} {:<4} {:<6} {:>6} {:>6} {:>6.3} {:>8.3} {:>8.3} {:>8.3}",
            g.verb.to_string(),
            g.robot.as_ref().map(|r| r.as_str()).unwrap_or("-"),
            g.object_class.map(|c| c.to_string()).unwrap_or_else(|| "-".into()),
            g.count,
            g.successes,
            g.success_rate,
            ms_to_secs(g.duration_p50_ms),
            ms_to_secs(g.duration_p90_ms),
            ms_to_secs(g.duration_p95_ms),
        );
    }
    if let Some(out) = &args.json_out {
        let mut s = serde_json::to_string_pretty(&summary)
            .map_err(|e| CliError::schema(anyhow!(e)))?;
        s.push('\n');
        write_output(out, &s)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}
