//! End-to-end checks of the command-line surface and its exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_skillgraph"))
}

fn data(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn path_str(p: &Path) -> String {
    p.to_string_lossy().to_string()
}

#[test]
fn plan_golden_faucet_succeeds_with_14_steps() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("plan.json");
    let output = run(&[
        "plan",
        "--task",
        &path_str(&data("designs/faucet.json")),
        "--world",
        &path_str(&data("worlds/bench.json")),
        "--out",
        &path_str(&out),
    ]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let plan: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(plan["grounded"].as_array().unwrap().len(), 14);
}

#[test]
fn deficient_inventory_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    // a task demanding more 2x4 bricks than the bench holds
    let mut steps = Vec::new();
    for i in 0..40 {
        steps.push(serde_json::json!({
            "index": i + 1,
            "brick_type": "2x4",
            "target": {"abs": [2 + 5 * (i % 8), 2 + 4 * (i / 8), 0]}
        }));
    }
    let task = serde_json::json!({"design_name": "too_big", "steps": steps});
    let task_path = dir.path().join("task.json");
    std::fs::write(&task_path, task.to_string()).unwrap();
    let output = run(&[
        "plan",
        "--task",
        &path_str(&task_path),
        "--world",
        &path_str(&data("worlds/bench.json")),
    ]);
    assert_eq!(output.status.code(), Some(3));
}

#[test]
fn malformed_task_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let task_path = dir.path().join("task.json");
    std::fs::write(&task_path, "{not json").unwrap();
    let output = run(&[
        "plan",
        "--task",
        &path_str(&task_path),
        "--world",
        &path_str(&data("worlds/bench.json")),
    ]);
    assert_eq!(output.status.code(), Some(2));

    // schema-level violation: unknown relation
    let bad = serde_json::json!({"design_name": "x", "steps": [
        {"index": 1, "brick_type": "2x4",
         "target": {"rel": {"anchor": 1, "relation": "ShiftedDiagonal"}}}
    ]});
    std::fs::write(&task_path, bad.to_string()).unwrap();
    let output = run(&[
        "plan",
        "--task",
        &path_str(&task_path),
        "--world",
        &path_str(&data("worlds/bench.json")),
    ]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn tiny_budget_exits_4() {
    let output = run(&[
        "plan",
        "--task",
        &path_str(&data("designs/faucet.json")),
        "--world",
        &path_str(&data("worlds/bench.json")),
        "--max-expansions",
        "1",
    ]);
    assert_eq!(output.status.code(), Some(4));
}

fn plan_faucet(dir: &Path) -> PathBuf {
    let out = dir.join("plan.json");
    let output = run(&[
        "plan",
        "--task",
        &path_str(&data("designs/faucet.json")),
        "--world",
        &path_str(&data("worlds/bench.json")),
        "--out",
        &path_str(&out),
    ]);
    assert!(output.status.success());
    out
}

#[test]
fn batch_requires_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let plan = plan_faucet(dir.path());
    let output = run(&[
        "batch",
        "--plan",
        &path_str(&plan),
        "--world",
        &path_str(&data("worlds/bench.json")),
        "--trials",
        "3",
    ]);
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("--seed"));
}

#[test]
fn batch_summaries_are_reproducible_for_equal_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let plan = plan_faucet(dir.path());
    let mut outs = Vec::new();
    for name in ["a.json", "b.json"] {
        let out = dir.path().join(name);
        let output = run(&[
            "batch",
            "--plan",
            &path_str(&plan),
            "--world",
            &path_str(&data("worlds/bench.json")),
            "--seed",
            "9",
            "--trials",
            "20",
            "--fail",
            "pick=0.2",
            "--jobs",
            "4",
            "--summary-out",
            &path_str(&out),
        ]);
        assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
        outs.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(outs[0], outs[1]);
}

#[test]
fn execute_writes_identical_traces_for_equal_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let plan = plan_faucet(dir.path());
    let mut traces = Vec::new();
    for name in ["t1.jsonl", "t2.jsonl"] {
        let out = dir.path().join(name);
        let output = run(&[
            "execute",
            "--plan",
            &path_str(&plan),
            "--world",
            &path_str(&data("worlds/bench.json")),
            "--seed",
            "5",
            "--fail",
            "pick=0.3",
            "--checks",
            "--recovery-p",
            "1.0",
            "--trace-out",
            &path_str(&out),
        ]);
        assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
        traces.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(traces[0], traces[1]);
}

#[test]
fn execute_supports_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let plan = plan_faucet(dir.path());
    let manifest = dir.path().join("run.json");
    std::fs::write(
        &manifest,
        serde_json::json!({
            "plan": plan,
            "world": data("worlds/bench.json"),
            "seed": 11,
        })
        .to_string(),
    )
    .unwrap();
    let output = run(&["execute", "--manifest", &path_str(&manifest)]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));

    // a manifest pointing at a missing file is a schema error
    std::fs::write(
        &manifest,
        serde_json::json!({"plan": "/nonexistent/plan.json", "world": data("worlds/bench.json")})
            .to_string(),
    )
    .unwrap();
    let output = run(&["execute", "--manifest", &path_str(&manifest)]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn render_is_deterministic_and_handles_empty_traces() {
    let dir = tempfile::tempdir().unwrap();
    let plan = plan_faucet(dir.path());

    let svg1 = dir.path().join("g1.svg");
    let svg2 = dir.path().join("g2.svg");
    for out in [&svg1, &svg2] {
        let output = run(&[
            "render",
            "--plan",
            &path_str(&plan),
            "--world",
            &path_str(&data("worlds/bench.json")),
            "--format",
            "svg",
            "--out",
            &path_str(out),
        ]);
        assert!(output.status.success());
    }
    assert_eq!(std::fs::read(&svg1).unwrap(), std::fs::read(&svg2).unwrap());

    // an empty plan produces an empty trace; rendering it still exits 0
    let empty_plan = dir.path().join("empty_plan.json");
    std::fs::write(
        &empty_plan,
        serde_json::json!({"design_name": "empty", "grounded": [], "total_cost_ms": 0}).to_string(),
    )
    .unwrap();
    let trace = dir.path().join("empty_trace.jsonl");
    let output = run(&[
        "execute",
        "--plan",
        &path_str(&empty_plan),
        "--world",
        &path_str(&data("worlds/bench.json")),
        "--seed",
        "1",
        "--trace-out",
        &path_str(&trace),
    ]);
    assert!(output.status.success());
    let output = run(&["render", "--trace", &path_str(&trace)]);
    assert!(output.status.success());
    let text = String::from_utf8_lossy(&output.stdout);
    assert!(text.contains("r1"), "empty lanes still listed: {text}");

    // bad input exits 2
    let junk = dir.path().join("junk.jsonl");
    std::fs::write(&junk, "not a trace").unwrap();
    let output = run(&["render", "--trace", &path_str(&junk)]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn adapt_pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let plan = plan_faucet(dir.path());
    let logs = dir.path().join("logs");

    // collect a few seeded runs with failures
    for seed in ["1", "2", "3"] {
        let output = run(&[
            "execute",
            "--plan",
            &path_str(&plan),
            "--world",
            &path_str(&data("worlds/bench.json")),
            "--seed",
            seed,
            "--fail",
            "pick=0.4",
            "--checks",
            "--recovery-p",
            "1.0",
            "--log-dir",
            &path_str(&logs),
        ]);
        assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    }

    let risk = dir.path().join("risk.json");
    let output = run(&[
        "adapt",
        "estimate",
        "--store",
        &path_str(&logs),
        "--out",
        &path_str(&risk),
    ]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));

    let evals = dir.path().join("evals.json");
    let output = run(&[
        "adapt",
        "update-evals",
        "--risk",
        &path_str(&risk),
        "--out",
        &path_str(&evals),
    ]);
    assert!(output.status.success());

    let checked = dir.path().join("checked.json");
    let output = run(&[
        "adapt",
        "insert-checks",
        "--plan",
        &path_str(&plan),
        "--risk",
        &path_str(&risk),
        "--threshold",
        "0.0",
        "--world",
        &path_str(&data("worlds/bench.json")),
        "--out",
        &path_str(&checked),
    ]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let plan_doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&checked).unwrap()).unwrap();
    let with_checks = plan_doc["grounded"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|g| g.get("checks_after").is_some())
        .count();
    assert!(with_checks > 0, "threshold 0 must insert checks");

    let bias = dir.path().join("bias.json");
    let output = run(&[
        "adapt",
        "bias",
        "--store",
        &path_str(&logs),
        "--out",
        &path_str(&bias),
    ]);
    assert!(output.status.success());

    // bandit: register two arms, select, update
    let bandit = dir.path().join("bandit.json");
    let output = run(&[
        "adapt",
        "bandit-select",
        "--state",
        &path_str(&bandit),
        "--context",
        "transit:shared",
        "--arms",
        "rrt_connect,bit_star",
    ]);
    assert!(output.status.success());
    let chosen = String::from_utf8_lossy(&output.stdout).trim().to_string();
    assert!(["rrt_connect", "bit_star"].contains(&chosen.as_str()));
    let output = run(&[
        "adapt",
        "bandit-update",
        "--state",
        &path_str(&bandit),
        "--context",
        "transit:shared",
        "--arm",
        &chosen,
        "--reward",
        "0.8",
    ]);
    assert!(output.status.success());
}
