//! Keeps the shipped data files in sync with the built-in generators.
//! Regenerate with `BLESS=1 cargo test -p skillgraph-core --test golden_files`.

use std::path::PathBuf;

use skillgraph_core::taskspec::{designs, parse_task, serialize_task, TaskSpec};
use skillgraph_core::world::WorldConfig;

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn check_or_bless(path: PathBuf, content: &str) {
    if std::env::var("BLESS").is_ok() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, content).unwrap();
        return;
    }
    let on_disk = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("{} unreadable ({e}); run with BLESS=1", path.display()));
    assert_eq!(on_disk, content, "{} is stale; run with BLESS=1", path.display());
}

fn check_task(name: &str, task: TaskSpec) {
    let path = data_dir().join("designs").join(format!("{name}.json"));
    check_or_bless(path.clone(), &serialize_task(&task));
    if std::env::var("BLESS").is_err() {
        let parsed = parse_task(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(parsed, task);
    }
}

#[test]
fn design_files_match_generators() {
    check_task("faucet", designs::faucet());
    check_task("fish", designs::fish());
    check_task("vessel", designs::vessel());
    check_task("guitar", designs::guitar());
    check_task("disjoint", designs::disjoint_task());
}

#[test]
fn world_files_match_generators() {
    check_or_bless(
        data_dir().join("worlds/bench.json"),
        &designs::bench_world().to_json(),
    );
    check_or_bless(
        data_dir().join("worlds/disjoint.json"),
        &designs::disjoint_world().to_json(),
    );
    if std::env::var("BLESS").is_err() {
        let cfg = WorldConfig::from_file(&data_dir().join("worlds/bench.json")).unwrap();
        assert!(cfg.build().is_ok());
    }
}
