use skillgraph_core::planner::{plan_with_stats, PlanOptions};
use skillgraph_core::skill::library::{builtin, EvaluatorSet};
use skillgraph_core::taskspec::designs;

fn main() {
    let z = designs::bench_world().build().unwrap();
    let lib = builtin();
    let evals = EvaluatorSet::from_library(&lib);
    for task in designs::golden_designs() {
        let t0 = std::time::Instant::now();
        match plan_with_stats(&task, &lib, &z, &evals, &PlanOptions::default()) {
            Ok((p, stats)) => println!(
                "{}: {} steps cost {:.1}s expanded {} generated {} in {:?}",
                task.design_name,
                p.grounded.len(),
                p.total_cost_ms as f64 / 1000.0,
                stats.expanded,
                stats.generated,
                t0.elapsed()
            ),
            Err(e) => println!("{}: FAILED {e}", task.design_name),
        }
    }
}
