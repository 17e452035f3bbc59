//! Runs a generated workload under idle shutdown and writes the four
//! result files, including the Gantt chart.
//!
//! Usage: cargo run --example gantt_chart [-- <output dir>]

use std::path::PathBuf;

use powersched::engine::{run_simulation, EngineConfig};
use powersched::platform::{NodeSpec, Platform};
use powersched::report::{write_bundle, GanttOptions, GANTT_SVG};
use powersched::sched::{PolicyConfig, Scheduler};
use powersched::workload::{generate_workload, GenSpec};
use serde_json::json;

fn main() {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("powersched-gantt"));
    let spec = GenSpec {
        num_jobs: 80,
        arrival_rate: 1.0 / 1500.0,
        mean_runtime: 2400.0,
        runtime_cv: 1.0,
        min_res: 1,
        max_res: 16,
        reqtime_factor: 1.3,
        seed: 9,
    };
    let w = generate_workload(&spec).unwrap();
    let platform = Platform::homogeneous(16, &NodeSpec::reference());
    let mut policy = Scheduler::new(PolicyConfig::new("easy_psas_ao".parse().unwrap()));
    let r = run_simulation(EngineConfig::default(), platform, &w, &mut policy).unwrap();
    let opts = GanttOptions { pixels_per_hour: 40.0, lane_height: 18.0 };
    write_bundle(&out, &r, &json!({"algorithm": "easy_psas_ao", "seed": spec.seed}), &opts).unwrap();
    println!("{} jobs on 16 nodes until {}; chart at {}", r.job_records.len(), r.summary.end_time, out.join(GANTT_SVG).display());
}
