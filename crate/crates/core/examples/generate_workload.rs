//! Generates a seeded synthetic workload and writes it as workload JSON.
//!
//! Usage: cargo run --example generate_workload [-- <output.json>]

use powersched::workload::{generate_workload, GenSpec};

fn main() {
    let spec = GenSpec {
        num_jobs: 500,
        arrival_rate: 1.0 / 900.0,
        mean_runtime: 1800.0,
        runtime_cv: 1.5,
        min_res: 1,
        max_res: 64,
        reqtime_factor: 1.5,
        seed: 1,
    };
    let w = generate_workload(&spec).unwrap();
    let last = w.jobs.last().map(|j| j.subtime).unwrap_or_default();
    let mean_rt = w.jobs.iter().map(|j| j.runtime.as_secs_f64()).sum::<f64>() / w.len() as f64;
    let mean_res = w.jobs.iter().map(|j| j.res as f64).sum::<f64>() / w.len() as f64;
    println!("{} jobs over {:.1} h, mean runtime {mean_rt:.0} s, mean size {mean_res:.1} nodes", w.len(), last.as_secs_f64() / 3600.0);
    match std::env::args().nth(1) {
        Some(path) => {
            std::fs::write(&path, w.to_json()).unwrap();
            println!("written to {path}");
        }
        None => println!("pass an output path to write the JSON"),
    }
}
