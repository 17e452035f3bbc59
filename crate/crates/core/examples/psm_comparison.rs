//! Idle shutdown against always-on nodes on a sparse and a saturated
//! workload.

use powersched::engine::{run_simulation, EngineConfig};
use powersched::platform::{NodeSpec, Platform};
use powersched::sched::{PolicyConfig, Scheduler};
use powersched::workload::{generate_workload, GenSpec};

fn spec(arrival_rate: f64, min_res: u32) -> GenSpec {
    GenSpec {
        num_jobs: 60,
        arrival_rate,
        mean_runtime: 1200.0,
        runtime_cv: 1.0,
        min_res,
        max_res: 16,
        reqtime_factor: 1.5,
        seed: 4,
    }
}

fn main() {
    for (label, s) in [("sparse", spec(1.0 / 20_000.0, 1)), ("saturated", spec(1000.0, 16))] {
        let w = generate_workload(&s).unwrap();
        println!("{label}:");
        for alg in ["easy_psus", "easy_psas_ao", "fcfs_psus", "fcfs_psas_ao"] {
            let platform = Platform::homogeneous(16, &NodeSpec::reference());
            let mut policy = Scheduler::new(PolicyConfig::new(alg.parse().unwrap()));
            let r = run_simulation(EngineConfig::default(), platform, &w, &mut policy).unwrap();
            let s = &r.summary;
            println!(
                "  {alg:<13} total {:>8.1} MJ  wasted {:>8.1} MJ  mean wait {:>6.0} s",
                s.total_energy.as_joules_f64() / 1e6,
                s.wasted_energy.as_joules_f64() / 1e6,
                s.mean_waiting / 1e6
            );
        }
    }
}
