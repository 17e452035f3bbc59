//! Two jobs finish at the same instant while a 2-node job waits ahead of a
//! 1-node job. Processing both finishes as one batch lets the 2-node job
//! start right away; one-at-a-time processing backfills the small job into
//! the transient gap and delays the big one.

use powersched::engine::{run_simulation, EngineConfig, ResultsBundle};
use powersched::platform::{NodeSpec, Platform};
use powersched::sched::{PolicyConfig, Scheduler};
use powersched::workload::{Job, Workload};

fn run(split: bool) -> ResultsBundle {
    let jobs = vec![
        Job::new(1, 1, 0, 10, 10),
        Job::new(2, 1, 0, 20, 10),
        Job::new(3, 2, 1, 5, 5),
        Job::new(4, 1, 1, 10, 10),
    ];
    let workload = Workload::new(2, jobs).unwrap();
    let platform = Platform::homogeneous(2, &NodeSpec::reference());
    let mut policy = Scheduler::new(PolicyConfig::new("easy_psus".parse().unwrap()));
    let cfg = EngineConfig { split_simultaneous_events: split, ..EngineConfig::default() };
    run_simulation(cfg, platform, &workload, &mut policy).unwrap()
}

fn main() {
    for (label, split) in [("batched", false), ("one event at a time", true)] {
        let r = run(split);
        println!("{label}: {} policy invocations, mean wait {:.2} s", r.policy_invocations, r.summary.mean_waiting / 1e6);
        for j in &r.job_records {
            println!("  job {} start {} on {:?}", j.job_id, j.start_time, j.nodes);
        }
    }
}
