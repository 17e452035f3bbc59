//! FCFS against EASY on three nodes: job 2 needs every node, so EASY
//! reserves for it and backfills job 3, which ends before the
//! reservation. Job 4 is too long and waits under both.

use powersched::engine::{run_simulation, Decision, EngineConfig};
use powersched::platform::{NodeSpec, Platform};
use powersched::sched::{PolicyConfig, Scheduler};
use powersched::workload::{Job, Workload};

fn main() {
    let jobs = vec![
        Job::new(1, 2, 0, 100, 100),
        Job::new(2, 3, 10, 50, 50),
        Job::new(3, 1, 20, 60, 60),
        Job::new(4, 1, 30, 500, 500),
        Job::new(5, 1, 40, 30, 30),
    ];
    let workload = Workload::new(3, jobs).unwrap();
    for alg in ["fcfs_psus", "easy_psus"] {
        let platform = Platform::homogeneous(3, &NodeSpec::reference());
        let mut policy = Scheduler::new(PolicyConfig::new(alg.parse().unwrap()));
        let cfg = EngineConfig { record_decisions: true, ..EngineConfig::default() };
        let r = run_simulation(cfg, platform, &workload, &mut policy).unwrap();
        println!("{alg}: makespan {}, mean wait {:.1} s", r.summary.makespan, r.summary.mean_waiting / 1e6);
        for j in &r.job_records {
            println!("  job {} waits {:>5} s, runs {} .. {} on {:?}", j.job_id, j.waiting().as_secs_f64(), j.start_time, j.finish_time, j.nodes);
        }
        for d in &r.decision_log {
            if let Decision::Reserve { job, nodes, est_start } = &d.decision {
                println!("  at {} reserve {:?} for job {} from {est_start}", d.issued_at, nodes, workload.jobs[*job].job_id);
            }
        }
    }
}
