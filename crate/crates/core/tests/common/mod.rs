#![allow(dead_code)]

pub mod backfill;

use powersched::engine::{run_simulation, Decision, EngineConfig, EventBatch, Policy, ResultsBundle, SimState};
use powersched::platform::{NodeSpec, Platform};
use powersched::sched::{PolicyConfig, Scheduler};
use powersched::units::SimTime;
use powersched::workload::{GenSpec, Job, Workload};

pub fn platform(n: usize) -> Platform {
    Platform::homogeneous(n, &NodeSpec::reference())
}

pub fn policy(name: &str) -> Scheduler {
    Scheduler::new(PolicyConfig::new(name.parse().unwrap()))
}

pub fn run(name: &str, n: usize, jobs: Vec<Job>, engine: EngineConfig) -> ResultsBundle {
    let w = Workload::new(n as u32, jobs).unwrap();
    run_simulation(engine, platform(n), &w, &mut policy(name)).unwrap()
}

pub fn start_of(r: &ResultsBundle, id: u64) -> SimTime {
    r.job_records.iter().find(|j| j.job_id == id.into()).unwrap().start_time
}

/// Wraps a policy and records every invocation.
pub struct Recorder<P> {
    pub inner: P,
    pub batches: Vec<(SimTime, usize)>,
    pub decisions: Vec<(SimTime, Vec<Decision>)>,
}

impl<P: Policy> Recorder<P> {
    pub fn new(inner: P) -> Self {
        Recorder { inner, batches: Vec::new(), decisions: Vec::new() }
    }
}

impl<P: Policy> Policy for Recorder<P> {
    fn decide(&mut self, state: &SimState, batch: &EventBatch) -> Vec<Decision> {
        self.batches.push((batch.time, batch.events.len()));
        let d = self.inner.decide(state, batch);
        self.decisions.push((state.clock, d.clone()));
        d
    }

    fn next_wakeup(&self, state: &SimState) -> Option<SimTime> {
        self.inner.next_wakeup(state)
    }
}

/// The 2-node, 4-job instance where two jobs finish at the same instant
/// t0 = 10 s while a 2-node job waits ahead of a 1-node job.
pub fn two_finishes_instance() -> Vec<Job> {
    vec![
        Job::new(1, 1, 0, 10, 10),
        Job::new(2, 1, 0, 20, 10),
        Job::new(3, 2, 1, 5, 5),
        Job::new(4, 1, 1, 10, 10),
    ]
}

pub fn sparse_spec(seed: u64) -> GenSpec {
    GenSpec {
        num_jobs: 60,
        arrival_rate: 1.0 / 20_000.0,
        mean_runtime: 600.0,
        runtime_cv: 1.0,
        min_res: 1,
        max_res: 16,
        reqtime_factor: 1.5,
        seed,
    }
}

/// All jobs need the whole machine and arrive within a few milliseconds,
/// so no node is ever idle.
pub fn saturated_spec(seed: u64) -> GenSpec {
    GenSpec {
        num_jobs: 60,
        arrival_rate: 1000.0,
        mean_runtime: 1800.0,
        runtime_cv: 1.0,
        min_res: 16,
        max_res: 16,
        reqtime_factor: 1.5,
        seed,
    }
}

/// Large generated workload on the 128-node reference platform.
pub fn large_spec() -> GenSpec {
    GenSpec {
        num_jobs: 3614,
        arrival_rate: 1.0 / 1200.0,
        mean_runtime: 1800.0,
        runtime_cv: 1.5,
        min_res: 1,
        max_res: 128,
        reqtime_factor: 1.5,
        seed: 2024,
    }
}
