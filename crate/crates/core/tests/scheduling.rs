mod common;

use common::backfill;
use common::{platform, policy, run, start_of, two_finishes_instance, Recorder};
use powersched::engine::{
    run_simulation, Decision, EngineConfig, EventBatch, JobOutcome, OverrunPolicy, Policy, SimState,
};
use powersched::units::SimTime;
use powersched::workload::{Job, Workload};

fn secs(s: u64) -> SimTime {
    SimTime::from_secs(s)
}

#[test]
fn simultaneous_finishes_form_one_batch() {
    for name in ["easy_psus", "easy_psas_ao", "easy_psas_ipm"] {
        let w = Workload::new(2, two_finishes_instance()).unwrap();
        let mut rec = Recorder::new(policy(name));
        let r = run_simulation(EngineConfig::default(), platform(2), &w, &mut rec).unwrap();
        let at_t0: Vec<_> = rec.batches.iter().filter(|(t, _)| *t == secs(10)).collect();
        assert_eq!(at_t0, [&(secs(10), 2)], "{name}");
        let job3 = r.job_records.iter().find(|j| j.job_id == 3.into()).unwrap();
        assert_eq!(job3.start_time, secs(10), "{name}");
        assert_eq!(job3.nodes, vec![0, 1]);
        assert_eq!(start_of(&r, 4), secs(15), "{name}: job 4 waits for job 3");
    }
}

#[test]
fn split_processing_backfills_into_the_gap() {
    let cfg = EngineConfig { split_simultaneous_events: true, ..EngineConfig::default() };
    let split = run("easy_psus", 2, two_finishes_instance(), cfg);
    assert_eq!(start_of(&split, 4), secs(10));
    assert_eq!(start_of(&split, 3), secs(20));
    let batched = run("easy_psus", 2, two_finishes_instance(), EngineConfig::default());
    assert!(batched.summary.mean_waiting <= split.summary.mean_waiting);
    // waits (µs): batched 0 + 0 + 9 + 14 s, split 0 + 0 + 19 + 9 s
    assert_eq!(batched.summary.mean_waiting, 23e6 / 4.0);
    assert_eq!(split.summary.mean_waiting, 28e6 / 4.0);
}

#[test]
fn fcfs_never_overtakes() {
    // head needs 3 nodes; the 1-node job behind it must wait under FCFS
    let jobs = vec![Job::new(1, 1, 0, 100, 100), Job::new(2, 3, 1, 5, 5), Job::new(3, 1, 1, 5, 5)];
    let r = run("fcfs_psus", 3, jobs.clone(), EngineConfig::default());
    assert_eq!(start_of(&r, 2), secs(100));
    assert_eq!(start_of(&r, 3), secs(105));
    let e = run("easy_psus", 3, jobs, EngineConfig::default());
    assert_eq!(start_of(&e, 3), secs(1), "EASY backfills the short job");
    assert_eq!(start_of(&e, 2), secs(100));
}

#[test]
fn backfill_respects_the_shadow_time() {
    // R holds node 0 until 100; H needs both nodes; J fits on node 1
    let mk = |req| vec![Job::new(1, 1, 0, 100, 100), Job::new(2, 2, 0, 10, 10), Job::new(3, 1, 0, req, req)];
    let short = run("easy_psus", 2, mk(50), EngineConfig::default());
    assert_eq!(start_of(&short, 3), secs(0));
    assert_eq!(start_of(&short, 2), secs(100));
    let long = run("easy_psus", 2, mk(150), EngineConfig::default());
    assert_eq!(start_of(&long, 2), secs(100));
    assert_eq!(start_of(&long, 3), secs(110));
}

#[test]
fn long_backfill_on_extra_nodes() {
    // 3 nodes; H needs 2 and node 0 frees at 100. Node 2 is not needed by
    // H, so a long job may run there.
    let jobs = vec![
        Job::new(1, 2, 0, 100, 100),
        Job::new(2, 2, 0, 10, 10),
        Job::new(3, 1, 0, 1000, 1000),
    ];
    let r = run("easy_psus", 3, jobs, EngineConfig::default());
    assert_eq!(start_of(&r, 3), secs(0));
    assert_eq!(start_of(&r, 2), secs(100));
}

#[test]
fn overrun_policies() {
    let jobs = vec![Job::new(1, 1, 0, 50, 80)];
    let t = run(
        "easy_psus",
        1,
        jobs.clone(),
        EngineConfig { overrun: OverrunPolicy::Terminate, ..EngineConfig::default() },
    );
    assert_eq!(t.job_records[0].finish_time, secs(50));
    assert_eq!(t.job_records[0].outcome, JobOutcome::TerminatedOverrun);
    let c = run("easy_psus", 1, jobs, EngineConfig::default());
    assert_eq!(c.job_records[0].finish_time, secs(80));
    assert_eq!(c.job_records[0].outcome, JobOutcome::Completed);
}

#[test]
fn oracle_small_exhaustive_and_sampled() {
    let mut instances = Vec::new();
    for n in 1..=3 {
        for k in 1..=3 {
            instances.extend(backfill::exhaustive(n, k));
        }
    }
    let exhaustive = instances.len();
    instances.extend(backfill::sampled(3000, 11, 3, 4..=5));
    let tally = instances.iter().map(backfill::check).fold(backfill::Tally::default(), backfill::Tally::merge);
    assert_eq!(tally.instances as usize, exhaustive + 3000);
    assert!(tally.reservations > 1000, "the instances exercise reservations");
    assert!(tally.violations.is_empty(), "{:?}", &tally.violations[..tally.violations.len().min(5)]);
}

#[test]
fn branched_oracle_runs_equal_fresh_runs() {
    assert_eq!(backfill::branching_matches_fresh(3, &[0, 0, 1, 3]), Ok(12u64.pow(4)));
    assert_eq!(backfill::branching_matches_fresh(2, &[0, 1, 1, 2, 4]), Ok(8u64.pow(5)));
    let t = backfill::check_reservations_with_subtimes(2, &[0, 1, 1, 2, 4]);
    assert_eq!(t.instances, 8u64.pow(5));
    assert!(t.violations.is_empty());
}

/// Starts every queued job that fits, ignoring reservations.
struct FirstFit;

impl Policy for FirstFit {
    fn decide(&mut self, s: &SimState, _: &EventBatch) -> Vec<Decision> {
        let mut free: Vec<usize> = s.platform.nodes.iter().filter(|n| n.is_idle()).map(|n| n.id).collect();
        let mut out = Vec::new();
        let mut head = None;
        for &j in &s.queue {
            let res = s.job(j).res as usize;
            if res <= free.len() {
                out.push(Decision::StartJob { job: j, nodes: free.drain(..res).collect() });
            } else if head.is_none() {
                head = Some((j, out.len()));
            }
        }
        if let Some((job, at)) = head {
            out.insert(at, Decision::Reserve { job, nodes: vec![], est_start: s.clock });
        }
        out
    }
}

#[test]
fn oracle_catches_unsafe_backfilling() {
    // job 1 frees node 0 at 2; job 2 needs both nodes; job 3 runs to 4
    let inst = backfill::Instance { nodes: 2, jobs: vec![(0, 2, 1), (0, 1, 2), (0, 4, 1)] };
    assert!(backfill::check(&inst).violations.is_empty());
    let bad = backfill::check_policy(&inst, FirstFit);
    assert_eq!(bad.violations.len(), 1);
    let (_, job, actual, bound) = &bad.violations[0];
    assert_eq!((*job, *actual, *bound), (1, secs(4), secs(2)));
}
