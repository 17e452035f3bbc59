mod common;

use std::collections::BTreeMap;

use common::{platform, policy, Recorder};
use powersched::engine::{run_simulation, EngineConfig, ResultsBundle};
use powersched::metrics::TraceState;
use powersched::units::SimTime;
use powersched::workload::{Job, JobId, Workload};
use proptest::prelude::*;

const ALGS: [&str; 6] = ["fcfs_psus", "easy_psus", "fcfs_psas_ao", "easy_psas_ao", "fcfs_psas_ipm", "easy_psas_ipm"];

fn jobs_strategy(max_nodes: u32) -> impl Strategy<Value = Vec<(u64, u64, u64, u32)>> {
    // (subtime, reqtime, runtime, res) in seconds
    prop::collection::vec((0u64..4000, 1u64..1500, 1u64..1800, 1u32..=max_nodes), 1..20)
}

fn build(spec: &[(u64, u64, u64, u32)]) -> Vec<Job> {
    spec.iter().enumerate().map(|(i, &(s, q, r, n))| Job::new(i as u64 + 1, n, s, q, r)).collect()
}

fn simulate(alg: &str, n: usize, jobs: Vec<Job>, cfg: EngineConfig) -> (ResultsBundle, Vec<(SimTime, usize)>) {
    let w = Workload::new(n as u32, jobs).unwrap();
    let mut rec = Recorder::new(policy(alg));
    let r = run_simulation(cfg, platform(n), &w, &mut rec).unwrap();
    (r, rec.batches)
}

fn starts(r: &ResultsBundle) -> BTreeMap<JobId, SimTime> {
    r.job_records.iter().map(|j| (j.job_id.clone(), j.start_time)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn jobs_conserved_and_nodes_exclusive(
        spec in jobs_strategy(6),
        alg in prop::sample::select(ALGS.to_vec()),
        timeout in prop::option::of(30u64..600),
    ) {
        let n = 6;
        let cfg = EngineConfig { timeout: timeout.map(SimTime::from_secs), ..EngineConfig::default() };
        let (r, _) = simulate(alg, n, build(&spec), cfg);
        prop_assert_eq!(r.job_records.len(), spec.len());
        let mut ids: Vec<_> = r.job_records.iter().map(|j| j.job_id.clone()).collect();
        ids.sort();
        ids.dedup();
        prop_assert_eq!(ids.len(), spec.len());
        for j in &r.job_records {
            prop_assert!(j.start_time >= j.subtime);
            prop_assert_eq!(j.nodes.len(), j.res as usize);
            prop_assert!(j.nodes.iter().all(|&x| x < n));
        }
        for a in &r.job_records {
            for b in &r.job_records {
                if a.job < b.job && a.start_time < b.finish_time && b.start_time < a.finish_time {
                    prop_assert!(
                        a.nodes.iter().all(|x| !b.nodes.contains(x)),
                        "jobs {} and {} overlap in time and share a node", a.job_id, b.job_id
                    );
                }
            }
        }
    }

    #[test]
    fn one_invocation_per_instant(
        spec in jobs_strategy(4),
        alg in prop::sample::select(ALGS.to_vec()),
        timeout in prop::option::of(30u64..600),
    ) {
        let cfg = EngineConfig { timeout: timeout.map(SimTime::from_secs), ..EngineConfig::default() };
        let (r, batches) = simulate(alg, 4, build(&spec), cfg);
        for w in batches.windows(2) {
            prop_assert!(w[0].0 < w[1].0, "clock went {} -> {}", w[0].0, w[1].0);
        }
        prop_assert_eq!(batches.len() as u64, r.policy_invocations);
        prop_assert!(batches.iter().all(|(_, k)| *k > 0));
    }

    #[test]
    fn input_order_does_not_matter(
        spec in jobs_strategy(5),
        alg in prop::sample::select(ALGS.to_vec()),
        seed in any::<u64>(),
    ) {
        // distinct subtimes make arrival order unambiguous
        let mut spec = spec;
        for (i, s) in spec.iter_mut().enumerate() {
            s.0 = s.0 * 32 + i as u64;
        }
        let jobs = build(&spec);
        let mut shuffled = jobs.clone();
        let k = shuffled.len();
        for i in 0..k {
            let j = (seed.rotate_left(i as u32) as usize) % k;
            shuffled.swap(i, j);
        }
        let (a, _) = simulate(alg, 5, jobs, EngineConfig::default());
        let (b, _) = simulate(alg, 5, shuffled, EngineConfig::default());
        prop_assert_eq!(starts(&a), starts(&b));
        prop_assert_eq!(a.summary.total_energy, b.summary.total_energy);
    }

    #[test]
    fn fcfs_starts_in_arrival_order(spec in jobs_strategy(5), ao in any::<bool>()) {
        let alg = if ao { "fcfs_psas_ao" } else { "fcfs_psus" };
        let (r, _) = simulate(alg, 5, build(&spec), EngineConfig::default());
        let mut recs = r.job_records.clone();
        recs.sort_by_key(|j| (j.subtime, j.job));
        for w in recs.windows(2) {
            prop_assert!(w[0].start_time <= w[1].start_time, "{} overtook {}", w[1].job_id, w[0].job_id);
        }
    }

    #[test]
    fn switch_off_only_after_idle_timeout(spec in jobs_strategy(4), easy in any::<bool>()) {
        let alg = if easy { "easy_psas_ao" } else { "fcfs_psas_ao" };
        let (r, _) = simulate(alg, 4, build(&spec), EngineConfig::default());
        let timeout = SimTime::from_secs(300);
        for t in &r.node_traces {
            for w in t.intervals.windows(2) {
                if w[1].state == TraceState::SwitchingOff {
                    prop_assert_eq!(w[0].state, TraceState::Idle);
                    prop_assert!(w[0].duration() >= timeout, "node {} idle only {}", t.node, w[0].duration());
                }
            }
            if let Some(first) = t.intervals.first() {
                prop_assert!(first.state != TraceState::SwitchingOff);
            }
        }
    }

    #[test]
    fn never_powered_down_without_management(spec in jobs_strategy(4), easy in any::<bool>()) {
        let alg = if easy { "easy_psus" } else { "fcfs_psus" };
        let (r, _) = simulate(alg, 4, build(&spec), EngineConfig::default());
        for t in &r.node_traces {
            prop_assert!(t.intervals.iter().all(|iv| matches!(iv.state, TraceState::Idle | TraceState::Computing)));
        }
    }
}
