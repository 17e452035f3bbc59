//! Brute-force check that EASY never pushes a reserved job past the start
//! it would get if nothing were backfilled.
//!
//! Every time the scheduler reserves for a blocked head job H, the probe
//! takes the jobs that hold nodes at that instant (running plus those
//! started in the same invocation ahead of H) and steps time one second
//! at a time until enough nodes are free for H. Runtimes equal requested
//! times, so this is exactly H's start under plain FCFS from that state.
//! The realized start of H must not be later.

use powersched::engine::{run_simulation, Decision, EngineConfig, EventBatch, Policy, SimState, Simulation};
use powersched::platform::Platform;
use powersched::units::SimTime;
use powersched::workload::{Job, Workload};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{platform, policy};

pub const MAX_T: u64 = 4;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    pub nodes: usize,
    /// (subtime, runtime, res), subtimes non-decreasing, seconds.
    pub jobs: Vec<(u64, u64, u32)>,
}

impl Instance {
    pub fn workload(&self) -> Workload {
        let jobs = self
            .jobs
            .iter()
            .enumerate()
            .map(|(i, &(s, r, res))| Job::new(i as u64 + 1, res, s, r, r))
            .collect();
        Workload::new(self.nodes as u32, jobs).unwrap()
    }
}

struct Probe<P> {
    inner: P,
    bounds: Vec<(usize, SimTime)>,
}

fn fcfs_start_by_stepping(state: &SimState, decisions: &[Decision], head: usize) -> SimTime {
    let now = state.clock;
    let mut holds: Vec<(SimTime, u32)> = state
        .running
        .iter()
        .map(|(&j, r)| (r.start + state.job(j).reqtime, r.nodes.len() as u32))
        .collect();
    for d in decisions {
        match d {
            Decision::StartJob { job, nodes } => holds.push((now + state.job(*job).reqtime, nodes.len() as u32)),
            Decision::Reserve { .. } => break,
            _ => {}
        }
    }
    let n = state.num_nodes() as u32;
    let need = state.job(head).res;
    let mut t = now;
    loop {
        let used: u32 = holds.iter().filter(|(end, _)| *end > t).map(|(_, r)| r).sum();
        if n - used >= need {
            return t;
        }
        t += SimTime::from_secs(1);
    }
}

impl<P: Policy> Policy for Probe<P> {
    fn decide(&mut self, state: &SimState, batch: &EventBatch) -> Vec<Decision> {
        let d = self.inner.decide(state, batch);
        if let Some(head) = d.iter().find_map(|x| match x {
            Decision::Reserve { job, .. } => Some(*job),
            _ => None,
        }) {
            self.bounds.push((head, fcfs_start_by_stepping(state, &d, head)));
        }
        d
    }
}

#[derive(Clone, Debug, Default)]
pub struct Tally {
    pub instances: u64,
    pub reservations: u64,
    pub violations: Vec<(Instance, usize, SimTime, SimTime)>,
    /// Jobs that started later under EASY than in a full FCFS run of the
    /// same instance. Not a safety violation; reported for information.
    pub later_than_global_fcfs: u64,
}

impl Tally {
    pub fn merge(mut self, o: Tally) -> Tally {
        self.instances += o.instances;
        self.reservations += o.reservations;
        self.violations.extend(o.violations);
        self.later_than_global_fcfs += o.later_than_global_fcfs;
        self
    }
}

pub fn check(inst: &Instance) -> Tally {
    check_policy(inst, policy("easy_psus"))
}

/// Same check for any policy that announces its blocked head job with a
/// `Reserve` decision placed after the jobs it starts in queue order.
pub fn check_policy<P: Policy>(inst: &Instance, scheduler: P) -> Tally {
    let (mut t, easy) = probe_run(inst, scheduler);
    let w = inst.workload();
    let fcfs = run_simulation(EngineConfig::default(), platform(inst.nodes), &w, &mut policy("fcfs_psus")).unwrap();
    for r in &fcfs.job_records {
        if easy[r.job] > r.start_time {
            t.later_than_global_fcfs += 1;
        }
    }
    t
}

/// The reservation check alone, without the full FCFS comparison run.
pub fn check_reservations(inst: &Instance) -> Tally {
    probe_run(inst, policy("easy_psus")).0
}

fn probe_run<P: Policy>(inst: &Instance, scheduler: P) -> (Tally, Vec<SimTime>) {
    let (starts, bounds) = fresh_probe(inst, scheduler);
    let mut t = Tally::default();
    t.record(inst, &starts, &bounds);
    (t, starts)
}

fn fresh_probe<P: Policy>(inst: &Instance, scheduler: P) -> (Vec<SimTime>, Vec<(usize, SimTime)>) {
    thread_local! {
        static PLATFORMS: Vec<Platform> = (0..=8).map(platform).collect();
    }
    let w = inst.workload();
    let mut probe = Probe { inner: scheduler, bounds: Vec::new() };
    let p = PLATFORMS.with(|ps| ps[inst.nodes].clone());
    let mut sim = Simulation::start(EngineConfig::default(), p, &w).unwrap();
    sim.run(&mut probe).unwrap();
    (starts_of(&sim), probe.bounds)
}

fn starts_of(sim: &Simulation) -> Vec<SimTime> {
    let mut starts = vec![SimTime::MAX; sim.state().jobs.len()];
    for r in &sim.state().completed {
        starts[r.job] = r.start_time;
    }
    starts
}

impl Tally {
    fn record(&mut self, inst: &Instance, starts: &[SimTime], bounds: &[(usize, SimTime)]) {
        self.instances += 1;
        self.reservations += bounds.len() as u64;
        for &(h, bound) in bounds {
            if starts[h] > bound {
                self.violations.push((inst.clone(), h, starts[h], bound));
            }
        }
    }
}

/// Outcome of one probed run: realized starts and reservation bounds.
pub type Visit<'a> = &'a mut dyn FnMut(&Instance, &[SimTime], &[(usize, SimTime)]);

/// Probes every runtime/size assignment for one subtime sequence under
/// EASY. Before a job arrives nothing depends on its size or runtime, so
/// the run is advanced to just before each arrival and cloned once per
/// choice for the arriving job.
pub fn probe_with_subtimes(nodes: usize, subs: &[u64], visit: Visit) {
    let per_job: Vec<(u64, u32)> =
        (1..=MAX_T).flat_map(|r| (1..=nodes as u32).map(move |res| (r, res))).collect();
    let mut inst = Instance { nodes, jobs: subs.iter().map(|&s| (s, 1, 1)).collect() };
    let sim = Simulation::start(EngineConfig::default(), platform(nodes), &inst.workload()).unwrap();
    branch(sim, Vec::new(), 0, &mut inst, &per_job, visit);
}

fn branch(
    mut sim: Simulation,
    bounds: Vec<(usize, SimTime)>,
    level: usize,
    inst: &mut Instance,
    per_job: &[(u64, u32)],
    visit: Visit,
) {
    let mut probe = Probe { inner: policy("easy_psus"), bounds };
    if level == inst.jobs.len() {
        sim.run(&mut probe).unwrap();
        visit(inst, &starts_of(&sim), &probe.bounds);
        return;
    }
    let sub = inst.jobs[level].0;
    let arrival = SimTime::from_secs(sub);
    if arrival > sim.clock() {
        sim.advance_until(SimTime(arrival.0 - 1), &mut probe).unwrap();
    }
    let mut sim = Some(sim);
    for (i, &(r, res)) in per_job.iter().enumerate() {
        // the last choice takes the original instead of a copy
        let mut next = if i + 1 == per_job.len() { sim.take().unwrap() } else { sim.clone().unwrap() };
        next.amend_job(level, Job::new(level as u64 + 1, res, sub, r, r)).unwrap();
        inst.jobs[level] = (sub, r, res);
        branch(next, probe.bounds.clone(), level + 1, inst, per_job, visit);
    }
}

/// Compares every branched run for one subtime sequence with a run of the
/// same instance from scratch. Returns the number of instances compared.
pub fn branching_matches_fresh(nodes: usize, subs: &[u64]) -> Result<u64, String> {
    let mut n = 0;
    let mut first_mismatch = None;
    probe_with_subtimes(nodes, subs, &mut |inst, starts, bounds| {
        n += 1;
        if first_mismatch.is_none() && fresh_probe(inst, policy("easy_psus")) != (starts.to_vec(), bounds.to_vec()) {
            first_mismatch = Some(inst.clone());
        }
    });
    match first_mismatch {
        None => Ok(n),
        Some(inst) => Err(format!("branched run differs from a fresh run for {inst:?}")),
    }
}

/// Reservation check over every runtime/size assignment for one subtime
/// sequence.
pub fn check_reservations_with_subtimes(nodes: usize, subs: &[u64]) -> Tally {
    let mut t = Tally::default();
    probe_with_subtimes(nodes, subs, &mut |inst, starts, bounds| t.record(inst, starts, bounds));
    t
}

/// Non-decreasing sequences of length k over 0..=MAX_T.
pub fn subtime_seqs(k: usize) -> Vec<Vec<u64>> {
    let mut out = vec![vec![]];
    for _ in 0..k {
        let mut next = Vec::new();
        for s in &out {
            let lo = s.last().copied().unwrap_or(0);
            for t in lo..=MAX_T {
                let mut v = s.clone();
                v.push(t);
                next.push(v);
            }
        }
        out = next;
    }
    out
}

/// Every instance with `nodes` nodes and exactly `k` jobs: subtimes in
/// 0..=4, runtimes in 1..=4, sizes in 1..=nodes.
pub fn exhaustive(nodes: usize, k: usize) -> Vec<Instance> {
    let mut out = Vec::new();
    for_each_instance(nodes, k, false, |i| out.push(i.clone()));
    out
}

/// Visits the same instances as `exhaustive` without collecting them.
/// With `anchored`, only instances whose first job arrives at 0.
pub fn for_each_instance(nodes: usize, k: usize, anchored: bool, mut f: impl FnMut(&Instance)) {
    for subs in subtime_seqs(k) {
        if anchored && subs.first().is_some_and(|&s| s != 0) {
            continue;
        }
        for_each_with_subtimes(nodes, &subs, &mut f);
    }
}

/// Every runtime/size assignment for one fixed subtime sequence.
pub fn for_each_with_subtimes(nodes: usize, subs: &[u64], mut f: impl FnMut(&Instance)) {
    let k = subs.len();
    let per_job: Vec<(u64, u32)> =
        (1..=MAX_T).flat_map(|r| (1..=nodes as u32).map(move |res| (r, res))).collect();
    let mut inst = Instance { nodes, jobs: vec![(0, 0, 0); k] };
    let mut idx = vec![0usize; k];
    loop {
        for i in 0..k {
            inst.jobs[i] = (subs[i], per_job[idx[i]].0, per_job[idx[i]].1);
        }
        f(&inst);
        let mut pos = 0;
        while pos < k {
            idx[pos] += 1;
            if idx[pos] < per_job.len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
        if pos == k {
            break;
        }
    }
}

pub fn sampled(count: usize, seed: u64, max_nodes: usize, jobs: std::ops::RangeInclusive<usize>) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let nodes = rng.random_range(1..=max_nodes);
            let k = rng.random_range(jobs.clone());
            let mut subs: Vec<u64> = (0..k).map(|_| rng.random_range(0..=MAX_T)).collect();
            subs.sort_unstable();
            let jobs = subs
                .into_iter()
                .map(|s| (s, rng.random_range(1..=MAX_T), rng.random_range(1..=nodes as u32)))
                .collect();
            Instance { nodes, jobs }
        })
        .collect()
}
