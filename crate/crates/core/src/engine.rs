//! Discrete-event kernel.
//!
//! All events that share a timestamp are popped together as one
//! [`EventBatch`], their effects are applied in a fixed kind order, and the
//! policy is then invoked exactly once on the resulting state. Decisions it
//! returns take effect at the same instant.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{self, AccountingError, NodeStateTrace, Summary};
use crate::platform::{Platform, PowerState};
use crate::units::{Nanojoules, SimTime};
use crate::workload::{Job, JobId, Workload};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverrunPolicy {
    Terminate,
    #[default]
    Continue,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EngineConfig {
    pub start_time: SimTime,
    /// Decision cadence; `None` is purely event-driven.
    pub timeout: Option<SimTime>,
    pub overrun: OverrunPolicy,
    /// Keep every applied decision in `SimState::decision_log`.
    pub record_decisions: bool,
    /// Deliver same-time events one at a time, each with its own policy
    /// call. Reproduces the unbatched behaviour for comparisons only.
    pub split_simultaneous_events: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            start_time: SimTime::ZERO,
            timeout: None,
            overrun: OverrunPolicy::Continue,
            record_decisions: false,
            split_simultaneous_events: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventKind {
    JobFinish(usize),
    JobOverrun(usize),
    TransitionComplete { node: usize, target: PowerState },
    JobArrival(usize),
    DecisionTick,
}

impl EventKind {
    /// Within one timestamp: completions, then transitions, then arrivals,
    /// then ticks.
    pub fn priority(&self) -> u8 {
        match self {
            EventKind::JobFinish(_) => 0,
            EventKind::JobOverrun(_) => 1,
            EventKind::TransitionComplete { .. } => 2,
            EventKind::JobArrival(_) => 3,
            EventKind::DecisionTick => 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Event {
    pub time: SimTime,
    pub kind: EventKind,
    pub seq: u64,
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.time, self.kind.priority(), self.seq).cmp(&(other.time, other.kind.priority(), other.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventBatch {
    pub time: SimTime,
    pub events: Vec<Event>,
}

#[derive(Clone, Debug, Default)]
struct EventQueue {
    heap: BinaryHeap<std::cmp::Reverse<Event>>,
    seq: u64,
    non_tick: usize,
    tick_times: BTreeSet<SimTime>,
}

impl EventQueue {
    fn push(&mut self, time: SimTime, kind: EventKind) {
        if kind == EventKind::DecisionTick {
            if !self.tick_times.insert(time) {
                return;
            }
        } else {
            self.non_tick += 1;
        }
        let ev = Event { time, kind, seq: self.seq };
        self.seq += 1;
        self.heap.push(std::cmp::Reverse(ev));
    }

    fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|e| e.0.time)
    }

    fn pop(&mut self) -> Option<Event> {
        let ev = self.heap.pop()?.0;
        if ev.kind == EventKind::DecisionTick {
            self.tick_times.remove(&ev.time);
        } else {
            self.non_tick -= 1;
        }
        Some(ev)
    }

    fn clear_ticks(&mut self) {
        if self.tick_times.is_empty() {
            return;
        }
        self.heap.retain(|e| e.0.kind != EventKind::DecisionTick);
        self.tick_times.clear();
    }

    fn len(&self) -> usize {
        self.heap.len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    StartJob { job: usize, nodes: Vec<usize> },
    SwitchOff { node: usize },
    SwitchOn { node: usize },
    Reserve { job: usize, nodes: Vec<usize>, est_start: SimTime },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionOrigin {
    Policy,
    External,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LoggedDecision {
    pub issued_at: SimTime,
    pub origin: DecisionOrigin,
    pub decision: Decision,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunningJob {
    pub nodes: Vec<usize>,
    pub start: SimTime,
    pub finish_event_time: SimTime,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobOutcome {
    Completed,
    TerminatedOverrun,
}

impl JobOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            JobOutcome::Completed => "completed",
            JobOutcome::TerminatedOverrun => "terminated_overrun",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JobRecord {
    /// Index into the workload's job list.
    pub job: usize,
    pub job_id: JobId,
    pub res: u32,
    pub subtime: SimTime,
    pub start_time: SimTime,
    pub finish_time: SimTime,
    pub nodes: Vec<usize>,
    pub outcome: JobOutcome,
}

impl JobRecord {
    pub fn waiting(&self) -> SimTime {
        self.start_time - self.subtime
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PowerInterval {
    pub state: PowerState,
    pub begin: SimTime,
    pub end: SimTime,
}

/// Power-state history of one node. Zero-length stays are not recorded.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PowerTrace {
    pub node: usize,
    pub intervals: Vec<PowerInterval>,
    open_state: PowerState,
    open_since: SimTime,
}

impl PowerTrace {
    fn new(node: usize, state: PowerState, since: SimTime) -> Self {
        PowerTrace { node, intervals: Vec::new(), open_state: state, open_since: since }
    }

    fn change(&mut self, state: PowerState, now: SimTime) {
        if state == self.open_state {
            return;
        }
        if now > self.open_since {
            self.intervals.push(PowerInterval { state: self.open_state, begin: self.open_since, end: now });
        }
        self.open_state = state;
        self.open_since = now;
    }

    fn closed_at(&self, end: SimTime) -> Vec<PowerInterval> {
        let mut v = self.intervals.clone();
        if end > self.open_since {
            v.push(PowerInterval { state: self.open_state, begin: self.open_since, end });
        }
        v
    }
}

/// Quantities integrated as the clock advances. Independent of the traces,
/// so the two can be checked against each other.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Accrued {
    pub total_energy: Nanojoules,
    /// Energy spent idle or switching.
    pub wasted_energy: Nanojoules,
    /// Σ over time of queue length, in job·µs.
    pub queued_wait: u128,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("job {job} requests {res} nodes but the platform has {nodes}")]
    JobTooLarge { job: JobId, res: u32, nodes: usize },
    #[error("policy fault at {time}: {decision}: {reason}")]
    PolicyFault { time: SimTime, decision: String, reason: String },
    #[error("simulation stalled at {time}: {queued} queued job(s) and no pending events")]
    Stalled { time: SimTime, queued: usize },
    #[error("cannot amend job {job}: {reason}")]
    Amend { job: JobId, reason: &'static str },
    #[error(transparent)]
    Accounting(#[from] AccountingError),
}

/// Everything a policy may look at.
#[derive(Clone, Debug)]
pub struct SimState {
    pub clock: SimTime,
    pub start_time: SimTime,
    pub platform: Platform,
    pub jobs: Vec<Job>,
    /// Waiting jobs in arrival order.
    pub queue: VecDeque<usize>,
    pub running: BTreeMap<usize, RunningJob>,
    pub completed: Vec<JobRecord>,
    pub rng_seed: u64,
    pub decision_log: Vec<LoggedDecision>,
    pub accrued: Accrued,
    pub policy_invocations: u64,
    arrived: Vec<bool>,
    arrivals_remaining: usize,
}

impl SimState {
    pub fn job(&self, idx: usize) -> &Job {
        &self.jobs[idx]
    }

    /// Absolute submission time of a job.
    pub fn arrival_time(&self, idx: usize) -> SimTime {
        self.start_time + self.jobs[idx].subtime
    }

    pub fn has_arrived(&self, idx: usize) -> bool {
        self.arrived[idx]
    }

    /// Jobs not yet finished: pending arrivals, queued, or running.
    pub fn work_remains(&self) -> bool {
        self.arrivals_remaining > 0 || !self.queue.is_empty() || !self.running.is_empty()
    }

    pub fn num_nodes(&self) -> usize {
        self.platform.num_nodes()
    }

    fn accrue_to(&mut self, t: SimTime) {
        if t <= self.clock {
            return;
        }
        let dt = t - self.clock;
        for n in &self.platform.nodes {
            let e = Nanojoules::of(n.current_power(), dt);
            self.accrued.total_energy += e;
            if n.is_idle() || n.current_state.is_transient() {
                self.accrued.wasted_energy += e;
            }
        }
        self.accrued.queued_wait += self.queue.len() as u128 * dt.0 as u128;
        self.clock = t;
    }
}

pub trait Policy {
    /// Called once per event batch with the post-batch state.
    fn decide(&mut self, state: &SimState, batch: &EventBatch) -> Vec<Decision>;

    /// A future instant at which the policy wants to be woken even if
    /// nothing else happens. Consulted after each invocation.
    fn next_wakeup(&self, _state: &SimState) -> Option<SimTime> {
        None
    }
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn decide(&mut self, state: &SimState, batch: &EventBatch) -> Vec<Decision> {
        (**self).decide(state, batch)
    }

    fn next_wakeup(&self, state: &SimState) -> Option<SimTime> {
        (**self).next_wakeup(state)
    }
}

#[derive(Clone)]
pub struct Simulation {
    config: EngineConfig,
    state: SimState,
    pending: EventQueue,
    traces: Vec<PowerTrace>,
    next_cadence_tick: Option<SimTime>,
}

/// Raw outcome of a finished simulation.
#[derive(Clone, Debug)]
pub struct SimOutcome {
    pub platform: Platform,
    pub jobs: Vec<Job>,
    pub records: Vec<JobRecord>,
    pub power_traces: Vec<PowerTrace>,
    pub start_time: SimTime,
    pub end_time: SimTime,
    pub accrued: Accrued,
    pub decision_log: Vec<LoggedDecision>,
    pub policy_invocations: u64,
}

/// Records, per-node traces and the summary of one run.
#[derive(Clone, Debug)]
pub struct ResultsBundle {
    pub platform: Platform,
    pub job_records: Vec<JobRecord>,
    pub node_traces: Vec<NodeStateTrace>,
    pub summary: Summary,
    pub decision_log: Vec<LoggedDecision>,
    pub policy_invocations: u64,
}

impl Simulation {
    /// Seeds arrivals (and the first decision tick) and sets the clock to
    /// the start time.
    pub fn start(config: EngineConfig, mut platform: Platform, workload: &Workload) -> Result<Self, SimError> {
        let n = platform.num_nodes();
        if let Some(j) = workload.jobs.iter().find(|j| j.res as usize > n) {
            return Err(SimError::JobTooLarge { job: j.job_id.clone(), res: j.res, nodes: n });
        }
        let start = config.start_time;
        platform.reset(start);
        let traces = platform
            .nodes
            .iter()
            .map(|node| PowerTrace::new(node.id, node.current_state, start))
            .collect();
        let mut pending = EventQueue::default();
        for (i, j) in workload.jobs.iter().enumerate() {
            pending.push(start + j.subtime, EventKind::JobArrival(i));
        }
        let mut next_cadence_tick = None;
        if let Some(tau) = config.timeout.filter(|t| *t > SimTime::ZERO) {
            if !workload.jobs.is_empty() {
                pending.push(start + tau, EventKind::DecisionTick);
                next_cadence_tick = Some(start + tau);
            }
        }
        let state = SimState {
            clock: start,
            start_time: start,
            platform,
            jobs: workload.jobs.clone(),
            queue: VecDeque::new(),
            running: BTreeMap::new(),
            completed: Vec::new(),
            rng_seed: 0,
            decision_log: Vec::new(),
            accrued: Accrued::default(),
            policy_invocations: 0,
            arrived: vec![false; workload.jobs.len()],
            arrivals_remaining: workload.jobs.len(),
        };
        Ok(Simulation { config, state, pending, traces, next_cadence_tick })
    }

    /// Replaces a job that has not arrived yet; its submission time must
    /// not change. With `Clone`, lets a caller branch one run into variants
    /// that share everything before the arrival.
    pub fn amend_job(&mut self, idx: usize, job: Job) -> Result<(), SimError> {
        let old = &self.state.jobs[idx];
        let reason = if self.state.arrived[idx] {
            Some("it has already arrived")
        } else if job.subtime != old.subtime {
            Some("the submission time differs")
        } else if job.res == 0 || job.res as usize > self.state.num_nodes() {
            Some("node count out of range")
        } else if job.reqtime == SimTime::ZERO || job.runtime == SimTime::ZERO {
            Some("times must be positive")
        } else {
            None
        };
        if let Some(reason) = reason {
            return Err(SimError::Amend { job: old.job_id.clone(), reason });
        }
        self.state.jobs[idx] = job;
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.state.rng_seed = seed;
        self
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn clock(&self) -> SimTime {
        self.state.clock
    }

    pub fn is_running(&self) -> bool {
        self.state.work_remains() || self.pending.non_tick > 0
    }

    pub fn pending_events(&self) -> usize {
        self.pending.len()
    }

    pub fn next_event_time(&self) -> Option<SimTime> {
        self.pending.peek_time()
    }

    /// Processes the next batch of simultaneous events and invokes the
    /// policy once. Returns the batch and whether the run continues.
    pub fn proceed(&mut self, policy: &mut dyn Policy) -> Result<(EventBatch, bool), SimError> {
        if !self.is_running() {
            self.pending.clear_ticks();
            return Ok((EventBatch { time: self.state.clock, events: Vec::new() }, false));
        }
        let Some(t) = self.pending.peek_time() else {
            return Err(SimError::Stalled { time: self.state.clock, queued: self.state.queue.len() });
        };
        self.state.accrue_to(t);

        let mut events = Vec::new();
        while self.pending.peek_time() == Some(t) {
            events.push(self.pending.pop().expect("peeked"));
            if self.config.split_simultaneous_events {
                break;
            }
        }
        let batch = EventBatch { time: t, events };
        for ev in &batch.events {
            self.apply_event(ev);
        }

        for node in &mut self.state.platform.nodes {
            node.reserved_for = None;
        }
        self.state.policy_invocations += 1;
        let decisions = policy.decide(&self.state, &batch);
        for d in decisions {
            self.apply_decision(d, DecisionOrigin::Policy)?;
        }

        if self.next_cadence_tick == Some(t) {
            let tau = self.config.timeout.expect("cadence implies timeout");
            self.next_cadence_tick = None;
            if self.state.work_remains() {
                self.pending.push(t + tau, EventKind::DecisionTick);
                self.next_cadence_tick = Some(t + tau);
            }
        }
        if self.state.work_remains() {
            if let Some(w) = policy.next_wakeup(&self.state).filter(|w| *w > t) {
                self.pending.push(w, EventKind::DecisionTick);
            }
        }
        let running = self.is_running();
        if !running {
            self.pending.clear_ticks();
        }
        Ok((batch, running))
    }

    /// Processes every batch up to and including `until`, then moves the
    /// clock to `until` if the run is still going.
    pub fn advance_until(&mut self, until: SimTime, policy: &mut dyn Policy) -> Result<(), SimError> {
        while self.is_running() {
            match self.pending.peek_time() {
                Some(t) if t <= until => {
                    self.proceed(policy)?;
                }
                _ => break,
            }
        }
        if self.is_running() {
            self.state.accrue_to(until);
        }
        Ok(())
    }

    /// Applies decisions from outside the policy loop (e.g. an external
    /// power manager) at the current clock.
    pub fn apply_external(&mut self, decisions: Vec<Decision>) -> Result<(), SimError> {
        for d in decisions {
            self.apply_decision(d, DecisionOrigin::External)?;
        }
        Ok(())
    }

    /// Runs to completion.
    pub fn run(&mut self, policy: &mut dyn Policy) -> Result<(), SimError> {
        while self.is_running() {
            self.proceed(policy)?;
        }
        Ok(())
    }

    pub fn finish(self) -> SimOutcome {
        let end = self.state.clock;
        SimOutcome {
            power_traces: self
                .traces
                .iter()
                .map(|t| PowerTrace {
                    node: t.node,
                    intervals: t.closed_at(end),
                    open_state: t.open_state,
                    open_since: end,
                })
                .collect(),
            platform: self.state.platform,
            jobs: self.state.jobs,
            records: self.state.completed,
            start_time: self.state.start_time,
            end_time: end,
            accrued: self.state.accrued,
            decision_log: self.state.decision_log,
            policy_invocations: self.state.policy_invocations,
        }
    }

    fn set_trace(&mut self, node: usize) {
        let n = &self.state.platform.nodes[node];
        self.traces[node].change(n.current_state, self.state.clock);
    }

    fn apply_event(&mut self, ev: &Event) {
        let now = self.state.clock;
        match ev.kind {
            EventKind::JobArrival(j) => {
                self.state.arrived[j] = true;
                self.state.arrivals_remaining -= 1;
                self.state.queue.push_back(j);
            }
            EventKind::JobFinish(j) => self.finish_job(j, JobOutcome::Completed),
            EventKind::JobOverrun(j) => self.finish_job(j, JobOutcome::TerminatedOverrun),
            EventKind::TransitionComplete { node, .. } => {
                self.state.platform.complete_transition(node, now);
                self.set_trace(node);
            }
            EventKind::DecisionTick => {}
        }
    }

    fn finish_job(&mut self, j: usize, outcome: JobOutcome) {
        let now = self.state.clock;
        let Some(run) = self.state.running.remove(&j) else { return };
        for &n in &run.nodes {
            let node = &mut self.state.platform.nodes[n];
            node.running_job = None;
            node.idle_since = now;
        }
        let job = &self.state.jobs[j];
        let mut nodes = run.nodes;
        nodes.sort_unstable();
        self.state.completed.push(JobRecord {
            job: j,
            job_id: job.job_id.clone(),
            res: job.res,
            subtime: self.state.start_time + job.subtime,
            start_time: run.start,
            finish_time: now,
            nodes,
            outcome,
        });
    }

    fn fault(&self, d: &Decision, reason: impl Into<String>) -> SimError {
        SimError::PolicyFault { time: self.state.clock, decision: format!("{d:?}"), reason: reason.into() }
    }

    fn apply_decision(&mut self, d: Decision, origin: DecisionOrigin) -> Result<(), SimError> {
        let now = self.state.clock;
        let n_nodes = self.state.num_nodes();
        match &d {
            Decision::StartJob { job, nodes } => {
                let job = *job;
                let Some(pos) = self.state.queue.iter().position(|&q| q == job) else {
                    return Err(self.fault(&d, "job is not waiting in the queue"));
                };
                let res = self.state.jobs[job].res as usize;
                if nodes.len() != res {
                    return Err(self.fault(&d, format!("job needs {res} nodes, got {}", nodes.len())));
                }
                for (i, &n) in nodes.iter().enumerate() {
                    if n >= n_nodes {
                        return Err(self.fault(&d, format!("node {n} does not exist")));
                    }
                    if nodes[..i].contains(&n) {
                        return Err(self.fault(&d, "node list has duplicates"));
                    }
                    let node = &self.state.platform.nodes[n];
                    if !node.is_idle() {
                        return Err(self.fault(
                            &d,
                            format!("node {n} is not idle (state {}, job {:?})", node.current_state, node.running_job),
                        ));
                    }
                }
                let speed = nodes
                    .iter()
                    .map(|&n| self.state.platform.nodes[n].effective_speed())
                    .fold(f64::INFINITY, f64::min);
                if !(speed > 0.0) {
                    return Err(self.fault(&d, "allocated node has zero compute speed"));
                }
                self.state.queue.remove(pos);
                for &n in nodes {
                    let node = &mut self.state.platform.nodes[n];
                    node.running_job = Some(job);
                    node.reserved_for = None;
                }
                let spec = &self.state.jobs[job];
                let scaled = if speed == 1.0 {
                    spec.runtime
                } else {
                    SimTime((spec.runtime.0 as f64 / speed).ceil() as u64)
                };
                let (time, kind) = if self.config.overrun == OverrunPolicy::Terminate && spec.reqtime < scaled {
                    (now + spec.reqtime, EventKind::JobOverrun(job))
                } else {
                    (now + scaled, EventKind::JobFinish(job))
                };
                self.pending.push(time, kind);
                self.state.running.insert(job, RunningJob { nodes: nodes.clone(), start: now, finish_event_time: time });
            }
            Decision::SwitchOff { node } | Decision::SwitchOn { node } => {
                let node = *node;
                let target = if matches!(d, Decision::SwitchOn { .. }) { PowerState::Active } else { PowerState::Sleeping };
                if node >= n_nodes {
                    return Err(self.fault(&d, "no such node"));
                }
                if target == PowerState::Sleeping {
                    if let Some(job) = self.state.platform.nodes[node].reserved_for {
                        return Err(self.fault(&d, format!("node is reserved for job {job}")));
                    }
                }
                let ticket = self
                    .state
                    .platform
                    .request_transition(node, target, now)
                    .map_err(|e| self.fault(&d, e.to_string()))?;
                self.set_trace(node);
                if ticket.completes_at == now {
                    self.state.platform.complete_transition(node, now);
                    self.set_trace(node);
                } else {
                    self.pending.push(ticket.completes_at, EventKind::TransitionComplete { node, target });
                }
            }
            Decision::Reserve { job, nodes, .. } => {
                if !self.state.queue.contains(job) {
                    return Err(self.fault(&d, "reserved job is not waiting in the queue"));
                }
                if let Some(&n) = nodes.iter().find(|&&n| n >= n_nodes) {
                    return Err(self.fault(&d, format!("node {n} does not exist")));
                }
                for &n in nodes {
                    self.state.platform.nodes[n].reserved_for = Some(*job);
                }
            }
        }
        if self.config.record_decisions {
            self.state.decision_log.push(LoggedDecision { issued_at: now, origin, decision: d });
        }
        Ok(())
    }
}

impl SimOutcome {
    /// Splits traces into computing/idle and computes the summary.
    pub fn into_results(self) -> Result<ResultsBundle, SimError> {
        let node_traces = metrics::split_power_traces(&self.power_traces, &self.records)?;
        let summary = metrics::summarize(&node_traces, &self.records, &self.platform, self.start_time, self.end_time)?;
        if summary.total_energy != self.accrued.total_energy {
            return Err(AccountingError::Mismatch {
                traces: summary.total_energy,
                accrued: self.accrued.total_energy,
            }
            .into());
        }
        Ok(ResultsBundle {
            platform: self.platform,
            job_records: self.records,
            node_traces,
            summary,
            decision_log: self.decision_log,
            policy_invocations: self.policy_invocations,
        })
    }
}

/// Starts, runs to completion and post-processes one simulation.
pub fn run_simulation(
    config: EngineConfig,
    platform: Platform,
    workload: &Workload,
    policy: &mut dyn Policy,
) -> Result<ResultsBundle, SimError> {
    let mut sim = Simulation::start(config, platform, workload)?;
    sim.run(policy)?;
    sim.finish().into_results()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::platform::NodeSpec;

    /// Records batches; starts the head job on the lowest idle nodes.
    #[derive(Default)]
    struct Greedy {
        batches: Vec<(SimTime, usize)>,
    }

    impl Policy for Greedy {
        fn decide(&mut self, s: &SimState, batch: &EventBatch) -> Vec<Decision> {
            self.batches.push((batch.time, batch.events.len()));
            let mut free: Vec<usize> = s.platform.nodes.iter().filter(|n| n.is_idle()).map(|n| n.id).collect();
            let mut out = Vec::new();
            for &j in &s.queue {
                let res = s.job(j).res as usize;
                if res > free.len() {
                    break;
                }
                let nodes: Vec<usize> = free.drain(..res).collect();
                out.push(Decision::StartJob { job: j, nodes });
            }
            out
        }
    }

    fn platform(n: usize) -> Platform {
        Platform::homogeneous(n, &NodeSpec::reference())
    }

    fn workload(jobs: Vec<Job>) -> Workload {
        Workload::new(8, jobs).unwrap()
    }

    #[test]
    fn same_time_arrivals_form_one_batch() {
        let w = workload(vec![Job::new(1, 1, 0, 5, 5), Job::new(2, 1, 10, 5, 5), Job::new(3, 1, 10, 5, 5)]);
        let mut sim = Simulation::start(EngineConfig::default(), platform(4), &w).unwrap();
        assert_eq!(sim.pending_events(), 3);
        let mut p = Greedy::default();
        let (b1, _) = sim.proceed(&mut p).unwrap();
        assert_eq!((b1.time, b1.events.len()), (SimTime::ZERO, 1));
        let (b2, _) = sim.proceed(&mut p).unwrap();
        assert_eq!((b2.time, b2.events.len()), (SimTime::from_secs(5), 1));
        let (b3, _) = sim.proceed(&mut p).unwrap();
        assert_eq!((b3.time, b3.events.len()), (SimTime::from_secs(10), 2));
    }

    #[test]
    fn amended_clone_matches_a_fresh_run() {
        let jobs = vec![Job::new(1, 2, 0, 10, 10), Job::new(2, 1, 5, 3, 3)];
        let mut sim = Simulation::start(EngineConfig::default(), platform(2), &workload(jobs)).unwrap();
        let mut p = Greedy::default();
        sim.advance_until(SimTime::from_secs(4), &mut p).unwrap();
        let mut branch = sim.clone();
        branch.amend_job(1, Job::new(2, 2, 5, 7, 7)).unwrap();
        branch.run(&mut p).unwrap();

        let fresh_jobs = vec![Job::new(1, 2, 0, 10, 10), Job::new(2, 2, 5, 7, 7)];
        let mut fresh = Simulation::start(EngineConfig::default(), platform(2), &workload(fresh_jobs)).unwrap();
        fresh.run(&mut Greedy::default()).unwrap();
        assert_eq!(branch.state().completed, fresh.state().completed);

        assert!(matches!(sim.amend_job(1, Job::new(2, 1, 6, 3, 3)), Err(SimError::Amend { .. })));
        assert!(matches!(sim.amend_job(1, Job::new(2, 3, 5, 3, 3)), Err(SimError::Amend { .. })));
        assert!(matches!(sim.amend_job(0, Job::new(1, 1, 0, 3, 3)), Err(SimError::Amend { .. })));
    }

    #[test]
    fn finishes_precede_arrivals_in_a_batch() {
        let w = workload(vec![Job::new(1, 1, 0, 10, 10), Job::new(2, 1, 10, 5, 5)]);
        let mut sim = Simulation::start(EngineConfig::default(), platform(1), &w).unwrap();
        let mut p = Greedy::default();
        sim.proceed(&mut p).unwrap();
        let (b, _) = sim.proceed(&mut p).unwrap();
        let kinds: Vec<_> = b.events.iter().map(|e| e.kind).collect();
        assert_eq!(kinds, [EventKind::JobFinish(0), EventKind::JobArrival(1)]);
        // freed node is visible to the arrival at the same instant
        assert_eq!(sim.state().running.get(&1).unwrap().start, SimTime::from_secs(10));
    }

    #[test]
    fn cadence_ticks_stop_with_the_work() {
        let w = workload(vec![Job::new(1, 1, 0, 1000, 1000)]);
        let cfg = EngineConfig { timeout: Some(SimTime::from_secs(300)), ..Default::default() };
        let mut sim = Simulation::start(cfg, platform(1), &w).unwrap();
        let mut p = Greedy::default();
        sim.run(&mut p).unwrap();
        let times: Vec<u64> = p.batches.iter().map(|b| b.0.as_micros() / 1_000_000).collect();
        assert_eq!(times, [0, 300, 600, 900, 1000]);
        assert_eq!(sim.clock(), SimTime::from_secs(1000));
    }

    #[test]
    fn no_ticks_when_event_driven() {
        let w = workload(vec![Job::new(1, 1, 0, 1000, 1000)]);
        let mut sim = Simulation::start(EngineConfig::default(), platform(1), &w).unwrap();
        let mut p = Greedy::default();
        sim.run(&mut p).unwrap();
        assert_eq!(p.batches.len(), 2);
    }

    fn overrun_run(policy: OverrunPolicy) -> JobRecord {
        let w = workload(vec![Job::new(1, 1, 0, 100, 150)]);
        let cfg = EngineConfig { overrun: policy, ..Default::default() };
        let r = run_simulation(cfg, platform(1), &w, &mut Greedy::default()).unwrap();
        r.job_records[0].clone()
    }

    #[test]
    fn overrun_terminate_and_continue() {
        let t = overrun_run(OverrunPolicy::Terminate);
        assert_eq!(t.outcome, JobOutcome::TerminatedOverrun);
        assert_eq!(t.finish_time, SimTime::from_secs(100));
        let c = overrun_run(OverrunPolicy::Continue);
        assert_eq!(c.outcome, JobOutcome::Completed);
        assert_eq!(c.finish_time, SimTime::from_secs(150));
    }

    #[test]
    fn dvfs_slows_runtime_and_can_cause_overrun() {
        let mut p = platform(1);
        std::sync::Arc::make_mut(&mut p.nodes[0].dvfs_profiles).get_mut("normal").unwrap().compute_speed = 0.5;
        let w = workload(vec![Job::new(1, 1, 0, 150, 100)]);
        let cfg = EngineConfig { overrun: OverrunPolicy::Terminate, ..Default::default() };
        let r = run_simulation(cfg, p, &w, &mut Greedy::default()).unwrap();
        assert_eq!(r.job_records[0].outcome, JobOutcome::TerminatedOverrun);
        assert_eq!(r.job_records[0].finish_time, SimTime::from_secs(150));
    }

    #[test]
    fn empty_workload_ends_at_start() {
        let cfg = EngineConfig { start_time: SimTime::from_secs(50), timeout: Some(SimTime::from_secs(300)), ..Default::default() };
        let mut sim = Simulation::start(cfg, platform(2), &workload(vec![])).unwrap();
        assert!(!sim.is_running());
        let (_, running) = sim.proceed(&mut Greedy::default()).unwrap();
        assert!(!running);
        let r = sim.finish().into_results().unwrap();
        assert_eq!(r.summary.total_energy, Nanojoules::ZERO);
        assert_eq!(r.summary.job_count, 0);
    }

    #[test]
    fn bad_decision_is_a_policy_fault() {
        struct Liar;
        impl Policy for Liar {
            fn decide(&mut self, s: &SimState, _: &EventBatch) -> Vec<Decision> {
                s.queue.iter().map(|&j| Decision::StartJob { job: j, nodes: vec![0] }).collect()
            }
        }
        let w = workload(vec![Job::new(1, 1, 0, 10, 10), Job::new(2, 1, 0, 10, 10)]);
        let err = run_simulation(EngineConfig::default(), platform(2), &w, &mut Liar).unwrap_err();
        assert!(matches!(err, SimError::PolicyFault { .. }), "{err}");
        assert!(err.to_string().contains("StartJob"));
    }

    #[test]
    fn oversized_job_rejected_at_start() {
        let w = workload(vec![Job::new(1, 3, 0, 10, 10)]);
        assert!(matches!(
            Simulation::start(EngineConfig::default(), platform(2), &w),
            Err(SimError::JobTooLarge { res: 3, nodes: 2, .. })
        ));
    }

    #[test]
    fn split_mode_delivers_events_one_by_one() {
        let w = workload(vec![Job::new(1, 1, 0, 5, 5), Job::new(2, 1, 0, 5, 5)]);
        let cfg = EngineConfig { split_simultaneous_events: true, ..Default::default() };
        let mut p = Greedy::default();
        run_simulation(cfg, platform(2), &w, &mut p).unwrap();
        assert_eq!(p.batches.len(), 4);
        assert!(p.batches.iter().all(|b| b.1 == 1));
    }
}
