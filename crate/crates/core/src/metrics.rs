//! Energy accounting from node state traces and scheduling metrics.
//!
//! Every trace interval contributes `duration_µs × power_mW` nanojoules.
//! All sums are integer, so the total equals the sum over states exactly.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{JobOutcome, JobRecord, PowerTrace};
use crate::platform::{Platform, PowerState};
use crate::units::{Nanojoules, SimTime};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceState {
    Computing,
    Idle,
    Sleeping,
    SwitchingOn,
    SwitchingOff,
}

impl TraceState {
    pub const ALL: [TraceState; 5] = [
        TraceState::Computing,
        TraceState::Idle,
        TraceState::Sleeping,
        TraceState::SwitchingOn,
        TraceState::SwitchingOff,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TraceState::Computing => "computing",
            TraceState::Idle => "idle",
            TraceState::Sleeping => "sleeping",
            TraceState::SwitchingOn => "switching_on",
            TraceState::SwitchingOff => "switching_off",
        }
    }

    /// The platform power state whose draw applies.
    pub fn power_state(self) -> PowerState {
        match self {
            TraceState::Computing | TraceState::Idle => PowerState::Active,
            TraceState::Sleeping => PowerState::Sleeping,
            TraceState::SwitchingOn => PowerState::SwitchingOn,
            TraceState::SwitchingOff => PowerState::SwitchingOff,
        }
    }

    pub fn is_waste(self) -> bool {
        matches!(self, TraceState::Idle | TraceState::SwitchingOn | TraceState::SwitchingOff)
    }
}

impl fmt::Display for TraceState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StateInterval {
    pub state: TraceState,
    pub begin: SimTime,
    pub end: SimTime,
}

impl StateInterval {
    pub fn duration(&self) -> SimTime {
        self.end - self.begin
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeStateTrace {
    pub node: usize,
    pub intervals: Vec<StateInterval>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AccountingError {
    #[error("node {node}: gap or overlap in trace at {at}")]
    NotContiguous { node: usize, at: SimTime },
    #[error("node {node}: empty or inverted interval at {at}")]
    EmptyInterval { node: usize, at: SimTime },
    #[error("node {node}: trace spans [{begin}, {end}) but the run spans [{run_begin}, {run_end})")]
    Span { node: usize, begin: SimTime, end: SimTime, run_begin: SimTime, run_end: SimTime },
    #[error("node {node}: job execution falls outside active intervals")]
    JobOutsideActive { node: usize },
    #[error("node {node}: no such node in platform")]
    UnknownNode { node: usize },
    #[error("trace energy {traces:?} disagrees with accrued energy {accrued:?}")]
    Mismatch { traces: Nanojoules, accrued: Nanojoules },
}

/// Refines power-state traces into computing/idle using the job records.
pub fn split_power_traces(
    power: &[PowerTrace],
    records: &[JobRecord],
) -> Result<Vec<NodeStateTrace>, AccountingError> {
    let mut busy: Vec<Vec<(SimTime, SimTime)>> = vec![Vec::new(); power.len()];
    for r in records {
        for &n in &r.nodes {
            let list = busy.get_mut(n).ok_or(AccountingError::UnknownNode { node: n })?;
            if r.finish_time > r.start_time {
                list.push((r.start_time, r.finish_time));
            }
        }
    }
    power
        .iter()
        .zip(busy.iter_mut())
        .map(|(trace, jobs)| {
            jobs.sort_unstable();
            let expected: u64 = jobs.iter().map(|(b, e)| (*e - *b).0).sum();
            let mut covered = 0u64;
            let mut out: Vec<StateInterval> = Vec::new();
            let mut push = |state, begin: SimTime, end: SimTime| {
                if end <= begin {
                    return;
                }
                match out.last_mut() {
                    Some(last) if last.state == state && last.end == begin => last.end = end,
                    _ => out.push(StateInterval { state, begin, end }),
                }
            };
            for iv in &trace.intervals {
                let simple = match iv.state {
                    PowerState::Active => None,
                    PowerState::Sleeping => Some(TraceState::Sleeping),
                    PowerState::SwitchingOn => Some(TraceState::SwitchingOn),
                    PowerState::SwitchingOff => Some(TraceState::SwitchingOff),
                };
                if let Some(s) = simple {
                    push(s, iv.begin, iv.end);
                    continue;
                }
                let mut cursor = iv.begin;
                for &(jb, je) in jobs.iter() {
                    if je <= iv.begin || jb >= iv.end {
                        continue;
                    }
                    let b = jb.max(iv.begin).max(cursor);
                    let e = je.min(iv.end);
                    if e <= b {
                        continue;
                    }
                    push(TraceState::Idle, cursor, b);
                    push(TraceState::Computing, b, e);
                    covered += (e - b).0;
                    cursor = e;
                }
                push(TraceState::Idle, cursor, iv.end);
            }
            if covered != expected {
                return Err(AccountingError::JobOutsideActive { node: trace.node });
            }
            Ok(NodeStateTrace { node: trace.node, intervals: out })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EnergyBreakdown {
    pub total: Nanojoules,
    pub by_state: BTreeMap<TraceState, Nanojoules>,
}

fn check_tiling(traces: &[NodeStateTrace], span: Option<(SimTime, SimTime)>) -> Result<(), AccountingError> {
    let mut run_span = span;
    for t in traces {
        let (Some(first), Some(last)) = (t.intervals.first(), t.intervals.last()) else {
            if let Some((b, e)) = run_span {
                if e > b {
                    return Err(AccountingError::Span { node: t.node, begin: b, end: b, run_begin: b, run_end: e });
                }
            }
            continue;
        };
        for w in t.intervals.windows(2) {
            if w[0].end != w[1].begin {
                return Err(AccountingError::NotContiguous { node: t.node, at: w[0].end });
            }
        }
        if let Some(iv) = t.intervals.iter().find(|iv| iv.begin >= iv.end) {
            return Err(AccountingError::EmptyInterval { node: t.node, at: iv.begin });
        }
        match run_span {
            None => run_span = Some((first.begin, last.end)),
            Some((b, e)) if (b, e) != (first.begin, last.end) => {
                return Err(AccountingError::Span {
                    node: t.node,
                    begin: first.begin,
                    end: last.end,
                    run_begin: b,
                    run_end: e,
                })
            }
            _ => {}
        }
    }
    Ok(())
}

/// Exact per-state energy. Traces must tile one common span.
pub fn compute_energy(traces: &[NodeStateTrace], platform: &Platform) -> Result<EnergyBreakdown, AccountingError> {
    check_tiling(traces, None)?;
    let mut by_state: BTreeMap<TraceState, Nanojoules> = TraceState::ALL.iter().map(|s| (*s, Nanojoules::ZERO)).collect();
    for t in traces {
        let node = platform.node(t.node).ok_or(AccountingError::UnknownNode { node: t.node })?;
        for iv in &t.intervals {
            let e = Nanojoules::of(node.power(iv.state.power_state()), iv.duration());
            *by_state.get_mut(&iv.state).expect("all states present") += e;
        }
    }
    let total = by_state.values().copied().sum();
    Ok(EnergyBreakdown { total, by_state })
}

pub fn compute_waste(by_state: &BTreeMap<TraceState, Nanojoules>) -> Nanojoules {
    by_state.iter().filter(|(s, _)| s.is_waste()).map(|(_, e)| *e).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Perf {
    /// Microseconds.
    pub mean_waiting: f64,
    pub max_waiting: SimTime,
    pub utilization: f64,
    pub makespan: SimTime,
}

pub fn compute_perf(records: &[JobRecord], num_nodes: usize, start_time: SimTime) -> Perf {
    if records.is_empty() {
        return Perf { mean_waiting: 0.0, max_waiting: SimTime::ZERO, utilization: 0.0, makespan: SimTime::ZERO };
    }
    let total_wait: u128 = records.iter().map(|r| r.waiting().0 as u128).sum();
    let max_waiting = records.iter().map(JobRecord::waiting).max().unwrap_or_default();
    let first_start = records.iter().map(|r| r.start_time).min().unwrap_or(start_time);
    let last_finish = records.iter().map(|r| r.finish_time).max().unwrap_or(start_time);
    let node_time: u128 = records.iter().map(|r| (r.finish_time - r.start_time).0 as u128 * r.res as u128).sum();
    let horizon = last_finish.saturating_sub(start_time).0 as u128 * num_nodes as u128;
    let utilization = if horizon == 0 { 0.0 } else { node_time as f64 / horizon as f64 };
    Perf {
        mean_waiting: total_wait as f64 / records.len() as f64,
        max_waiting,
        utilization,
        makespan: last_finish - first_start,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub total_energy: Nanojoules,
    pub energy_by_state: BTreeMap<TraceState, Nanojoules>,
    pub wasted_energy: Nanojoules,
    /// Microseconds.
    pub mean_waiting: f64,
    pub max_waiting: SimTime,
    pub utilization: f64,
    pub makespan: SimTime,
    pub job_count: usize,
    pub terminated_count: usize,
    pub start_time: SimTime,
    pub end_time: SimTime,
}

pub fn summarize(
    traces: &[NodeStateTrace],
    records: &[JobRecord],
    platform: &Platform,
    start_time: SimTime,
    end_time: SimTime,
) -> Result<Summary, AccountingError> {
    check_tiling(traces, Some((start_time, end_time)))?;
    let energy = compute_energy(traces, platform)?;
    let perf = compute_perf(records, platform.num_nodes(), start_time);
    Ok(Summary {
        total_energy: energy.total,
        wasted_energy: compute_waste(&energy.by_state),
        energy_by_state: energy.by_state,
        mean_waiting: perf.mean_waiting,
        max_waiting: perf.max_waiting,
        utilization: perf.utilization,
        makespan: perf.makespan,
        job_count: records.len(),
        terminated_count: records.iter().filter(|r| r.outcome == JobOutcome::TerminatedOverrun).count(),
        start_time,
        end_time,
    })
}
