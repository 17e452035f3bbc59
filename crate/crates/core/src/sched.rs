//! Scheduling policies: FCFS and EASY backfilling, each combined with a
//! power-state-management variant.
//!
//! Reservations are recomputed from scratch on every invocation. Node
//! choice for a job: already-active idle nodes, longest idle first, then
//! ascending id.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Decision, EventBatch, Policy, SimState};
use crate::platform::PowerState;
use crate::units::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Fcfs,
    Easy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsmVariant {
    /// All nodes stay on.
    Psus,
    /// Idle timeout shutdown plus proactive boot for reserved jobs.
    PsasAo,
    /// Power decisions come from an external power manager.
    PsasIpm,
}

/// One of the six `<algorithm>_<psm>` names accepted in configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AlgorithmName {
    pub algorithm: Algorithm,
    pub psm: PsmVariant,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown algorithm `{0}` (expected fcfs|easy followed by _psus, _psas_ao or _psas_ipm)")]
pub struct UnknownAlgorithm(pub String);

impl FromStr for AlgorithmName {
    type Err = UnknownAlgorithm;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (alg, psm) = s.split_once('_').ok_or_else(|| UnknownAlgorithm(s.to_string()))?;
        let algorithm = match alg {
            "fcfs" => Algorithm::Fcfs,
            "easy" => Algorithm::Easy,
            _ => return Err(UnknownAlgorithm(s.to_string())),
        };
        let psm = match psm {
            "psus" => PsmVariant::Psus,
            "psas_ao" => PsmVariant::PsasAo,
            "psas_ipm" => PsmVariant::PsasIpm,
            "psas" => {
                log::warn!("algorithm `{s}` is deprecated; interpreting as `{alg}_psas_ao`");
                PsmVariant::PsasAo
            }
            _ => return Err(UnknownAlgorithm(s.to_string())),
        };
        Ok(AlgorithmName { algorithm, psm })
    }
}

impl fmt::Display for AlgorithmName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let alg = match self.algorithm {
            Algorithm::Fcfs => "fcfs",
            Algorithm::Easy => "easy",
        };
        let psm = match self.psm {
            PsmVariant::Psus => "psus",
            PsmVariant::PsasAo => "psas_ao",
            PsmVariant::PsasIpm => "psas_ipm",
        };
        write!(f, "{alg}_{psm}")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyConfig {
    pub algorithm: Algorithm,
    pub psm: PsmVariant,
    /// Idle time after which PSAS-AO switches a node off.
    pub idle_timeout: SimTime,
    /// Count sleeping nodes as available after their boot delay when
    /// computing reservations.
    pub boot_lookahead: bool,
}

impl PolicyConfig {
    pub fn new(name: AlgorithmName) -> Self {
        PolicyConfig {
            algorithm: name.algorithm,
            psm: name.psm,
            idle_timeout: SimTime::from_secs(300),
            boot_lookahead: true,
        }
    }

    pub fn name(&self) -> AlgorithmName {
        AlgorithmName { algorithm: self.algorithm, psm: self.psm }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Reservation {
    pub job: usize,
    pub nodes: Vec<usize>,
    /// Earliest instant the job is guaranteed enough nodes.
    pub shadow: SimTime,
}

/// Result of the base scheduler, before power management.
#[derive(Clone, Debug, Default)]
pub struct Plan {
    pub decisions: Vec<Decision>,
    pub reservation: Option<Reservation>,
    /// First queued job that could not start.
    pub blocked_head: Option<usize>,
    /// Nodes handed to jobs in this invocation.
    pub allocated: Vec<usize>,
}

impl Plan {
    pub fn reserved(&self) -> impl Iterator<Item = usize> + '_ {
        self.reservation.iter().flat_map(|r| r.nodes.iter().copied())
    }

    pub fn is_protected(&self, node: usize) -> bool {
        self.allocated.contains(&node) || self.reservation.as_ref().is_some_and(|r| r.nodes.contains(&node))
    }
}

/// Idle nodes in allocation preference order.
fn idle_nodes(state: &SimState) -> Vec<usize> {
    let mut v: Vec<_> = state.platform.nodes.iter().filter(|n| n.is_idle()).map(|n| (n.idle_since, n.id)).collect();
    v.sort_unstable();
    v.into_iter().map(|(_, id)| id).collect()
}

fn start(plan: &mut Plan, free: &mut Vec<usize>, job: usize, picked: Vec<usize>) {
    free.retain(|n| !picked.contains(n));
    plan.allocated.extend(picked.iter().copied());
    let mut nodes = picked;
    nodes.sort_unstable();
    plan.decisions.push(Decision::StartJob { job, nodes });
}

/// Starts jobs strictly in queue order while they fit; returns the free
/// nodes left over.
fn start_from_head(state: &SimState, plan: &mut Plan) -> Vec<usize> {
    let mut free = idle_nodes(state);
    for &j in &state.queue {
        let res = state.job(j).res as usize;
        if res > free.len() {
            plan.blocked_head = Some(j);
            break;
        }
        let picked = free[..res].to_vec();
        start(plan, &mut free, j, picked);
    }
    free
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum NodeClass {
    Busy,
    Booting,
    Free,
    ShuttingDown,
    Sleeping,
}

/// Earliest instant at which enough nodes are available for `job`, with
/// running jobs assumed to end at their requested wall-time.
pub fn compute_reservation(state: &SimState, cfg: &PolicyConfig, job: usize, plan: &Plan) -> Option<Reservation> {
    let now = state.clock;
    let res = state.job(job).res as usize;
    let reqtime_end = |j: usize| {
        let r = state.running.get(&j).map(|r| r.start).unwrap_or(now);
        (r + state.job(j).reqtime).max(now)
    };
    let mut candidates: Vec<(SimTime, NodeClass, usize)> = Vec::new();
    for n in &state.platform.nodes {
        let boot = n.switch_on_delay().filter(|_| cfg.boot_lookahead);
        let entry = if let Some(j) = n.running_job {
            Some((reqtime_end(j), NodeClass::Busy))
        } else if plan.allocated.contains(&n.id) {
            let j = plan
                .decisions
                .iter()
                .find_map(|d| match d {
                    Decision::StartJob { job, nodes } if nodes.contains(&n.id) => Some(*job),
                    _ => None,
                })
                .expect("allocated node has a start decision");
            Some((now + state.job(j).reqtime, NodeClass::Busy))
        } else {
            match n.current_state {
                PowerState::Active => Some((now, NodeClass::Free)),
                PowerState::SwitchingOn => n.pending_transition.map(|t| (t.completes_at, NodeClass::Booting)),
                PowerState::Sleeping => boot.map(|d| (now + d, NodeClass::Sleeping)),
                PowerState::SwitchingOff => boot
                    .and_then(|d| n.pending_transition.map(|t| (t.completes_at + d, NodeClass::ShuttingDown))),
            }
        };
        if let Some((t, class)) = entry {
            candidates.push((t, class, n.id));
        }
    }
    if candidates.len() < res {
        return None;
    }
    candidates.sort_unstable();
    let shadow = candidates[res - 1].0;
    // Among nodes available by the shadow time, reserve busy ones first so
    // that currently free nodes stay usable for long backfill jobs.
    candidates.retain(|c| c.0 <= shadow);
    candidates.sort_unstable_by_key(|&(_, class, id)| (class, id));
    let mut nodes: Vec<usize> = candidates.into_iter().take(res).map(|(_, _, id)| id).collect();
    nodes.sort_unstable();
    Some(Reservation { job, nodes, shadow })
}

fn push_reservation(state: &SimState, cfg: &PolicyConfig, plan: &mut Plan) {
    let Some(h) = plan.blocked_head else { return };
    plan.reservation = compute_reservation(state, cfg, h, plan);
    if let Some(r) = &plan.reservation {
        plan.decisions.push(Decision::Reserve { job: r.job, nodes: r.nodes.clone(), est_start: r.shadow });
    }
}

/// Strict queue order; stops at the first job that does not fit.
pub fn fcfs_decide(state: &SimState, cfg: &PolicyConfig) -> Plan {
    let mut plan = Plan::default();
    start_from_head(state, &mut plan);
    push_reservation(state, cfg, &mut plan);
    plan
}

/// FCFS plus one reservation for the first blocked job; later jobs
/// backfill when they end by the shadow time or avoid the reserved nodes.
pub fn easy_decide(state: &SimState, cfg: &PolicyConfig) -> Plan {
    let mut plan = Plan::default();
    let mut free = start_from_head(state, &mut plan);
    let Some(head) = plan.blocked_head else { return plan };
    push_reservation(state, cfg, &mut plan);
    let now = state.clock;
    let shadow = plan.reservation.as_ref().map(|r| r.shadow);
    let reserved: Vec<usize> = plan.reserved().collect();
    for &j in state.queue.iter().skip_while(|&&j| j != head).skip(1) {
        if free.is_empty() {
            break;
        }
        let job = state.job(j);
        let res = job.res as usize;
        if res > free.len() {
            continue;
        }
        let ends_in_time = shadow.is_none_or(|s| now + job.reqtime <= s);
        let outside = free.iter().filter(|n| !reserved.contains(n)).count();
        let picked = if outside >= res {
            free.iter().copied().filter(|n| !reserved.contains(n)).take(res).collect()
        } else if ends_in_time {
            let inside = free.iter().copied().filter(|n| reserved.contains(n));
            free.iter().copied().filter(|n| !reserved.contains(n)).chain(inside).take(res).collect()
        } else {
            continue;
        };
        start(&mut plan, &mut free, j, picked);
    }
    plan
}

/// Source of power decisions for the PSAS+IPM variant.
pub trait PowerManager: Send {
    fn decide(&mut self, state: &SimState, plan: &Plan) -> Vec<Decision>;
}

/// Decisions that bring the powered-on count (active + switching on)
/// toward `target`. Switches on the lowest-id sleeping nodes, or switches
/// off the longest-idle nodes not in `protected`. Shortfalls are dropped.
pub fn target_count_decisions(state: &SimState, target: usize, protected: &dyn Fn(usize) -> bool) -> Vec<Decision> {
    let nodes = &state.platform.nodes;
    let powered = nodes
        .iter()
        .filter(|n| matches!(n.current_state, PowerState::Active | PowerState::SwitchingOn))
        .count();
    if target > powered {
        nodes
            .iter()
            .filter(|n| n.current_state == PowerState::Sleeping && n.switch_on_delay().is_some())
            .take(target - powered)
            .map(|n| Decision::SwitchOn { node: n.id })
            .collect()
    } else {
        let mut idle: Vec<_> = nodes
            .iter()
            .filter(|n| {
                n.is_idle() && n.reserved_for.is_none() && !protected(n.id) && n.switch_off_delay().is_some()
            })
            .map(|n| (n.idle_since, n.id))
            .collect();
        idle.sort_unstable();
        idle.into_iter().take(powered - target).map(|(_, id)| Decision::SwitchOff { node: id }).collect()
    }
}

/// Scripted power manager: holds a piecewise-constant powered-on target.
#[derive(Clone, Debug)]
pub struct ScriptedTargets {
    /// (from time, target count), sorted by time.
    pub steps: Vec<(SimTime, usize)>,
}

impl PowerManager for ScriptedTargets {
    fn decide(&mut self, state: &SimState, plan: &Plan) -> Vec<Decision> {
        let Some(&(_, target)) = self.steps.iter().rev().find(|(t, _)| *t <= state.clock) else {
            return Vec::new();
        };
        target_count_decisions(state, target, &|n| plan.is_protected(n))
    }
}

/// Base scheduler plus power-state management.
pub struct Scheduler {
    pub config: PolicyConfig,
    power_manager: Option<Box<dyn PowerManager>>,
    wakeup: Option<SimTime>,
}

impl Scheduler {
    pub fn new(config: PolicyConfig) -> Self {
        Scheduler { config, power_manager: None, wakeup: None }
    }

    pub fn with_power_manager(mut self, pm: Box<dyn PowerManager>) -> Self {
        self.power_manager = Some(pm);
        self
    }

    fn base(&self, state: &SimState) -> Plan {
        match self.config.algorithm {
            Algorithm::Fcfs => fcfs_decide(state, &self.config),
            Algorithm::Easy => easy_decide(state, &self.config),
        }
    }
}

/// Appends the power decisions of the configured variant. Returns the
/// full decision list and the next instant PSAS-AO needs waking.
pub fn apply_psm(
    state: &SimState,
    cfg: &PolicyConfig,
    plan: Plan,
    manager: Option<&mut (dyn PowerManager + '_)>,
) -> (Vec<Decision>, Option<SimTime>) {
    let now = state.clock;
    let mut wakeup: Option<SimTime> = None;
    let mut power = Vec::new();
    match cfg.psm {
        PsmVariant::Psus => {}
        PsmVariant::PsasIpm => {
            if let Some(pm) = manager {
                power = pm.decide(state, &plan);
            }
        }
        PsmVariant::PsasAo => {
            let nodes = &state.platform.nodes;
            if let Some(r) = &plan.reservation {
                for &n in &r.nodes {
                    let node = &nodes[n];
                    if node.current_state != PowerState::Sleeping {
                        continue;
                    }
                    let Some(d) = node.switch_on_delay() else { continue };
                    if r.shadow <= now + d {
                        power.push(Decision::SwitchOn { node: n });
                    } else {
                        let at = r.shadow - d;
                        wakeup = Some(wakeup.map_or(at, |w| w.min(at)));
                    }
                }
            } else if let Some(h) = plan.blocked_head {
                // Not enough nodes are reachable under the current view:
                // boot the missing ones right away.
                let reachable = nodes
                    .iter()
                    .filter(|n| n.current_state == PowerState::Active || n.current_state == PowerState::SwitchingOn)
                    .count();
                let need = (state.job(h).res as usize).saturating_sub(reachable);
                power.extend(
                    nodes
                        .iter()
                        .filter(|n| n.current_state == PowerState::Sleeping && n.switch_on_delay().is_some())
                        .take(need)
                        .map(|n| Decision::SwitchOn { node: n.id }),
                );
            }
            for n in nodes {
                if !n.is_idle() || plan.is_protected(n.id) || n.switch_off_delay().is_none() {
                    continue;
                }
                let due = n.idle_since + cfg.idle_timeout;
                if due <= now {
                    power.push(Decision::SwitchOff { node: n.id });
                } else {
                    wakeup = Some(wakeup.map_or(due, |w| w.min(due)));
                }
            }
        }
    }
    // Guard every power decision against the state the engine will see.
    power.retain(|d| match *d {
        Decision::SwitchOff { node } => {
            state.platform.nodes.get(node).is_some_and(|n| n.is_idle()) && !plan.is_protected(node)
        }
        Decision::SwitchOn { node } => {
            state.platform.nodes.get(node).is_some_and(|n| n.current_state == PowerState::Sleeping)
        }
        _ => false,
    });
    let mut seen = Vec::new();
    power.retain(|d| match d {
        Decision::SwitchOff { node } | Decision::SwitchOn { node } if seen.contains(node) => false,
        Decision::SwitchOff { node } | Decision::SwitchOn { node } => {
            seen.push(*node);
            true
        }
        _ => true,
    });
    let mut decisions = plan.decisions;
    decisions.extend(power);
    (decisions, wakeup)
}

impl Policy for Scheduler {
    fn decide(&mut self, state: &SimState, _batch: &EventBatch) -> Vec<Decision> {
        let plan = self.base(state);
        let (decisions, wakeup) = apply_psm(state, &self.config, plan, self.power_manager.as_deref_mut());
        self.wakeup = wakeup;
        decisions
    }

    fn next_wakeup(&self, _state: &SimState) -> Option<SimTime> {
        self.wakeup
    }
}
