//! Simulated machines: power-state machines with transition delays, DVFS
//! profiles, and the `platform.json` format.
//!
//! Transitions are stored in one canonical form: `active → sleeping` and
//! `sleeping → active`, each carrying the total delay. The transient
//! states `switching_off` / `switching_on` last exactly that delay. Files
//! may instead spell a transition through the transient state
//! (`active → switching_off`, `switching_off → sleeping`); the delays are
//! summed on parse.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::units::{Milliwatts, SimTime};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerState {
    Active,
    Sleeping,
    SwitchingOn,
    SwitchingOff,
}

impl PowerState {
    pub const ALL: [PowerState; 4] = [
        PowerState::Active,
        PowerState::Sleeping,
        PowerState::SwitchingOn,
        PowerState::SwitchingOff,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PowerState::Active => "active",
            PowerState::Sleeping => "sleeping",
            PowerState::SwitchingOn => "switching_on",
            PowerState::SwitchingOff => "switching_off",
        }
    }

    pub fn is_transient(self) -> bool {
        matches!(self, PowerState::SwitchingOn | PowerState::SwitchingOff)
    }
}

impl fmt::Display for PowerState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PowerState {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "active" => Ok(PowerState::Active),
            "sleeping" => Ok(PowerState::Sleeping),
            "switching_on" => Ok(PowerState::SwitchingOn),
            "switching_off" => Ok(PowerState::SwitchingOff),
            _ => Err(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DvfsProfile {
    pub name: String,
    pub power_active: Milliwatts,
    pub compute_speed: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PowerStateDef {
    pub state: PowerState,
    pub power: Milliwatts,
    /// Explicit compute speed; for `active`, `None` inherits the DVFS profile.
    pub speed: Option<f64>,
    /// Canonical transitions: target → total delay.
    pub transitions: BTreeMap<PowerState, SimTime>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TransitionTicket {
    pub node_id: usize,
    pub completes_at: SimTime,
    pub transient_state: PowerState,
    pub target: PowerState,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    /// Dense index, 0..num_nodes.
    pub id: usize,
    /// Identifier as written in the platform file.
    pub external_id: u64,
    /// Static description, shared between clones.
    pub dvfs_profiles: Arc<BTreeMap<String, DvfsProfile>>,
    pub dvfs_mode: Arc<str>,
    pub states: Arc<BTreeMap<PowerState, PowerStateDef>>,
    pub initial_state: PowerState,

    pub current_state: PowerState,
    pub state_since: SimTime,
    pub running_job: Option<usize>,
    pub reserved_for: Option<usize>,
    /// When the node last became idle (active with no job).
    pub idle_since: SimTime,
    pub pending_transition: Option<TransitionTicket>,
}

impl Node {
    pub fn power(&self, state: PowerState) -> Milliwatts {
        self.states.get(&state).map(|s| s.power).unwrap_or_default()
    }

    pub fn active_power(&self) -> Milliwatts {
        self.power(PowerState::Active)
    }

    pub fn current_power(&self) -> Milliwatts {
        self.power(self.current_state)
    }

    pub fn transition_delay(&self, from: PowerState, to: PowerState) -> Option<SimTime> {
        self.states.get(&from)?.transitions.get(&to).copied()
    }

    pub fn switch_on_delay(&self) -> Option<SimTime> {
        self.transition_delay(PowerState::Sleeping, PowerState::Active)
    }

    pub fn switch_off_delay(&self) -> Option<SimTime> {
        self.transition_delay(PowerState::Active, PowerState::Sleeping)
    }

    pub fn is_idle(&self) -> bool {
        self.current_state == PowerState::Active && self.running_job.is_none()
    }

    pub fn is_computing(&self) -> bool {
        self.running_job.is_some()
    }

    /// Speed of the active state; an explicit state value wins over the
    /// DVFS profile.
    pub fn active_speed(&self) -> f64 {
        self.states
            .get(&PowerState::Active)
            .and_then(|s| s.speed)
            .or_else(|| self.dvfs_profiles.get(&*self.dvfs_mode).map(|p| p.compute_speed))
            .unwrap_or(0.0)
    }

    pub fn effective_speed(&self) -> f64 {
        if self.current_state == PowerState::Active {
            self.active_speed()
        } else {
            0.0
        }
    }

    fn reset(&mut self, start: SimTime) {
        self.current_state = self.initial_state;
        self.state_since = start;
        self.running_job = None;
        self.reserved_for = None;
        self.idle_since = start;
        self.pending_transition = None;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Platform {
    pub nodes: Vec<Node>,
}

#[derive(Debug, Error)]
pub enum PlatformError {
    #[error("malformed platform JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("platform declares no nodes")]
    Empty,
    #[error("node {node}: duplicate node id")]
    DuplicateId { node: u64 },
    #[error("node {node}: unknown state name `{name}` in {field}")]
    UnknownState { node: u64, field: String, name: String },
    #[error("node {node}: dvfs_mode `{mode}` has no matching entry in dvfs_profiles")]
    MissingProfile { node: u64, mode: String },
    #[error("node {node}: negative or invalid power in {field}")]
    InvalidPower { node: u64, field: String },
    #[error("node {node}: non-positive compute speed in {field}")]
    NonPositiveSpeed { node: u64, field: String },
    #[error("node {node}: {field} must have compute speed 0")]
    NonZeroSpeed { node: u64, field: String },
    #[error("node {node}: negative or invalid delay in {field}")]
    InvalidDelay { node: u64, field: String },
    #[error("node {node}: transition {from} -> {to} is not allowed")]
    InvalidTransition { node: u64, from: PowerState, to: PowerState },
    #[error("node {node}: states.active is required")]
    MissingActive { node: u64 },
    #[error("node {node}: states.active.power missing and dvfs profile has none")]
    MissingActivePower { node: u64 },
    #[error("node {node}: transition needs state `{state}` to be declared")]
    MissingTransientState { node: u64, state: PowerState },
    #[error("node {node}: initial_state `{state}` is not a stable declared state")]
    BadInitialState { node: u64, state: String },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TransitionError {
    #[error("node {node}: no transition from {from} to {to}")]
    Illegal { node: usize, from: PowerState, to: PowerState },
    #[error("node {node}: busy running job {job}")]
    Busy { node: usize, job: usize },
    #[error("node {node}: already in transient state {state}")]
    AlreadyTransitioning { node: usize, state: PowerState },
    #[error("node {node}: no such node")]
    NoSuchNode { node: usize },
}

// ---- file format -------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct RawPlatform {
    nodes: Vec<RawNode>,
}

#[derive(Serialize, Deserialize)]
struct RawNode {
    id: u64,
    #[serde(default)]
    dvfs_profiles: BTreeMap<String, RawProfile>,
    dvfs_mode: String,
    states: BTreeMap<String, RawState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    initial_state: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct RawProfile {
    power: f64,
    speed: f64,
}

#[derive(Serialize, Deserialize)]
struct RawState {
    #[serde(default)]
    power: Option<f64>,
    #[serde(default)]
    speed: Option<f64>,
    #[serde(default)]
    transitions: BTreeMap<String, f64>,
}

pub fn parse_platform(bytes: &[u8]) -> Result<Platform, PlatformError> {
    let raw: RawPlatform = serde_json::from_slice(bytes)?;
    Platform::from_raw(raw)
}

impl Platform {
    fn from_raw(raw: RawPlatform) -> Result<Self, PlatformError> {
        if raw.nodes.is_empty() {
            return Err(PlatformError::Empty);
        }
        let mut nodes = raw
            .nodes
            .into_iter()
            .map(build_node)
            .collect::<Result<Vec<_>, _>>()?;
        nodes.sort_by_key(|n| n.external_id);
        for w in nodes.windows(2) {
            if w[0].external_id == w[1].external_id {
                return Err(PlatformError::DuplicateId { node: w[0].external_id });
            }
        }
        for (i, n) in nodes.iter_mut().enumerate() {
            n.id = i;
        }
        Ok(Platform { nodes })
    }

    /// `count` identical nodes with ids 0..count.
    pub fn homogeneous(count: usize, spec: &NodeSpec) -> Self {
        let proto = spec.build(0, 0);
        let nodes = (0..count).map(|i| Node { id: i, external_id: i as u64, ..proto.clone() }).collect();
        Platform { nodes }
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, id: usize) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn max_active_power(&self) -> Milliwatts {
        self.nodes.iter().map(Node::active_power).max().unwrap_or_default()
    }

    /// Puts every node back into its initial state at `start`.
    pub fn reset(&mut self, start: SimTime) {
        for n in &mut self.nodes {
            n.reset(start);
        }
    }

    pub fn to_json(&self) -> String {
        let raw = RawPlatform {
            nodes: self.nodes.iter().map(node_to_raw).collect(),
        };
        serde_json::to_string_pretty(&raw).expect("platform serializes")
    }

    pub fn request_transition(
        &mut self,
        node_id: usize,
        target: PowerState,
        now: SimTime,
    ) -> Result<TransitionTicket, TransitionError> {
        let node = self
            .nodes
            .get_mut(node_id)
            .ok_or(TransitionError::NoSuchNode { node: node_id })?;
        if node.current_state.is_transient() {
            return Err(TransitionError::AlreadyTransitioning {
                node: node_id,
                state: node.current_state,
            });
        }
        if let Some(job) = node.running_job {
            return Err(TransitionError::Busy { node: node_id, job });
        }
        let from = node.current_state;
        let delay = node
            .transition_delay(from, target)
            .ok_or(TransitionError::Illegal { node: node_id, from, to: target })?;
        let transient_state = match target {
            PowerState::Active => PowerState::SwitchingOn,
            PowerState::Sleeping => PowerState::SwitchingOff,
            _ => return Err(TransitionError::Illegal { node: node_id, from, to: target }),
        };
        let ticket = TransitionTicket {
            node_id,
            completes_at: now + delay,
            transient_state,
            target,
        };
        node.current_state = transient_state;
        node.state_since = now;
        node.reserved_for = None;
        node.pending_transition = Some(ticket);
        Ok(ticket)
    }

    /// Finishes the node's pending transition. Returns the new state.
    pub fn complete_transition(&mut self, node_id: usize, now: SimTime) -> Option<PowerState> {
        let node = self.nodes.get_mut(node_id)?;
        let ticket = node.pending_transition.take()?;
        node.current_state = ticket.target;
        node.state_since = now;
        if ticket.target == PowerState::Active {
            node.idle_since = now;
        }
        Some(ticket.target)
    }
}

fn watts(node: u64, field: &str, w: f64) -> Result<Milliwatts, PlatformError> {
    Milliwatts::from_watts_f64(w).ok_or_else(|| PlatformError::InvalidPower {
        node,
        field: field.to_string(),
    })
}

fn delay(node: u64, field: &str, s: f64) -> Result<SimTime, PlatformError> {
    SimTime::from_secs_f64(s).ok_or_else(|| PlatformError::InvalidDelay {
        node,
        field: field.to_string(),
    })
}

fn state_name(node: u64, field: &str, name: &str) -> Result<PowerState, PlatformError> {
    name.parse().map_err(|_| PlatformError::UnknownState {
        node,
        field: field.to_string(),
        name: name.to_string(),
    })
}

fn build_node(raw: RawNode) -> Result<Node, PlatformError> {
    let id = raw.id;
    let mut profiles = BTreeMap::new();
    for (name, p) in &raw.dvfs_profiles {
        let field = format!("dvfs_profiles.{name}");
        let power_active = watts(id, &field, p.power)?;
        if !(p.speed.is_finite() && p.speed > 0.0) {
            return Err(PlatformError::NonPositiveSpeed { node: id, field });
        }
        profiles.insert(
            name.clone(),
            DvfsProfile { name: name.clone(), power_active, compute_speed: p.speed },
        );
    }
    let profile = profiles.get(&raw.dvfs_mode).ok_or_else(|| PlatformError::MissingProfile {
        node: id,
        mode: raw.dvfs_mode.clone(),
    })?;

    // First pass: declared states, powers, speeds.
    let mut declared: BTreeMap<PowerState, (Milliwatts, Option<f64>)> = BTreeMap::new();
    for (name, s) in &raw.states {
        let state = state_name(id, "states", name)?;
        let field = format!("states.{name}");
        let power = match (s.power, state) {
            (Some(w), _) => watts(id, &format!("{field}.power"), w)?,
            (None, PowerState::Active) => profile.power_active,
            (None, _) => {
                return Err(PlatformError::InvalidPower { node: id, field: format!("{field}.power") })
            }
        };
        if let Some(v) = s.speed {
            if state == PowerState::Active {
                if !(v.is_finite() && v > 0.0) {
                    return Err(PlatformError::NonPositiveSpeed { node: id, field: format!("{field}.speed") });
                }
            } else if v != 0.0 {
                return Err(PlatformError::NonZeroSpeed { node: id, field: format!("{field}.speed") });
            }
        }
        declared.insert(state, (power, s.speed));
    }
    if !declared.contains_key(&PowerState::Active) {
        return Err(PlatformError::MissingActive { node: id });
    }

    // Second pass: raw edges, all targets must be declared.
    let mut edges: BTreeMap<(PowerState, PowerState), SimTime> = BTreeMap::new();
    for (name, s) in &raw.states {
        let from = state_name(id, "states", name)?;
        for (target, secs) in &s.transitions {
            let field = format!("states.{name}.transitions");
            let to = state_name(id, &field, target)?;
            if !declared.contains_key(&to) {
                return Err(PlatformError::UnknownState { node: id, field, name: target.clone() });
            }
            edges.insert((from, to), delay(id, &format!("{field}.{target}"), *secs)?);
        }
    }

    let mut canonical: BTreeMap<(PowerState, PowerState), SimTime> = BTreeMap::new();
    for (&(from, to), &d) in &edges {
        use PowerState::*;
        match (from, to) {
            (Active, Sleeping) | (Sleeping, Active) => {
                let transient = if to == Active { SwitchingOn } else { SwitchingOff };
                if d > SimTime::ZERO && !declared.contains_key(&transient) {
                    return Err(PlatformError::MissingTransientState { node: id, state: transient });
                }
                *canonical.entry((from, to)).or_default() = d;
            }
            (Active, SwitchingOff) | (Sleeping, SwitchingOn) => {
                let (transient, end) = if to == SwitchingOn { (SwitchingOn, Active) } else { (SwitchingOff, Sleeping) };
                let tail = edges
                    .get(&(transient, end))
                    .copied()
                    .ok_or(PlatformError::InvalidTransition { node: id, from: transient, to: end })?;
                if edges.contains_key(&(from, end)) {
                    return Err(PlatformError::InvalidTransition { node: id, from, to: end });
                }
                canonical.insert((from, end), d + tail);
            }
            (SwitchingOn, Active) | (SwitchingOff, Sleeping) => {
                let start = if from == SwitchingOn { Sleeping } else { Active };
                if !edges.contains_key(&(start, from)) {
                    return Err(PlatformError::InvalidTransition { node: id, from: start, to: from });
                }
            }
            _ => return Err(PlatformError::InvalidTransition { node: id, from, to }),
        }
    }

    let states = declared
        .into_iter()
        .map(|(state, (power, speed))| {
            let transitions = canonical
                .iter()
                .filter(|((f, _), _)| *f == state)
                .map(|((_, t), d)| (*t, *d))
                .collect();
            (state, PowerStateDef { state, power, speed, transitions })
        })
        .collect::<BTreeMap<_, _>>();

    let initial_state = match &raw.initial_state {
        None => PowerState::Active,
        Some(s) => match s.parse::<PowerState>() {
            Ok(st) if !st.is_transient() && states.contains_key(&st) => st,
            _ => return Err(PlatformError::BadInitialState { node: id, state: s.clone() }),
        },
    };

    let mut node = Node {
        id: 0,
        external_id: id,
        dvfs_profiles: Arc::new(profiles),
        dvfs_mode: raw.dvfs_mode.into(),
        states: Arc::new(states),
        initial_state,
        current_state: initial_state,
        state_since: SimTime::ZERO,
        running_job: None,
        reserved_for: None,
        idle_since: SimTime::ZERO,
        pending_transition: None,
    };
    node.reset(SimTime::ZERO);
    Ok(node)
}

fn node_to_raw(node: &Node) -> RawNode {
    RawNode {
        id: node.external_id,
        dvfs_profiles: node
            .dvfs_profiles
            .values()
            .map(|p| {
                (p.name.clone(), RawProfile { power: p.power_active.as_watts_f64(), speed: p.compute_speed })
            })
            .collect(),
        dvfs_mode: node.dvfs_mode.to_string(),
        states: node
            .states
            .values()
            .map(|s| {
                let raw = RawState {
                    power: Some(s.power.as_watts_f64()),
                    speed: s.speed,
                    transitions: s
                        .transitions
                        .iter()
                        .map(|(t, d)| (t.as_str().to_string(), d.as_secs_f64()))
                        .collect(),
                };
                (s.state.as_str().to_string(), raw)
            })
            .collect(),
        initial_state: (node.initial_state != PowerState::Active)
            .then(|| node.initial_state.as_str().to_string()),
    }
}

/// Parameters for building homogeneous platforms in code.
#[derive(Clone, Debug)]
pub struct NodeSpec {
    pub active_power: Milliwatts,
    pub sleeping_power: Milliwatts,
    pub switching_on_power: Milliwatts,
    pub switching_off_power: Milliwatts,
    pub switch_on_delay: SimTime,
    pub switch_off_delay: SimTime,
    pub speed: f64,
}

impl NodeSpec {
    /// 190 W active, 9 W sleeping, 45 min boot at 190 W, 30 min shutdown at 9 W.
    pub fn reference() -> Self {
        NodeSpec {
            active_power: Milliwatts::from_watts(190),
            sleeping_power: Milliwatts::from_watts(9),
            switching_on_power: Milliwatts::from_watts(190),
            switching_off_power: Milliwatts::from_watts(9),
            switch_on_delay: SimTime::from_secs(45 * 60),
            switch_off_delay: SimTime::from_secs(30 * 60),
            speed: 1.0,
        }
    }

    fn build(&self, external_id: u64, id: usize) -> Node {
        let def = |state, power, speed, transitions: &[(PowerState, SimTime)]| PowerStateDef {
            state,
            power,
            speed,
            transitions: transitions.iter().copied().collect(),
        };
        let states = [
            def(PowerState::Active, self.active_power, None, &[(PowerState::Sleeping, self.switch_off_delay)]),
            def(PowerState::Sleeping, self.sleeping_power, Some(0.0), &[(PowerState::Active, self.switch_on_delay)]),
            def(PowerState::SwitchingOn, self.switching_on_power, Some(0.0), &[]),
            def(PowerState::SwitchingOff, self.switching_off_power, Some(0.0), &[]),
        ]
        .into_iter()
        .map(|s| (s.state, s))
        .collect();
        let profile = DvfsProfile {
            name: "normal".to_string(),
            power_active: self.active_power,
            compute_speed: self.speed,
        };
        Node {
            id,
            external_id,
            dvfs_profiles: Arc::new([(profile.name.clone(), profile)].into_iter().collect()),
            dvfs_mode: "normal".into(),
            states: Arc::new(states),
            initial_state: PowerState::Active,
            current_state: PowerState::Active,
            state_since: SimTime::ZERO,
            running_job: None,
            reserved_for: None,
            idle_since: SimTime::ZERO,
            pending_transition: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_json(n: usize) -> String {
        let nodes: Vec<String> = (0..n)
            .map(|i| {
                format!(
                    r#"{{"id": {i}, "dvfs_profiles": {{"normal": {{"power": 190.0, "speed": 1.0}}}},
                    "dvfs_mode": "normal",
                    "states": {{
                        "active": {{"power": 190.0, "transitions": {{"sleeping": 1800}}}},
                        "sleeping": {{"power": 9.0, "speed": 0, "transitions": {{"active": 2700}}}},
                        "switching_on": {{"power": 190.0}},
                        "switching_off": {{"power": 9.0}}
                    }}}}"#
                )
            })
            .collect();
        format!(r#"{{"nodes": [{}]}}"#, nodes.join(","))
    }

    #[test]
    fn parses_reference_platform() {
        let p = parse_platform(reference_json(128).as_bytes()).unwrap();
        assert_eq!(p.num_nodes(), 128);
        for n in &p.nodes {
            assert_eq!(n.states.len(), 4);
            assert_eq!(n.switch_on_delay(), Some(SimTime::from_secs(2700)));
            assert_eq!(n.switch_off_delay(), Some(SimTime::from_secs(1800)));
            assert_eq!(n.active_power(), Milliwatts::from_watts(190));
            assert_eq!(n.power(PowerState::Sleeping), Milliwatts::from_watts(9));
        }
        assert_eq!(p, Platform::homogeneous(128, &NodeSpec::reference()).with_profile_speed_none());
    }

    impl Platform {
        fn with_profile_speed_none(mut self) -> Self {
            for n in &mut self.nodes {
                for s in Arc::make_mut(&mut n.states).values_mut() {
                    if s.state != PowerState::Active && s.state != PowerState::Sleeping {
                        s.speed = None;
                    }
                }
            }
            self
        }
    }

    #[test]
    fn transient_spelling_is_normalized() {
        let doc = r#"{"nodes":[{"id":3,"dvfs_profiles":{"n":{"power":100,"speed":1}},"dvfs_mode":"n",
          "states":{"active":{"transitions":{"switching_off":10}},
                    "switching_off":{"power":5,"transitions":{"sleeping":20}},
                    "sleeping":{"power":1,"transitions":{"active":7}},
                    "switching_on":{"power":100}}}]}"#;
        let p = parse_platform(doc.as_bytes()).unwrap();
        let n = &p.nodes[0];
        assert_eq!(n.external_id, 3);
        assert_eq!(n.id, 0);
        assert_eq!(n.switch_off_delay(), Some(SimTime::from_secs(30)));
        assert_eq!(n.active_power(), Milliwatts::from_watts(100));
    }

    #[test]
    fn single_active_state_rejects_every_transition() {
        let doc = r#"{"nodes":[{"id":0,"dvfs_profiles":{"n":{"power":100,"speed":1}},"dvfs_mode":"n",
          "states":{"active":{}}}]}"#;
        let mut p = parse_platform(doc.as_bytes()).unwrap();
        for target in PowerState::ALL {
            assert!(p.request_transition(0, target, SimTime::ZERO).is_err());
        }
    }

    #[test]
    fn missing_dvfs_profile_names_node_and_field() {
        let doc = r#"{"nodes":[{"id":0,"dvfs_profiles":{"n":{"power":100,"speed":1}},"dvfs_mode":"turbo",
          "states":{"active":{}}}]}"#;
        let err = parse_platform(doc.as_bytes()).unwrap_err();
        assert!(matches!(err, PlatformError::MissingProfile { node: 0, ref mode } if mode == "turbo"));
        assert!(err.to_string().contains("dvfs_mode"));
    }

    #[test]
    fn validation_errors_are_distinct() {
        let base = |states: &str, extra: &str| {
            format!(
                r#"{{"nodes":[{{"id":0,"dvfs_profiles":{{"n":{{"power":100,"speed":1}}}},"dvfs_mode":"n","states":{states}}}{extra}]}}"#
            )
        };
        let unknown = base(r#"{"active":{"transitions":{"hibernate":1}}}"#, "");
        assert!(matches!(parse_platform(unknown.as_bytes()), Err(PlatformError::UnknownState { .. })));
        let undeclared = base(r#"{"active":{"transitions":{"sleeping":1}}}"#, "");
        assert!(matches!(parse_platform(undeclared.as_bytes()), Err(PlatformError::UnknownState { .. })));
        let neg = base(r#"{"active":{"power":-1}}"#, "");
        assert!(matches!(parse_platform(neg.as_bytes()), Err(PlatformError::InvalidPower { .. })));
        let dup = base(
            r#"{"active":{}}"#,
            r#",{"id":0,"dvfs_profiles":{"n":{"power":1,"speed":1}},"dvfs_mode":"n","states":{"active":{}}}"#,
        );
        assert!(matches!(parse_platform(dup.as_bytes()), Err(PlatformError::DuplicateId { node: 0 })));
        let speed = r#"{"nodes":[{"id":0,"dvfs_profiles":{"n":{"power":100,"speed":0}},"dvfs_mode":"n","states":{"active":{}}}]}"#;
        assert!(matches!(parse_platform(speed.as_bytes()), Err(PlatformError::NonPositiveSpeed { .. })));
        let no_transient = base(r#"{"active":{"transitions":{"sleeping":5}},"sleeping":{"power":1}}"#, "");
        assert!(matches!(
            parse_platform(no_transient.as_bytes()),
            Err(PlatformError::MissingTransientState { state: PowerState::SwitchingOff, .. })
        ));
        assert!(matches!(parse_platform(b"{nodes"), Err(PlatformError::Json(_))));
    }

    #[test]
    fn request_transition_from_sleep() {
        let mut p = Platform::homogeneous(1, &NodeSpec::reference());
        p.nodes[0].current_state = PowerState::Sleeping;
        let now = SimTime::from_secs(1000);
        let t = p.request_transition(0, PowerState::Active, now).unwrap();
        assert_eq!(t.completes_at, SimTime::from_secs(1000 + 2700));
        assert_eq!(t.transient_state, PowerState::SwitchingOn);
        assert_eq!(p.nodes[0].current_state, PowerState::SwitchingOn);
        assert!(matches!(
            p.request_transition(0, PowerState::Sleeping, now),
            Err(TransitionError::AlreadyTransitioning { .. })
        ));
        assert_eq!(p.complete_transition(0, t.completes_at), Some(PowerState::Active));
        assert_eq!(p.nodes[0].idle_since, t.completes_at);
    }

    #[test]
    fn request_transition_rejections() {
        let mut p = Platform::homogeneous(1, &NodeSpec::reference());
        assert_eq!(
            p.request_transition(0, PowerState::Active, SimTime::ZERO),
            Err(TransitionError::Illegal { node: 0, from: PowerState::Active, to: PowerState::Active })
        );
        p.nodes[0].running_job = Some(7);
        assert_eq!(
            p.request_transition(0, PowerState::Sleeping, SimTime::ZERO),
            Err(TransitionError::Busy { node: 0, job: 7 })
        );
    }

    #[test]
    fn effective_speed_sources() {
        let mut p = Platform::homogeneous(1, &NodeSpec::reference());
        assert_eq!(p.nodes[0].effective_speed(), 1.0);
        Arc::make_mut(&mut p.nodes[0].dvfs_profiles).get_mut("normal").unwrap().compute_speed = 0.5;
        assert_eq!(p.nodes[0].effective_speed(), 0.5);
        Arc::make_mut(&mut p.nodes[0].states).get_mut(&PowerState::Active).unwrap().speed = Some(0.8);
        assert_eq!(p.nodes[0].effective_speed(), 0.8);
        p.nodes[0].current_state = PowerState::Sleeping;
        assert_eq!(p.nodes[0].effective_speed(), 0.0);
    }

    #[test]
    fn round_trip_through_json() {
        let p = parse_platform(reference_json(4).as_bytes()).unwrap();
        let again = parse_platform(p.to_json().as_bytes()).unwrap();
        assert_eq!(p, again);
    }
}
