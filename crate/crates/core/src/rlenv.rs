//! Node power management as a step-wise environment.
//!
//! An agent picks power actions; the environment translates them into
//! switch decisions, advances the simulation (the job scheduler keeps
//! running on every batch) and answers with an observation and a reward.
//! The same loop is exposed over a line-delimited JSON protocol.

use std::io::{self, BufRead, BufReader, Write};
use std::net::TcpListener;
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::engine::{Accrued, Decision, EngineConfig, ResultsBundle, SimError, SimState, Simulation};
use crate::platform::{Platform, PowerState};
use crate::report::SummaryRecord;
use crate::sched::{self, PolicyConfig, Scheduler};
use crate::units::{Milliwatts, Nanojoules, SimTime};
use crate::workload::Workload;

pub const OBS_DIM: usize = 6;

pub trait FeatureExtractor: Send {
    fn dim(&self) -> usize;
    fn extract(&self, state: &SimState) -> Vec<f64>;
}

/// `[computing, idle, sleeping, switching]` node fractions followed by
/// queue length and queued node demand, both over the node count and
/// capped at 1.
#[derive(Clone, Copy, Debug, Default)]
pub struct NodeFractions;

impl FeatureExtractor for NodeFractions {
    fn dim(&self) -> usize {
        OBS_DIM
    }

    fn extract(&self, state: &SimState) -> Vec<f64> {
        let n = state.num_nodes();
        let mut counts = [0usize; 4];
        for node in &state.platform.nodes {
            let k = match node.current_state {
                PowerState::Active if node.is_computing() => 0,
                PowerState::Active => 1,
                PowerState::Sleeping => 2,
                PowerState::SwitchingOn | PowerState::SwitchingOff => 3,
            };
            counts[k] += 1;
        }
        let demand: u64 = state.queue.iter().map(|&j| state.job(j).res as u64).sum();
        let nf = n as f64;
        vec![
            counts[0] as f64 / nf,
            counts[1] as f64 / nf,
            counts[2] as f64 / nf,
            counts[3] as f64 / nf,
            (state.queue.len() as f64 / nf).min(1.0),
            (demand as f64 / nf).min(1.0),
        ]
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("invalid action: {0}")]
pub struct ActionError(pub String);

pub trait ActionTranslator: Send {
    fn translate(&self, state: &SimState, value: &Value) -> Result<Vec<Decision>, ActionError>;
}

/// Action = number of nodes that should be powered on (active or
/// switching on). Integer in `[0, n]`, or with `fractional` a real in
/// `[0, 1]` scaled to that range.
#[derive(Clone, Copy, Debug)]
pub struct TargetCount {
    pub fractional: bool,
}

impl TargetCount {
    pub fn target(&self, n: usize, value: &Value) -> Result<usize, ActionError> {
        let v = value.as_f64().ok_or_else(|| ActionError(format!("expected a number, got {value}")))?;
        if self.fractional {
            if !(0.0..=1.0).contains(&v) {
                return Err(ActionError(format!("{v} is outside [0, 1]")));
            }
            Ok((v * n as f64).round() as usize)
        } else {
            if v.fract() != 0.0 || !(0.0..=n as f64).contains(&v) {
                return Err(ActionError(format!("{v} is not an integer in [0, {n}]")));
            }
            Ok(v as usize)
        }
    }
}

impl ActionTranslator for TargetCount {
    fn translate(&self, state: &SimState, value: &Value) -> Result<Vec<Decision>, ActionError> {
        let target = self.target(state.num_nodes(), value)?;
        Ok(sched::target_count_decisions(state, target, &|_| false))
    }
}

/// Action = one on/off wish per node (`true`/`false` or `1`/`0`). Wishes
/// that cannot be honoured right now (busy, reserved, transitioning) are
/// ignored.
#[derive(Clone, Copy, Debug, Default)]
pub struct PerNode;

impl ActionTranslator for PerNode {
    fn translate(&self, state: &SimState, value: &Value) -> Result<Vec<Decision>, ActionError> {
        let wishes = value.as_array().ok_or_else(|| ActionError("expected an array".into()))?;
        let n = state.num_nodes();
        if wishes.len() != n {
            return Err(ActionError(format!("expected {n} entries, got {}", wishes.len())));
        }
        let mut out = Vec::new();
        for (node, w) in state.platform.nodes.iter().zip(wishes) {
            let on = match w {
                Value::Bool(b) => *b,
                Value::Number(x) if x.as_u64() == Some(1) => true,
                Value::Number(x) if x.as_u64() == Some(0) => false,
                other => return Err(ActionError(format!("node {}: expected 0/1 or bool, got {other}", node.id))),
            };
            if on && node.current_state == PowerState::Sleeping && node.switch_on_delay().is_some() {
                out.push(Decision::SwitchOn { node: node.id });
            } else if !on && node.is_idle() && node.reserved_for.is_none() && node.switch_off_delay().is_some() {
                out.push(Decision::SwitchOff { node: node.id });
            }
        }
        Ok(out)
    }
}

/// What happened during one step window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Window {
    pub wasted: Nanojoules,
    /// Queue length integrated over the window, job·µs.
    pub queued_wait: u128,
    pub dt: SimTime,
    pub num_nodes: usize,
    pub max_active_power: Milliwatts,
}

pub trait RewardFn: Send {
    fn reward(&self, w: &Window) -> f64;
}

/// `-(w_e * waste / (n * P_max * dt) + w_t * wait / (n * dt))`, each
/// term clipped to `[0, 1]`. Zero-length windows give 0.
#[derive(Clone, Copy, Debug)]
pub struct WasteAndWait {
    pub w_energy: f64,
    pub w_wait: f64,
}

impl WasteAndWait {
    pub fn terms(&self, w: &Window) -> (f64, f64) {
        if w.dt == SimTime::ZERO {
            return (0.0, 0.0);
        }
        let n = w.num_nodes as f64;
        let dt = w.dt.0 as f64;
        let energy = w.wasted.0 as f64 / (n * w.max_active_power.0 as f64 * dt);
        let wait = w.queued_wait as f64 / (n * dt);
        (energy.clamp(0.0, 1.0), wait.clamp(0.0, 1.0))
    }
}

impl RewardFn for WasteAndWait {
    fn reward(&self, w: &Window) -> f64 {
        let (e, t) = self.terms(w);
        -(self.w_energy * e + self.w_wait * t)
    }
}

/// Registry lookups by name.
pub mod registry {
    use super::*;

    pub const FEATURES: &[&str] = &["node_fractions"];
    pub const TRANSLATORS: &[&str] = &["target_count", "per_node"];
    pub const REWARDS: &[&str] = &["waste_and_wait"];

    pub fn features(name: &str) -> Option<Box<dyn FeatureExtractor>> {
        match name {
            "node_fractions" => Some(Box::new(NodeFractions)),
            _ => None,
        }
    }

    pub fn translator(name: &str, mode: ControlMode) -> Option<Box<dyn ActionTranslator>> {
        match name {
            "target_count" => Some(Box::new(TargetCount { fractional: mode == ControlMode::Continuous })),
            "per_node" => Some(Box::new(PerNode)),
            _ => None,
        }
    }

    pub fn reward(name: &str, w_energy: f64, w_wait: f64) -> Option<Box<dyn RewardFn>> {
        match name {
            "waste_and_wait" => Some(Box::new(WasteAndWait { w_energy, w_wait })),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    /// Fixed-length steps of `dt`; integer target actions.
    Discrete,
    /// One event batch per step; fractional target actions.
    Continuous,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvConfig {
    pub mode: ControlMode,
    /// Step length in discrete mode.
    pub dt: SimTime,
    /// Force the minimum switch-on set once the head job has waited this
    /// long without enough powered nodes. `None` disables the guard.
    pub stall_guard: Option<SimTime>,
    pub features: String,
    pub translator: String,
    pub reward: String,
    pub w_energy: f64,
    pub w_wait: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            mode: ControlMode::Discrete,
            dt: SimTime::from_secs(1800),
            stall_guard: Some(SimTime::from_secs(24 * 3600)),
            features: "node_fractions".into(),
            translator: "target_count".into(),
            reward: "waste_and_wait".into(),
            w_energy: 1.0,
            w_wait: 1.0,
        }
    }
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("environment is closed: the episode is done")]
    Closed,
    #[error("no episode started; call reset first")]
    NotStarted,
    #[error(transparent)]
    Action(#[from] ActionError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },
    #[error("invalid environment config: {0}")]
    Config(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub t: SimTime,
    pub features: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
}

pub struct PowerEnv {
    config: EnvConfig,
    engine: EngineConfig,
    policy: PolicyConfig,
    platform: Platform,
    workload: Workload,
    seed: u64,
    features: Box<dyn FeatureExtractor>,
    translator: Box<dyn ActionTranslator>,
    reward: Box<dyn RewardFn>,
    sim: Option<Simulation>,
    scheduler: Scheduler,
    episode: u64,
    done: bool,
    last_t: SimTime,
    last_accrued: Accrued,
    forced_switch_ons: u64,
}

impl PowerEnv {
    pub fn new(
        config: EnvConfig,
        engine: EngineConfig,
        policy: PolicyConfig,
        platform: Platform,
        workload: Workload,
        seed: u64,
    ) -> Result<Self, EnvError> {
        if config.mode == ControlMode::Discrete && config.dt == SimTime::ZERO {
            return Err(EnvError::Config("dt must be > 0 in discrete mode".into()));
        }
        let unknown = |kind, name: &str| EnvError::Unknown { kind, name: name.to_string() };
        let features = registry::features(&config.features).ok_or_else(|| unknown("feature extractor", &config.features))?;
        let translator = registry::translator(&config.translator, config.mode)
            .ok_or_else(|| unknown("action translator", &config.translator))?;
        let reward =
            registry::reward(&config.reward, config.w_energy, config.w_wait).ok_or_else(|| unknown("reward", &config.reward))?;
        Ok(PowerEnv {
            scheduler: Scheduler::new(policy.clone()),
            config,
            engine,
            policy,
            platform,
            workload,
            seed,
            features,
            translator,
            reward,
            sim: None,
            episode: 0,
            done: false,
            last_t: SimTime::ZERO,
            last_accrued: Accrued::default(),
            forced_switch_ons: 0,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    /// Episodes started so far (the current one included).
    pub fn episode(&self) -> u64 {
        self.episode
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Switch-ons issued by the stall guard in the current episode.
    pub fn forced_switch_ons(&self) -> u64 {
        self.forced_switch_ons
    }

    pub fn simulation(&self) -> Option<&Simulation> {
        self.sim.as_ref()
    }

    /// Starts a new episode and processes the batches at the start time.
    pub fn reset(&mut self) -> Result<Observation, EnvError> {
        let mut sim = Simulation::start(self.engine.clone(), self.platform.clone(), &self.workload)?.with_seed(self.seed);
        self.scheduler = Scheduler::new(self.policy.clone());
        sim.advance_until(self.engine.start_time, &mut self.scheduler)?;
        self.episode += 1;
        self.done = !sim.is_running();
        self.last_t = sim.clock();
        self.last_accrued = sim.state().accrued;
        self.forced_switch_ons = 0;
        self.sim = Some(sim);
        Ok(self.observation().expect("just started"))
    }

    pub fn observation(&self) -> Option<Observation> {
        let sim = self.sim.as_ref()?;
        Some(Observation { t: sim.clock(), features: self.features.extract(sim.state()) })
    }

    fn guard_decisions(stall_guard: Option<SimTime>, sim: &Simulation) -> Vec<Decision> {
        let Some(guard) = stall_guard else { return Vec::new() };
        let s = sim.state();
        let Some(&head) = s.queue.front() else { return Vec::new() };
        let powered = s
            .platform
            .nodes
            .iter()
            .filter(|n| matches!(n.current_state, PowerState::Active | PowerState::SwitchingOn))
            .count();
        let need = (s.job(head).res as usize).saturating_sub(powered);
        let waited = s.clock.saturating_sub(s.arrival_time(head));
        if need == 0 || (waited < guard && sim.next_event_time().is_some()) {
            return Vec::new();
        }
        s.platform
            .nodes
            .iter()
            .filter(|n| n.current_state == PowerState::Sleeping && n.switch_on_delay().is_some())
            .take(need)
            .map(|n| Decision::SwitchOn { node: n.id })
            .collect()
    }

    /// Applies one action and advances by one step.
    pub fn step(&mut self, action: &Value) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::Closed);
        }
        let sim = self.sim.as_mut().ok_or(EnvError::NotStarted)?;
        let decisions = self.translator.translate(sim.state(), action)?;
        sim.apply_external(decisions)?;
        let forced = Self::guard_decisions(self.config.stall_guard, sim);
        if !forced.is_empty() {
            log::warn!("stall guard: switching on {} node(s) at {}", forced.len(), sim.clock());
            self.forced_switch_ons += forced.len() as u64;
            sim.apply_external(forced)?;
        }
        match self.config.mode {
            ControlMode::Discrete => {
                let until = sim.clock() + self.config.dt;
                sim.advance_until(until, &mut self.scheduler)?;
            }
            ControlMode::Continuous => {
                sim.proceed(&mut self.scheduler)?;
            }
        }
        let now = sim.clock();
        let acc = sim.state().accrued;
        let window = Window {
            wasted: Nanojoules(acc.wasted_energy.0 - self.last_accrued.wasted_energy.0),
            queued_wait: acc.queued_wait - self.last_accrued.queued_wait,
            dt: now - self.last_t,
            num_nodes: sim.state().num_nodes(),
            max_active_power: sim.state().platform.max_active_power(),
        };
        self.done = !sim.is_running();
        self.last_t = now;
        self.last_accrued = acc;
        let reward = self.reward.reward(&window);
        Ok(StepResult { observation: self.observation().expect("running"), reward, done: self.done })
    }

    /// Constants needed to compare rewards across platforms.
    pub fn metadata(&self) -> Value {
        serde_json::json!({
            "episode": self.episode,
            "mode": self.config.mode,
            "dt_s": self.config.dt.as_secs_f64(),
            "features": self.config.features,
            "translator": self.config.translator,
            "reward": self.config.reward,
            "w_energy": self.config.w_energy,
            "w_wait": self.config.w_wait,
            "num_nodes": self.platform.num_nodes(),
            "max_active_power_w": self.platform.max_active_power().as_watts_f64(),
            "forced_switch_ons": self.forced_switch_ons,
        })
    }

    /// Results of the finished episode.
    pub fn take_results(&mut self) -> Result<ResultsBundle, EnvError> {
        if !self.done {
            return Err(EnvError::Config("episode is not finished".into()));
        }
        let sim = self.sim.take().ok_or(EnvError::NotStarted)?;
        Ok(sim.finish().into_results()?)
    }
}

/// Environment to agent.
#[derive(Clone, Debug, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EnvMessage {
    Obs { t: f64, features: Vec<f64>, reward: Option<f64>, done: bool, episode: u64 },
    EpisodeSummary(SummaryRecord),
    Error { msg: String },
}

/// Agent to environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AgentMessage {
    Action { value: Value },
    Error { msg: String },
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("agent disconnected before the episode ended")]
    Disconnected,
    #[error("agent reported an error: {0}")]
    Agent(String),
    #[error("invalid transport: {0}")]
    Transport(String),
}

fn send<W: Write>(w: &mut W, msg: &EnvMessage) -> io::Result<()> {
    let mut line = serde_json::to_string(msg).map_err(io::Error::other)?;
    line.push('\n');
    w.write_all(line.as_bytes())?;
    w.flush()
}

fn obs_message(o: &Observation, reward: Option<f64>, done: bool, episode: u64) -> EnvMessage {
    EnvMessage::Obs { t: o.t.as_secs_f64(), features: o.features.clone(), reward, done, episode }
}

#[derive(Debug, Default)]
pub struct ServeReport {
    pub episodes: Vec<ResultsBundle>,
    /// Messages rejected as malformed or out of range.
    pub rejected: u64,
}

/// Runs `episodes` episodes against one agent connection.
pub fn serve<R: BufRead, W: Write>(
    env: &mut PowerEnv,
    mut reader: R,
    mut writer: W,
    episodes: u64,
) -> Result<ServeReport, ServeError> {
    let mut report = ServeReport::default();
    let mut line = String::new();
    for _ in 0..episodes {
        let obs = env.reset()?;
        let mut current = obs_message(&obs, None, env.is_done(), env.episode());
        send(&mut writer, &current)?;
        while !env.is_done() {
            line.clear();
            if reader.read_line(&mut line)? == 0 {
                return Err(ServeError::Disconnected);
            }
            let text = line.trim();
            if text.is_empty() {
                continue;
            }
            let value = match serde_json::from_str::<AgentMessage>(text) {
                Ok(AgentMessage::Action { value }) => value,
                Ok(AgentMessage::Error { msg }) => return Err(ServeError::Agent(msg)),
                Err(e) => {
                    report.rejected += 1;
                    send(&mut writer, &EnvMessage::Error { msg: format!("malformed message: {e}") })?;
                    send(&mut writer, &current)?;
                    continue;
                }
            };
            match env.step(&value) {
                Ok(r) => {
                    current = obs_message(&r.observation, Some(r.reward), r.done, env.episode());
                    send(&mut writer, &current)?;
                }
                Err(EnvError::Action(e)) => {
                    report.rejected += 1;
                    send(&mut writer, &EnvMessage::Error { msg: e.to_string() })?;
                    send(&mut writer, &current)?;
                }
                Err(e) => {
                    let _ = send(&mut writer, &EnvMessage::Error { msg: e.to_string() });
                    return Err(e.into());
                }
            }
        }
        let meta = env.metadata();
        let results = env.take_results()?;
        send(&mut writer, &EnvMessage::EpisodeSummary(SummaryRecord::new(&results.summary, results.policy_invocations, meta)))?;
        report.episodes.push(results);
    }
    Ok(report)
}

/// Where the agent lives.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transport {
    /// The environment's own standard input/output.
    Stdio,
    /// Listen on an address and serve the first connection.
    Tcp(String),
    /// Spawn a command and talk over its standard input/output.
    Spawn(Vec<String>),
}

pub fn serve_transport(env: &mut PowerEnv, transport: &Transport, episodes: u64) -> Result<ServeReport, ServeError> {
    match transport {
        Transport::Stdio => serve(env, io::stdin().lock(), io::stdout().lock(), episodes),
        Transport::Tcp(addr) => {
            let listener = TcpListener::bind(addr)?;
            log::info!("waiting for an agent on {}", listener.local_addr()?);
            let (stream, peer) = listener.accept()?;
            log::info!("agent connected from {peer}");
            serve(env, BufReader::new(stream.try_clone()?), stream, episodes)
        }
        Transport::Spawn(cmd) => {
            let (prog, args) = cmd.split_first().ok_or_else(|| ServeError::Transport("empty spawn command".into()))?;
            let mut child = Command::new(prog).args(args).stdin(Stdio::piped()).stdout(Stdio::piped()).spawn()?;
            let stdin = child.stdin.take().expect("piped");
            let stdout = child.stdout.take().expect("piped");
            let result = serve(env, BufReader::new(stdout), stdin, episodes);
            let status = child.wait()?;
            if !status.success() {
                log::warn!("agent exited with {status}");
            }
            result
        }
    }
}

/// Scripted agent that always sends the same action value.
pub mod stub {
    use super::*;

    #[derive(Clone, Debug, PartialEq)]
    pub struct SeenObs {
        pub t: f64,
        pub features: Vec<f64>,
        pub reward: Option<f64>,
        pub done: bool,
        pub episode: u64,
    }

    #[derive(Clone, Debug, Default)]
    pub struct StubReport {
        pub observations: Vec<SeenObs>,
        pub summaries: Vec<Value>,
        pub errors: Vec<String>,
        pub actions_sent: u64,
    }

    /// Answers every non-final observation with `action` until the
    /// stream closes.
    pub fn run<R: BufRead, W: Write>(reader: R, mut writer: W, action: &Value) -> io::Result<StubReport> {
        let mut report = StubReport::default();
        let msg = serde_json::to_string(&AgentMessage::Action { value: action.clone() }).map_err(io::Error::other)?;
        for line in reader.lines() {
            let line = line?;
            let v: Value = serde_json::from_str(&line).map_err(io::Error::other)?;
            match v["type"].as_str() {
                Some("obs") => {
                    let obs = SeenObs {
                        t: v["t"].as_f64().unwrap_or(f64::NAN),
                        features: v["features"]
                            .as_array()
                            .map(|a| a.iter().map(|x| x.as_f64().unwrap_or(f64::NAN)).collect())
                            .unwrap_or_default(),
                        reward: v["reward"].as_f64(),
                        done: v["done"].as_bool().unwrap_or(false),
                        episode: v["episode"].as_u64().unwrap_or(0),
                    };
                    let done = obs.done;
                    report.observations.push(obs);
                    if !done {
                        writeln!(writer, "{msg}")?;
                        writer.flush()?;
                        report.actions_sent += 1;
                    }
                }
                Some("episode_summary") => report.summaries.push(v),
                Some("error") => report.errors.push(v["msg"].as_str().unwrap_or_default().to_string()),
                _ => report.errors.push(format!("unexpected message: {line}")),
            }
        }
        Ok(report)
    }
}
