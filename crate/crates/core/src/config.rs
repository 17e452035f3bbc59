//! Run configuration (YAML or JSON).
//!
//! Missing sections take documented defaults, unknown keys are ignored.
//! [`load_config`] returns a resolved [`Config`] whose serialization is
//! the config echo written next to the outputs: loading the echo gives
//! the same run again.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{EngineConfig, OverrunPolicy};
use crate::rlenv::{ControlMode, EnvConfig, Transport};
use crate::sched::{AlgorithmName, PolicyConfig};
use crate::units::SimTime;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config {path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error("config field `{field}`: {msg}")]
    Invalid { field: &'static str, msg: String },
}

fn invalid(field: &'static str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field, msg: msg.into() }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Paths {
    pub workload: PathBuf,
    pub platform: PathBuf,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

/// Integer microseconds, or `"now"` (resolved to wall-clock time on load).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StartTime {
    Micros(u64),
    Keyword(String),
}

impl Default for StartTime {
    fn default() -> Self {
        StartTime::Micros(0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSection {
    #[serde(default = "default_algorithm")]
    pub algorithm: String,
    #[serde(default)]
    pub overrun_policy: OverrunPolicy,
    /// Decision cadence in seconds; `null` for event-driven only.
    #[serde(default)]
    pub timeout: Option<f64>,
    #[serde(default)]
    pub start_time: StartTime,
}

fn default_algorithm() -> String {
    "easy_psus".into()
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            algorithm: default_algorithm(),
            overrun_policy: OverrunPolicy::default(),
            timeout: None,
            start_time: StartTime::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PsmSection {
    /// Seconds a node stays idle before PSAS-AO switches it off. Defaults
    /// to `run.timeout`, else 300.
    #[serde(default)]
    pub idle_timeout: Option<f64>,
    #[serde(default)]
    pub boot_lookahead: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RlSection {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default)]
    pub learn: bool,
    #[serde(default, rename = "type")]
    pub mode: Option<ControlMode>,
    /// Step length in seconds, required in discrete mode.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_transport")]
    pub transport: Transport,
    /// Seconds; `null` disables the guard.
    #[serde(default = "default_stall_guard")]
    pub stall_guard: Option<f64>,
    #[serde(default = "default_epochs")]
    pub epochs: u64,
    #[serde(default = "default_features")]
    pub features: String,
    #[serde(default = "default_translator")]
    pub translator: String,
    #[serde(default = "default_reward")]
    pub reward: String,
    #[serde(default = "one")]
    pub w_energy: f64,
    #[serde(default = "one")]
    pub w_wait: f64,
}

fn default_transport() -> Transport {
    Transport::Stdio
}
fn default_stall_guard() -> Option<f64> {
    Some(86_400.0)
}
fn default_epochs() -> u64 {
    1
}
fn default_features() -> String {
    "node_fractions".into()
}
fn default_translator() -> String {
    "target_count".into()
}
fn default_reward() -> String {
    "waste_and_wait".into()
}
fn one() -> f64 {
    1.0
}

impl Default for RlSection {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoggingSection {
    #[serde(default = "default_level")]
    pub level: String,
    #[serde(default)]
    pub file: Option<PathBuf>,
}

fn default_level() -> String {
    "info".into()
}

impl Default for LoggingSection {
    fn default() -> Self {
        LoggingSection { level: default_level(), file: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub paths: Paths,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub psm: PsmSection,
    #[serde(default)]
    pub rl: RlSection,
    #[serde(default)]
    pub logging: LoggingSection,
    #[serde(default)]
    pub seed: u64,
}

fn secs(field: &'static str, v: f64) -> Result<SimTime, ConfigError> {
    SimTime::from_secs_f64(v).ok_or_else(|| invalid(field, format!("{v} is not a non-negative number of seconds")))
}

impl Config {
    /// Parses YAML or JSON text (JSON when `json` is set). YAML goes
    /// through a JSON value so both formats share one data model, e.g.
    /// `transport: {tcp: addr}` rather than YAML tags.
    pub fn parse(text: &str, json: bool) -> Result<Config, String> {
        let value: serde_json::Value = if json {
            serde_json::from_str(text).map_err(|e| e.to_string())?
        } else {
            serde_yaml::from_str(text).map_err(|e| e.to_string())?
        };
        serde_json::from_value(value).map_err(|e| e.to_string())
    }

    /// Fills defaults, resolves `"now"` and validates every field.
    pub fn resolve(mut self) -> Result<Config, ConfigError> {
        let name: AlgorithmName = self.run.algorithm.parse().map_err(|e: crate::sched::UnknownAlgorithm| invalid("run.algorithm", e.to_string()))?;
        self.run.algorithm = name.to_string();
        if let Some(t) = self.run.timeout {
            secs("run.timeout", t)?;
        }
        self.run.start_time = match &self.run.start_time {
            StartTime::Micros(us) => StartTime::Micros(*us),
            StartTime::Keyword(k) if k == "now" => {
                let now = std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map_err(|e| invalid("run.start_time", e.to_string()))?;
                StartTime::Micros(now.as_micros() as u64)
            }
            StartTime::Keyword(k) => {
                return Err(invalid("run.start_time", format!("expected integer microseconds or \"now\", got {k:?}")))
            }
        };
        let idle = self.psm.idle_timeout.or(self.run.timeout).unwrap_or(300.0);
        secs("psm.idle_timeout", idle)?;
        self.psm.idle_timeout = Some(idle);
        self.psm.boot_lookahead = Some(self.psm.boot_lookahead.unwrap_or(true));

        match (self.rl.mode, self.rl.dt) {
            (Some(ControlMode::Discrete), None) => {
                return Err(invalid("rl.dt", "required when rl.type is \"discrete\""));
            }
            (None, dt) => {
                self.rl.mode = Some(ControlMode::Discrete);
                self.rl.dt = Some(dt.unwrap_or(1800.0));
            }
            _ => {}
        }
        if self.rl.mode == Some(ControlMode::Discrete) {
            let dt = secs("rl.dt", self.rl.dt.expect("checked"))?;
            if dt == SimTime::ZERO {
                return Err(invalid("rl.dt", "must be > 0"));
            }
        }
        if let Some(g) = self.rl.stall_guard {
            secs("rl.stall_guard", g)?;
        }
        if self.rl.epochs == 0 {
            return Err(invalid("rl.epochs", "must be >= 1"));
        }
        for (field, ok) in [
            ("rl.features", crate::rlenv::registry::FEATURES.contains(&self.rl.features.as_str())),
            ("rl.translator", crate::rlenv::registry::TRANSLATORS.contains(&self.rl.translator.as_str())),
            ("rl.reward", crate::rlenv::registry::REWARDS.contains(&self.rl.reward.as_str())),
        ] {
            if !ok {
                return Err(invalid(field, "unknown name"));
            }
        }
        if let Transport::Spawn(cmd) = &self.rl.transport {
            if cmd.is_empty() {
                return Err(invalid("rl.transport", "spawn command is empty"));
            }
        }
        if self.logging.level.parse::<log::LevelFilter>().is_err() {
            return Err(invalid("logging.level", format!("unknown level {:?}", self.logging.level)));
        }
        Ok(self)
    }

    pub fn algorithm(&self) -> AlgorithmName {
        self.run.algorithm.parse().expect("validated")
    }

    pub fn start_time(&self) -> SimTime {
        match self.run.start_time {
            StartTime::Micros(us) => SimTime(us),
            StartTime::Keyword(_) => SimTime::ZERO,
        }
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            start_time: self.start_time(),
            timeout: self.run.timeout.and_then(SimTime::from_secs_f64).filter(|t| *t > SimTime::ZERO),
            overrun: self.run.overrun_policy,
            ..EngineConfig::default()
        }
    }

    pub fn policy_config(&self) -> PolicyConfig {
        let mut p = PolicyConfig::new(self.algorithm());
        p.idle_timeout = self.psm.idle_timeout.and_then(SimTime::from_secs_f64).unwrap_or(p.idle_timeout);
        p.boot_lookahead = self.psm.boot_lookahead.unwrap_or(true);
        p
    }

    pub fn env_config(&self) -> EnvConfig {
        let rl = &self.rl;
        EnvConfig {
            mode: rl.mode.unwrap_or(ControlMode::Discrete),
            dt: rl.dt.and_then(SimTime::from_secs_f64).unwrap_or(SimTime::from_secs(1800)),
            stall_guard: rl.stall_guard.and_then(SimTime::from_secs_f64),
            features: rl.features.clone(),
            translator: rl.translator.clone(),
            reward: rl.reward.clone(),
            w_energy: rl.w_energy,
            w_wait: rl.w_wait,
        }
    }

    /// Canonical JSON form, used for the echo file and summary metadata.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}

/// Reads and resolves a config file; `.json` files are parsed as JSON,
/// anything else as YAML.
pub fn load_config(path: &Path) -> Result<Config, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
    let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    Config::parse(&text, json)
        .map_err(|msg| ConfigError::Parse { path: path.into(), msg })?
        .resolve()
}
