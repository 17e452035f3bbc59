//! Jobs, the `workload.json` format, the synthetic generator and SWF
//! trace conversion.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::{Arc, LazyLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::units::SimTime;

/// Job identifier as found in the input: integer or string.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum JobId {
    Int(u64),
    Str(String),
}

impl fmt::Display for JobId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JobId::Int(i) => write!(f, "{i}"),
            JobId::Str(s) => f.write_str(s),
        }
    }
}

impl From<u64> for JobId {
    fn from(i: u64) -> Self {
        JobId::Int(i)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Job {
    pub job_id: JobId,
    pub res: u32,
    pub subtime: SimTime,
    pub reqtime: SimTime,
    /// Runtime at compute speed 1.0.
    pub runtime: SimTime,
    pub user_id: u64,
    pub profile: Arc<str>,
}

fn default_job_profile() -> Arc<str> {
    static DEFAULT: LazyLock<Arc<str>> = LazyLock::new(|| Arc::from("default"));
    DEFAULT.clone()
}

impl Job {
    /// Convenience constructor with times in whole seconds.
    pub fn new(id: u64, res: u32, subtime: u64, reqtime: u64, runtime: u64) -> Self {
        Job {
            job_id: JobId::Int(id),
            res,
            subtime: SimTime::from_secs(subtime),
            reqtime: SimTime::from_secs(reqtime),
            runtime: SimTime::from_secs(runtime),
            user_id: 0,
            profile: default_job_profile(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Workload {
    pub nb_res: u32,
    pub jobs: Vec<Job>,
}

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("malformed workload JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("job {job}: duplicate job_id")]
    DuplicateJobId { job: JobId },
    #[error("job {job}: res {res} exceeds nb_res {nb_res}")]
    TooManyNodes { job: JobId, res: u32, nb_res: u32 },
    #[error("job {job}: res must be at least 1")]
    ZeroRes { job: JobId },
    #[error("job {job}: {field} must be finite and non-negative")]
    Negative { job: JobId, field: &'static str },
    #[error("job {job}: {field} must be positive")]
    NonPositive { job: JobId, field: &'static str },
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
}

impl Workload {
    /// Builds a workload from jobs, validating and stably sorting by subtime.
    pub fn new(nb_res: u32, jobs: Vec<Job>) -> Result<Self, WorkloadError> {
        let mut seen = BTreeSet::new();
        for j in &jobs {
            if !seen.insert(&j.job_id) {
                return Err(WorkloadError::DuplicateJobId { job: j.job_id.clone() });
            }
            if j.res == 0 {
                return Err(WorkloadError::ZeroRes { job: j.job_id.clone() });
            }
            if j.res > nb_res {
                return Err(WorkloadError::TooManyNodes { job: j.job_id.clone(), res: j.res, nb_res });
            }
            if j.reqtime == SimTime::ZERO {
                return Err(WorkloadError::NonPositive { job: j.job_id.clone(), field: "reqtime" });
            }
            if j.runtime == SimTime::ZERO {
                return Err(WorkloadError::NonPositive { job: j.job_id.clone(), field: "runtime" });
            }
        }
        let mut jobs = jobs;
        jobs.sort_by_key(|j| j.subtime);
        Ok(Workload { nb_res, jobs })
    }

    pub fn len(&self) -> usize {
        self.jobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jobs.is_empty()
    }

    pub fn to_json(&self) -> String {
        let raw = RawWorkload {
            nb_res: self.nb_res,
            jobs: self
                .jobs
                .iter()
                .map(|j| RawJob {
                    job_id: j.job_id.clone(),
                    res: j.res as i64,
                    subtime: j.subtime.as_secs_f64(),
                    user_id: j.user_id,
                    reqtime: j.reqtime.as_secs_f64(),
                    runtime: j.runtime.as_secs_f64(),
                    profile: j.profile.to_string(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&raw).expect("workload serializes")
    }
}

#[derive(Serialize, Deserialize)]
struct RawWorkload {
    nb_res: u32,
    jobs: Vec<RawJob>,
}

#[derive(Serialize, Deserialize)]
struct RawJob {
    job_id: JobId,
    res: i64,
    subtime: f64,
    #[serde(default)]
    user_id: u64,
    reqtime: f64,
    runtime: f64,
    #[serde(default = "default_profile")]
    profile: String,
}

fn default_profile() -> String {
    "default".to_string()
}

pub fn parse_workload(bytes: &[u8]) -> Result<Workload, WorkloadError> {
    let raw: RawWorkload = serde_json::from_slice(bytes)?;
    let mut jobs = Vec::with_capacity(raw.jobs.len());
    for r in raw.jobs {
        let secs = |field: &'static str, v: f64| {
            SimTime::from_secs_f64(v).ok_or_else(|| WorkloadError::Negative { job: r.job_id.clone(), field })
        };
        if r.res < 0 {
            return Err(WorkloadError::Negative { job: r.job_id.clone(), field: "res" });
        }
        let res = u32::try_from(r.res)
            .map_err(|_| WorkloadError::TooManyNodes { job: r.job_id.clone(), res: u32::MAX, nb_res: raw.nb_res })?;
        jobs.push(Job {
            subtime: secs("subtime", r.subtime)?,
            reqtime: secs("reqtime", r.reqtime)?,
            runtime: secs("runtime", r.runtime)?,
            job_id: r.job_id,
            res,
            user_id: r.user_id,
            profile: r.profile.into(),
        });
    }
    Workload::new(raw.nb_res, jobs)
}

// ---- generator ---------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub num_jobs: usize,
    /// Jobs per second.
    pub arrival_rate: f64,
    /// Seconds.
    pub mean_runtime: f64,
    pub runtime_cv: f64,
    pub min_res: u32,
    pub max_res: u32,
    #[serde(default = "default_reqtime_factor")]
    pub reqtime_factor: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_reqtime_factor() -> f64 {
    1.5
}

impl GenSpec {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |m: &str| Err(WorkloadError::InvalidSpec(m.to_string()));
        if self.num_jobs == 0 {
            return bad("num_jobs must be at least 1");
        }
        if !(self.arrival_rate.is_finite() && self.arrival_rate > 0.0) {
            return bad("arrival_rate must be positive");
        }
        if !(self.mean_runtime.is_finite() && self.mean_runtime > 0.0) {
            return bad("mean_runtime must be positive");
        }
        if !(self.runtime_cv.is_finite() && self.runtime_cv >= 0.0) {
            return bad("runtime_cv must be non-negative");
        }
        if self.min_res == 0 || self.min_res > self.max_res {
            return bad("need 1 <= min_res <= max_res");
        }
        if !(self.reqtime_factor.is_finite() && self.reqtime_factor > 0.0) {
            return bad("reqtime_factor must be positive");
        }
        Ok(())
    }
}

/// Exponential inter-arrivals, log-normal runtimes (mean and coefficient of
/// variation as given), uniform node counts. The first job arrives at 0.
pub fn generate_workload(spec: &GenSpec) -> Result<Workload, WorkloadError> {
    spec.validate()?;
    if spec.reqtime_factor < 1.0 {
        log::warn!(
            "reqtime_factor {} < 1: every generated job will overrun its wall-time",
            spec.reqtime_factor
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let inter = Exp::new(spec.arrival_rate).map_err(|e| WorkloadError::InvalidSpec(e.to_string()))?;
    let runtime_dist = if spec.runtime_cv > 0.0 {
        let sigma2 = (1.0 + spec.runtime_cv * spec.runtime_cv).ln();
        let mu = spec.mean_runtime.ln() - sigma2 / 2.0;
        Some(LogNormal::new(mu, sigma2.sqrt()).map_err(|e| WorkloadError::InvalidSpec(e.to_string()))?)
    } else {
        None
    };
    let mut t = 0.0f64;
    let mut jobs = Vec::with_capacity(spec.num_jobs);
    for i in 0..spec.num_jobs {
        if i > 0 {
            t += inter.sample(&mut rng);
        }
        let runtime_s = match &runtime_dist {
            Some(d) => d.sample(&mut rng),
            None => spec.mean_runtime,
        };
        let res = rng.random_range(spec.min_res..=spec.max_res);
        let runtime = SimTime::from_secs_f64(runtime_s).unwrap_or(SimTime::MAX).max(SimTime(1));
        let reqtime = SimTime(((runtime.0 as f64) * spec.reqtime_factor).ceil() as u64).max(SimTime(1));
        let subtime = SimTime::from_secs_f64(t).unwrap_or(SimTime::MAX);
        jobs.push(Job {
            job_id: JobId::Int(i as u64 + 1),
            res,
            subtime,
            reqtime,
            runtime,
            user_id: 0,
            profile: default_job_profile(),
        });
    }
    Workload::new(spec.max_res, jobs)
}

// ---- SWF ---------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct SwfConversion {
    pub workload: Workload,
    /// Well-formed job lines that were discarded (no processors, no
    /// runtime, oversized, negative submit, duplicate id).
    pub dropped: usize,
    /// Lines that could not be read at all.
    pub skipped_lines: usize,
}

/// Converts Standard Workload Format text. Uses fields 1 (id), 2 (submit),
/// 4 (run time), 5 (processors), 9 (requested time) and 12 (user id).
pub fn convert_swf(text: &str, nb_res: u32) -> SwfConversion {
    let mut jobs = Vec::new();
    let mut ids = BTreeSet::new();
    let mut dropped = 0;
    let mut skipped_lines = 0;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with(';') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let parsed = (|| {
            if fields.len() < 12 {
                return None;
            }
            let num = |i: usize| fields[i - 1].parse::<f64>().ok().filter(|v| v.is_finite());
            Some((
                fields[0].parse::<i64>().ok()?,
                num(2)?,
                num(4)?,
                num(5)?,
                num(9)?,
                num(12)?,
            ))
        })();
        let Some((id, submit, run, procs, req, user)) = parsed else {
            log::warn!("swf: skipping unreadable line: {line}");
            skipped_lines += 1;
            continue;
        };
        if id < 0 || submit < 0.0 || run <= 0.0 || procs < 1.0 || procs > nb_res as f64 || !ids.insert(id) {
            dropped += 1;
            continue;
        }
        let runtime = SimTime::from_secs_f64(run).unwrap_or(SimTime::MAX);
        let reqtime = if req > 0.0 { SimTime::from_secs_f64(req).unwrap_or(SimTime::MAX) } else { runtime };
        jobs.push(Job {
            job_id: JobId::Int(id as u64),
            res: procs as u32,
            subtime: SimTime::from_secs_f64(submit).unwrap_or(SimTime::MAX),
            reqtime,
            runtime,
            user_id: if user >= 0.0 { user as u64 } else { 0 },
            profile: default_job_profile(),
        });
    }
    let workload = Workload::new(nb_res, jobs).expect("swf jobs are pre-validated");
    SwfConversion { workload, dropped, skipped_lines }
}
