//! Serves the power-management environment to the scripted agent over a
//! socket pair. The agent asks for the same number of powered nodes at
//! every step; the episode return shows the waste/wait trade-off.

use std::io::BufReader;
use std::os::unix::net::UnixStream;

use powersched::engine::EngineConfig;
use powersched::platform::{NodeSpec, Platform};
use powersched::rlenv::{serve, stub, EnvConfig, PowerEnv};
use powersched::sched::PolicyConfig;
use powersched::workload::{Job, Workload};
use serde_json::json;

fn main() {
    let jobs = (0..10).map(|i| Job::new(i + 1, 1 + (i as u32 * 3) % 8, i * 2400, 3000, 1800 + 120 * i)).collect();
    let workload = Workload::new(16, jobs).unwrap();
    for target in [0, 4, 8, 16] {
        let mut env = PowerEnv::new(
            EnvConfig::default(),
            EngineConfig::default(),
            PolicyConfig::new("easy_psas_ipm".parse().unwrap()),
            Platform::homogeneous(16, &NodeSpec::reference()),
            workload.clone(),
            0,
        )
        .unwrap();
        let (a, b) = UnixStream::pair().unwrap();
        let agent = std::thread::spawn(move || stub::run(BufReader::new(b.try_clone().unwrap()), b, &json!(target)).unwrap());
        let report = serve(&mut env, BufReader::new(a.try_clone().unwrap()), a, 1).unwrap();
        drop(env);
        let seen = agent.join().unwrap();
        let ret: f64 = seen.observations.iter().filter_map(|o| o.reward).sum();
        let s = &report.episodes[0].summary;
        println!(
            "target {target:>2}: {:>3} steps, return {ret:>7.3}, wasted {:>6.1} MJ, mean wait {:>7.0} s",
            seen.actions_sent,
            s.wasted_energy.as_joules_f64() / 1e6,
            s.mean_waiting / 1e6
        );
    }
}
