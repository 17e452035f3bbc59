//! Sweeps the idle timeout for two algorithms and prints the comparison
//! CSV the `sweep` subcommand writes.

use powersched::cli::run_sweep;
use powersched::config::Config;
use powersched::platform::{NodeSpec, Platform};
use powersched::workload::{generate_workload, GenSpec};

fn main() {
    let base = Config::parse("paths:\n  workload: unused.json\n  platform: unused.json\n  output: sweep-out\n", false)
        .unwrap()
        .resolve()
        .unwrap();
    let spec = GenSpec {
        num_jobs: 200,
        arrival_rate: 1.0 / 2400.0,
        mean_runtime: 1800.0,
        runtime_cv: 1.0,
        min_res: 1,
        max_res: 32,
        reqtime_factor: 1.5,
        seed: 3,
    };
    let workload = generate_workload(&spec).unwrap();
    let platform = Platform::homogeneous(32, &NodeSpec::reference());
    let algorithms = ["easy_psas_ao".to_string(), "fcfs_psas_ao".to_string()];
    let timeouts: Vec<f64> = (1..=6).map(|i| 600.0 * i as f64).collect();
    let csv = run_sweep(&base, &algorithms, &timeouts, &platform, &workload, false).unwrap();
    print!("{csv}");
}
