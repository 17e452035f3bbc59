//! Converts a few lines of a Standard Workload Format trace and replays
//! them on a 16-node platform.

use powersched::engine::{run_simulation, EngineConfig};
use powersched::platform::{NodeSpec, Platform};
use powersched::sched::{PolicyConfig, Scheduler};
use powersched::workload::convert_swf;

const TRACE: &str = "\
; Version: 2.2
; MaxProcs: 16
1    0   0  3000  8 -1 -1  8  3600 -1 1 3 -1 -1 -1 -1 -1 -1
2   60   0  1200 16 -1 -1 16  1800 -1 1 4 -1 -1 -1 -1 -1 -1
3  120   0   400  4 -1 -1  4   600 -1 1 3 -1 -1 -1 -1 -1 -1
4  200   0  9000  2 -1 -1  2 10000 -1 1 5 -1 -1 -1 -1 -1 -1
5  260   0   100 32 -1 -1 32   200 -1 1 5 -1 -1 -1 -1 -1 -1
6 9000   0   600  8 -1 -1  8   900 -1 1 3 -1 -1 -1 -1 -1 -1
";

fn main() {
    let conv = convert_swf(TRACE, 16);
    println!("{} jobs kept, {} dropped, {} unreadable lines", conv.workload.len(), conv.dropped, conv.skipped_lines);
    for alg in ["easy_psus", "easy_psas_ao"] {
        let platform = Platform::homogeneous(16, &NodeSpec::reference());
        let mut policy = Scheduler::new(PolicyConfig::new(alg.parse().unwrap()));
        let r = run_simulation(EngineConfig::default(), platform, &conv.workload, &mut policy).unwrap();
        let s = &r.summary;
        println!(
            "{alg}: total {:.1} MJ, wasted {:.1} MJ, mean wait {:.0} s, utilization {:.3}",
            s.total_energy.as_joules_f64() / 1e6,
            s.wasted_energy.as_joules_f64() / 1e6,
            s.mean_waiting / 1e6,
            s.utilization
        );
    }
}
