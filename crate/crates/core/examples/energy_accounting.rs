//! Per-state energy for one node that goes through a full sleep cycle
//! between two short jobs, with and without idle shutdown.

use powersched::engine::{run_simulation, EngineConfig};
use powersched::metrics::TraceState;
use powersched::platform::{NodeSpec, Platform};
use powersched::sched::{PolicyConfig, Scheduler};
use powersched::workload::{Job, Workload};

fn main() {
    let workload = Workload::new(1, vec![Job::new(1, 1, 0, 100, 100), Job::new(2, 1, 20_000, 100, 100)]).unwrap();
    for alg in ["easy_psus", "easy_psas_ao"] {
        let platform = Platform::homogeneous(1, &NodeSpec::reference());
        let mut policy = Scheduler::new(PolicyConfig::new(alg.parse().unwrap()));
        let r = run_simulation(EngineConfig::default(), platform, &workload, &mut policy).unwrap();
        println!("{alg} (ends at {}):", r.summary.end_time);
        for st in TraceState::ALL {
            println!("  {:<14} {:>12.0} J", st.as_str(), r.summary.energy_by_state[&st].as_joules_f64());
        }
        println!("  {:<14} {:>12.0} J", "wasted", r.summary.wasted_energy.as_joules_f64());
        println!("  {:<14} {:>12.0} J", "total", r.summary.total_energy.as_joules_f64());
        for t in &r.node_traces {
            for iv in &t.intervals {
                println!("    {:>8} .. {:>8}  {}", iv.begin.as_secs_f64(), iv.end.as_secs_f64(), iv.state.as_str());
            }
        }
    }
}
