//! Simulates the reclaim fixture and prints the trace and its metrics.

use omfs::metrics::MetricsReport;
use omfs::{parse_config, parse_workload, simulate, SchedulerKind};

fn main() -> omfs::Result<()> {
    let system = parse_config(include_str!("../fixtures/s1.json"))?;
    let workload = parse_workload(include_str!("../fixtures/s1.wl"))?.reconcile(&system)?;
    let trace = simulate(&workload, &system.policy, SchedulerKind::Omfs)?;
    print!("{}", trace.to_csv());
    println!();
    print!("{}", MetricsReport::from_trace(&trace, &workload.users, &system.policy)?);
    println!("trace_digest {}", trace.digest());
    Ok(())
}
