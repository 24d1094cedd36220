//! OMFS against FCFS, backfill and per-user caps on a workload where only
//! one user has work.

use omfs::metrics::{compare_report, MetricsReport};
use omfs::{parse_config, parse_workload, simulate, SchedulerKind};

fn main() -> omfs::Result<()> {
    let system = parse_config(include_str!("../fixtures/config.json"))?;
    let workload = parse_workload(include_str!("../fixtures/pooling.wl"))?.reconcile(&system)?;
    let reports = SchedulerKind::ALL
        .into_iter()
        .map(|kind| {
            let trace = simulate(&workload, &system.policy, kind)?;
            MetricsReport::from_trace(&trace, &workload.users, &system.policy)
        })
        .collect::<omfs::Result<Vec<_>>>()?;
    let comparison = compare_report(reports)?;
    print!("{}", comparison.to_text());
    if let Some(gain) = comparison.pooling_gain() {
        println!("utilization gained by pooling idle shares: {gain:+.2}");
    }
    Ok(())
}
