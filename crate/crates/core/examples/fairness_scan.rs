//! Finds intervals where a user waited for CPUs it was entitled to.

use omfs::metrics::fairness_violation_scan;
use omfs::{simulate, Job, PolicyConfig, SchedulerKind, UserSet, UserSpec, WorkloadSpec};

fn main() -> omfs::Result<()> {
    let users = UserSet::new([UserSpec::new("A", 50), UserSpec::new("B", 50)]);
    let workload = WorkloadSpec::new(
        8,
        users,
        [
            Job::new(1, "A", 6, 10_000).checkpointable(),
            Job::new(2, "B", 4, 100).checkpointable().submitted_at(100),
        ],
    );
    let config = PolicyConfig::default();
    for kind in [SchedulerKind::Fcfs, SchedulerKind::Omfs] {
        let trace = simulate(&workload, &config, kind)?;
        let violations = fairness_violation_scan(&trace, &workload.users, &config)?;
        println!("{kind}: {} violation(s)", violations.len());
        for v in violations {
            println!("  {} short {} cpus from {} to {}", v.user, v.deficit, v.start, v.end);
        }
    }
    Ok(())
}
