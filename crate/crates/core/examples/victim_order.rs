//! Which running job gets evicted first, and why.

use omfs::model::usage_snapshot;
use omfs::policy::running_victim_order;
use omfs::{ClusterState, Job, PolicyConfig, UserSet, UserSpec};

fn main() -> omfs::Result<()> {
    let users = UserSet::new([UserSpec::new("A", 50), UserSpec::new("B", 50)]);
    let mut state = ClusterState::new(16);
    state.now = 4000;
    let jobs = [
        // B runs 12 of its 8 entitled CPUs.
        (1, "B", 8, 0, 0),
        (2, "B", 4, 0, 3000),
        // A is within its share.
        (3, "A", 4, 0, 0),
    ];
    for (id, user, cpus, priority, started) in jobs {
        let mut job = Job::new(id, user, cpus, 10_000).checkpointable().with_priority(priority);
        job.last_start_time = Some(started);
        state.admit_running(job)?;
    }

    let config = PolicyConfig::default();
    let mut keyed: Vec<_> = state
        .running()
        .iter()
        .map(|j| {
            let usage = usage_snapshot(&j.user, &state, &users)?;
            Ok((running_victim_order(j, state.now, &usage, &config), j.id, j.user.clone()))
        })
        .collect::<omfs::Result<_>>()?;
    keyed.sort();
    for (key, id, user) in keyed {
        println!(
            "job {id} ({user}) tier {} priority {} running {}s",
            key.victim_tier, key.user_local_priority, -key.elapsed_rank
        );
    }
    Ok(())
}
