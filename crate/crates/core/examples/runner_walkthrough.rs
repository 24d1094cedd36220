//! One runner call on the reclaim scenario: B fills the machine, A claims
//! its share with a rigid job.

use omfs::runner::try_run;
use omfs::{ClusterState, Job, PolicyConfig, UserSet, UserSpec};

fn main() -> omfs::Result<()> {
    let users = UserSet::new([UserSpec::new("A", 50), UserSpec::new("B", 25), UserSpec::new("C", 25)]);
    let mut state = ClusterState::new(16);
    state.now = 5000;
    for id in 1..=4 {
        let mut job = Job::new(id, "B", 4, 10_000).checkpointable();
        job.last_start_time = Some(0);
        state.admit_running(job)?;
    }
    println!("idle before: {}", state.cpu_idle());

    let rigid = Job::new(5, "A", 6, 5000).submitted_at(5000);
    let decision = try_run(rigid, &mut state, &users, &PolicyConfig::default())?;
    println!("decision: {}", decision.kind);
    for v in &decision.victims {
        println!("  evicted job {} ({}, {} cpus): {:?}", v.job_id, v.user, v.cpus, v.disposition);
    }
    println!("idle after: {}", decision.cpu_idle_after);
    println!("queued: {:?}", state.submitted().ids());
    Ok(())
}
