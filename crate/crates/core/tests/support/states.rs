//! Random cluster states for runner-level tests.

use std::collections::BTreeMap;

use std::collections::BTreeSet;

use omfs::model::{ClusterState, Job, UserSet, UserSpec};
use omfs::policy::PolicyConfig;
use omfs::runner::{try_run, Disposition};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::reference_runner::{self, OJob, OState};

pub const NOW: u64 = 10_000;

#[derive(Debug, Clone)]
pub struct Case {
    pub users: UserSet,
    pub state: ClusterState,
    /// Already in `state`'s submitted queue.
    pub candidate: Job,
}

fn random_job(rng: &mut ChaCha8Rng, id: u64, users: &UserSet, cpu_total: u32) -> Job {
    let names: Vec<&str> = users.iter().map(|u| u.name.as_str()).collect();
    let user = names[rng.random_range(0..names.len())];
    let cpus = if rng.random_bool(0.8) {
        rng.random_range(1..=(cpu_total / 2).max(1))
    } else {
        rng.random_range(0..=cpu_total)
    };
    let mut job = Job::new(id, user, cpus, 1000).with_priority(rng.random_range(0..4));
    if rng.random_bool(0.7) {
        job = if rng.random_bool(0.5) { job.checkpointable() } else { job.preemptable() };
    }
    let submit = rng.random_range(0..NOW);
    job.submit_time = submit;
    job.last_start_time = Some(rng.random_range(submit..=NOW));
    job
}

/// State with at most `max_jobs` jobs (running plus submitted), of which the
/// candidate is one.
pub fn random_case(seed: u64, max_cpus: u32, max_users: usize, max_jobs: usize) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cpu_total = rng.random_range(1..=max_cpus);
    let n_users = rng.random_range(1..=max_users);
    let mut left = 100u32;
    let mut specs = Vec::new();
    for i in 0..n_users {
        let p = if i + 1 == n_users && rng.random_bool(0.7) {
            left
        } else {
            rng.random_range(0..=left)
        };
        left -= p;
        specs.push(UserSpec::new(format!("u{i}"), p));
    }
    let users = UserSet::new(specs);

    let mut state = ClusterState::new(cpu_total);
    state.now = NOW;
    let n_jobs = rng.random_range(1..=max_jobs);
    let candidate = {
        let mut j = random_job(&mut rng, 0, &users, cpu_total);
        j.last_start_time = None;
        j
    };
    // Lean towards busy clusters so eviction paths are exercised.
    for id in 1..n_jobs as u64 {
        let job = random_job(&mut rng, id, &users, cpu_total);
        if rng.random_bool(0.75) && job.cpu_count <= state.cpu_idle() {
            state.admit_running(job).expect("fits");
        } else {
            let mut j = job;
            j.last_start_time = None;
            state.submit(j).expect("fresh id");
        }
    }
    state.submit(candidate.clone()).expect("fresh id");
    Case {
        users,
        state,
        candidate,
    }
}

fn to_ojob(j: &Job) -> OJob {
    OJob {
        id: j.id,
        user: j.user.clone(),
        priority: j.priority,
        cpus: j.cpu_count,
        submit: j.submit_time,
        last_start: j.last_start_time.unwrap_or(0),
        preemptable: j.preemptable,
        checkpointable: j.checkpointable,
    }
}

/// The same state for the reference runner, with the candidate taken out
/// of the submitted queue.
pub fn to_oracle(case: &Case) -> (OState, OJob) {
    let st = &case.state;
    let running: Vec<OJob> = st.running().iter().map(to_ojob).collect();
    let busy: i64 = running.iter().map(|j| j.cpus as i64).sum();
    let submitted = st
        .submitted()
        .iter()
        .filter(|j| j.id != case.candidate.id)
        .map(to_ojob)
        .collect();
    let percent: BTreeMap<String, u32> = case.users.iter().map(|u| (u.name.clone(), u.percent)).collect();
    (
        OState {
            cpu_total: st.cpu_total(),
            cpu_idle: st.cpu_total() as i64 - busy,
            submitted,
            running,
            percent,
        },
        to_ojob(&case.candidate),
    )
}

fn ids<'a>(jobs: impl Iterator<Item = &'a u64>) -> BTreeSet<u64> {
    jobs.copied().collect()
}

/// Runs the candidate through both runners; returns a description of the
/// first difference.
pub fn oracle_mismatch(case: &Case) -> Option<String> {
    let (mut ostate, ojob) = to_oracle(case);
    let expected = reference_runner::runner(&mut ostate, ojob);

    let mut state = case.state.clone();
    let job = state.take(case.candidate.id).unwrap();
    let d = try_run(job, &mut state, &case.users, &PolicyConfig::literal()).unwrap();
    let victims: Vec<(u64, bool)> = d
        .victims
        .iter()
        .map(|v| (v.job_id, v.disposition == Disposition::Checkpointed))
        .collect();

    let got = (d.kind.as_str(), victims, i64::from(d.cpu_idle_after));
    let want = (expected.kind, expected.victims, expected.cpu_idle_after);
    if got != want {
        return Some(format!("decision {got:?} != oracle {want:?}"));
    }
    let sub = ids(state.submitted().iter().map(|j| &j.id));
    let osub = ids(ostate.submitted.iter().map(|j| &j.id));
    let run = ids(state.running().iter().map(|j| &j.id));
    let orun = ids(ostate.running.iter().map(|j| &j.id));
    if sub != osub || run != orun {
        return Some(format!("queues {sub:?}/{run:?} != oracle {osub:?}/{orun:?}"));
    }
    None
}
