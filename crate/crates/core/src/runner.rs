//! The memoryless fair-share runner: admission of one job, victim selection,
//! and a scheduling pass over the submitted queue.
//!
//! [`try_run`] checks, in order:
//!
//! 1. a non-preemptable job whose user's non-preemptable load would reach the
//!    entitlement is requeued;
//! 2. a job that fits the idle CPUs runs, regardless of entitlement;
//! 3. a job larger than the user's remaining entitlement is requeued;
//! 4. otherwise running jobs are evicted until the job fits, and it runs.
//!
//! Evicted checkpointable jobs go back to the submitted queue with their
//! progress; other evicted jobs are killed.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::model::{usage_from_running, ClusterState, Job, JobId, JobState, UsageSnapshot, UserSet};
use crate::policy::{running_victim_order, tier, PolicyConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DecisionKind {
    Run,
    RunAfterPreemption,
    RequeueOverNonPreemptableCap,
    RequeueNoEntitlementFit,
    /// Eviction could not free enough CPUs without touching protected jobs.
    RequeueProtectedCapacity,
    /// Started out of queue order by a backfill pass.
    Backfill,
    /// Baseline schedulers: the job does not fit now.
    RequeueNoFit,
    /// Baseline schedulers: the job can never fit; it was removed from the queue.
    Unrunnable,
}

impl DecisionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DecisionKind::Run => "run",
            DecisionKind::RunAfterPreemption => "run_after_preemption",
            DecisionKind::RequeueOverNonPreemptableCap => "requeue_over_nonpreemptable_cap",
            DecisionKind::RequeueNoEntitlementFit => "requeue_no_entitlement_fit",
            DecisionKind::RequeueProtectedCapacity => "requeue_protected_capacity",
            DecisionKind::Backfill => "backfill",
            DecisionKind::RequeueNoFit => "requeue_no_fit",
            DecisionKind::Unrunnable => "unrunnable",
        }
    }

    /// The job was moved to the running set.
    pub fn started(self) -> bool {
        matches!(
            self,
            DecisionKind::Run | DecisionKind::RunAfterPreemption | DecisionKind::Backfill
        )
    }
}

impl fmt::Display for DecisionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Disposition {
    Checkpointed,
    Dropped,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Victim {
    pub job_id: JobId,
    pub user: String,
    pub cpus: u32,
    pub disposition: Disposition,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decision {
    pub job_id: JobId,
    pub kind: DecisionKind,
    /// Evicted jobs, in eviction order.
    pub victims: Vec<Victim>,
    pub cpu_idle_after: u32,
}

impl Decision {
    pub(crate) fn requeue(job_id: JobId, kind: DecisionKind, state: &ClusterState) -> Self {
        Decision {
            job_id,
            kind,
            victims: Vec::new(),
            cpu_idle_after: state.cpu_idle(),
        }
    }
}

/// Result of [`preempt_until`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Preemption {
    Freed(Vec<Victim>),
    /// Not enough evictable CPUs; the state was left untouched.
    ProtectedCapacity { shortfall: u32 },
}

/// True when the user is entitled to run `job` right now: the job fits the
/// remaining entitlement and, if non-preemptable, stays under the
/// non-preemptable cap. Such a job never waits on a fixpoint of passes
/// unless quantum protection holds the capacity.
pub fn entitled_to_run(job: &Job, usage: &UsageSnapshot) -> bool {
    let fits = i64::from(job.cpu_count) <= usage.headroom();
    let capped = !job.preemptable && usage.non_preemptable_cpus + job.cpu_count >= usage.entitled_cpus;
    fits && !capped
}

/// Attempts to run `job`. A requeued job is put back in the submitted queue.
pub fn try_run(job: Job, state: &mut ClusterState, users: &UserSet, config: &PolicyConfig) -> Result<Decision> {
    if !job.state.is_queued() || state.running().contains(job.id) {
        return Err(Error::Contract(format!(
            "try_run on job {} which is {}",
            job.id, job.state
        )));
    }
    job.check(state.cpu_total())?;
    state.submitted_mut().remove(job.id);

    let entitled = users.entitlement(&job.user, state.cpu_total())?;
    let usage = usage_from_running(&job.user, state.running(), entitled);

    if !job.preemptable && usage.non_preemptable_cpus + job.cpu_count >= usage.entitled_cpus {
        return Ok(requeue(job, state, DecisionKind::RequeueOverNonPreemptableCap));
    }
    if config.idle_fit_mode.fits(state.cpu_idle(), job.cpu_count) {
        return Ok(start(job, state, DecisionKind::Run, Vec::new()));
    }
    if i64::from(job.cpu_count) > usage.headroom() {
        return Ok(requeue(job, state, DecisionKind::RequeueNoEntitlementFit));
    }
    match preempt_until(job.cpu_count, state, users, config)? {
        Preemption::Freed(victims) => Ok(start(job, state, DecisionKind::RunAfterPreemption, victims)),
        Preemption::ProtectedCapacity { .. } => Ok(requeue(job, state, DecisionKind::RequeueProtectedCapacity)),
    }
}

fn requeue(job: Job, state: &mut ClusterState, kind: DecisionKind) -> Decision {
    let id = job.id;
    state.submitted_mut().insert(job);
    Decision::requeue(id, kind, state)
}

fn start(job: Job, state: &mut ClusterState, kind: DecisionKind, victims: Vec<Victim>) -> Decision {
    let id = job.id;
    state.start(job);
    Decision {
        job_id: id,
        kind,
        victims,
        cpu_idle_after: state.cpu_idle(),
    }
}

/// Evicts the minimal running job under [`running_victim_order`] until
/// `needed` CPUs are idle. Usage snapshots are recomputed after every
/// eviction, so a user stops being "over entitlement" as soon as it is not.
pub fn preempt_until(needed: u32, state: &mut ClusterState, users: &UserSet, config: &PolicyConfig) -> Result<Preemption> {
    if needed > state.cpu_total() {
        return Err(Error::Contract(format!(
            "cannot free {needed} CPUs on a {}-CPU system",
            state.cpu_total()
        )));
    }
    let mut evicted: Vec<Job> = Vec::new();
    let mut victims = Vec::new();
    while state.cpu_idle() < needed {
        let Some(target) = min_victim(state, users, config)? else {
            let shortfall = needed - state.cpu_idle();
            rollback(state, evicted);
            return Ok(Preemption::ProtectedCapacity { shortfall });
        };
        let original = state
            .running_mut()
            .remove(target)
            .expect("victim chosen from the running set");
        let mut job = original.clone();
        let disposition = if job.checkpointable {
            job.state = JobState::Checkpointed;
            job.checkpoint_count += 1;
            state.submitted_mut().insert(job);
            Disposition::Checkpointed
        } else {
            Disposition::Dropped
        };
        victims.push(Victim {
            job_id: original.id,
            user: original.user.clone(),
            cpus: original.cpu_count,
            disposition,
        });
        evicted.push(original);
    }
    Ok(Preemption::Freed(victims))
}

fn min_victim(state: &ClusterState, users: &UserSet, config: &PolicyConfig) -> Result<Option<JobId>> {
    let mut usage: BTreeMap<&str, UsageSnapshot> = BTreeMap::new();
    for job in state.running().iter() {
        if !usage.contains_key(job.user.as_str()) {
            let entitled = users.entitlement(&job.user, state.cpu_total())?;
            usage.insert(&job.user, usage_from_running(&job.user, state.running(), entitled));
        }
    }
    Ok(state
        .running()
        .iter()
        .map(|j| (running_victim_order(j, state.now, &usage[j.user.as_str()], config), j.id))
        .min()
        .filter(|(key, _)| key.victim_tier < tier::QUANTUM_PROTECTED)
        .map(|(_, id)| id))
}

fn rollback(state: &mut ClusterState, evicted: Vec<Job>) {
    for job in evicted {
        state.submitted_mut().remove(job.id);
        state.running_mut().insert(job);
    }
}

/// One attempt for every job queued at the start of the pass, in queue
/// order. Jobs requeued (or evicted) during the pass are not retried in it.
pub fn scheduler_pass(state: &mut ClusterState, users: &UserSet, config: &PolicyConfig) -> Result<Vec<Decision>> {
    let order = state.submitted().ids();
    let mut decisions = Vec::with_capacity(order.len());
    for id in order {
        let job = state
            .submitted_mut()
            .remove(id)
            .expect("queued jobs stay queued within a pass");
        decisions.push(try_run(job, state, users, config)?);
    }
    Ok(decisions)
}
