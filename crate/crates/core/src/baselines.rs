//! Comparison schedulers: first-come-first-served, backfill with a single
//! reservation for the queue head, and static per-user capping.
//!
//! None of them preempt. FCFS and backfill order the queue by submission
//! time (then id); capping uses the regular submitted order per user.

use crate::error::{Error, Result};
use crate::model::{ClusterState, Job, JobId, Seconds, UserSet};
use crate::runner::{Decision, DecisionKind};

/// Planned start of the blocked queue head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Reservation {
    pub job_id: JobId,
    pub start: Seconds,
    pub cpus: u32,
}

fn fifo_order(state: &ClusterState) -> Vec<JobId> {
    let mut jobs: Vec<(Seconds, JobId)> = state.submitted().iter().map(|j| (j.submit_time, j.id)).collect();
    jobs.sort_unstable();
    jobs.into_iter().map(|(_, id)| id).collect()
}

fn start(state: &mut ClusterState, id: JobId, kind: DecisionKind) -> Decision {
    let job = state.submitted_mut().remove(id).expect("job is queued");
    state.start(job);
    Decision {
        job_id: id,
        kind,
        victims: Vec::new(),
        cpu_idle_after: state.cpu_idle(),
    }
}

/// Starts queue heads while they fit; the first one that does not blocks the rest.
pub fn fcfs_pass(state: &mut ClusterState) -> Result<Vec<Decision>> {
    let mut decisions = Vec::new();
    for id in fifo_order(state) {
        let need = state.submitted().get(id).map(|j| j.cpu_count).unwrap_or(0);
        if need <= state.cpu_idle() {
            decisions.push(start(state, id, DecisionKind::Run));
        } else {
            decisions.push(Decision::requeue(id, DecisionKind::RequeueNoFit, state));
            break;
        }
    }
    Ok(decisions)
}

/// Estimated end of a running job, never earlier than `now`.
fn estimated_end(job: &Job, now: Seconds) -> Seconds {
    let started = job.last_start_time.unwrap_or(now);
    (started + job.runtime_estimate()).max(now)
}

/// Earliest time the head can start given estimated completions, and the CPUs
/// left over at that time once the head is placed.
fn shadow(state: &ClusterState, need: u32) -> (Seconds, u32) {
    let mut ends: Vec<(Seconds, JobId, u32)> = state
        .running()
        .iter()
        .map(|j| (estimated_end(j, state.now), j.id, j.cpu_count))
        .collect();
    ends.sort_unstable();
    let mut free = state.cpu_idle();
    for (end, _, cpus) in ends {
        free += cpus;
        if free >= need {
            return (end, free - need);
        }
    }
    // need <= cpu_total, so the loop always returns.
    (state.now, 0)
}

/// FCFS plus backfill: once the head blocks it gets a reservation, and any
/// later job that fits idle CPUs starts if it either ends (by its estimate)
/// before the reservation or only uses CPUs the reservation leaves spare.
///
/// `reservation` persists across passes so the first computed start of each
/// head is kept; it is cleared when the head starts.
pub fn backfill_pass(state: &mut ClusterState, reservation: &mut Option<Reservation>) -> Result<Vec<Decision>> {
    let order = fifo_order(state);
    let mut decisions = Vec::new();
    let mut rest = order.iter().copied();
    let mut head = None;
    for id in rest.by_ref() {
        let need = state.submitted().get(id).map(|j| j.cpu_count).unwrap_or(0);
        if need <= state.cpu_idle() {
            if reservation.is_some_and(|r| r.job_id == id) {
                *reservation = None;
            }
            decisions.push(start(state, id, DecisionKind::Run));
        } else {
            head = Some((id, need));
            break;
        }
    }
    let Some((head_id, head_need)) = head else {
        return Ok(decisions);
    };
    if head_need > state.cpu_total() {
        return Err(Error::Contract(format!("job {head_id} exceeds the system size")));
    }
    let (shadow_start, mut spare) = shadow(state, head_need);
    if reservation.is_none_or(|r| r.job_id != head_id) {
        *reservation = Some(Reservation {
            job_id: head_id,
            start: shadow_start,
            cpus: head_need,
        });
    }
    decisions.push(Decision::requeue(head_id, DecisionKind::RequeueNoFit, state));

    for id in rest {
        let job = state.submitted().get(id).expect("job is queued");
        let (need, end) = (job.cpu_count, state.now + job.runtime_estimate());
        if need > state.cpu_idle() {
            decisions.push(Decision::requeue(id, DecisionKind::RequeueNoFit, state));
            continue;
        }
        if end <= shadow_start {
            decisions.push(start(state, id, DecisionKind::Backfill));
        } else if need <= spare {
            spare -= need;
            decisions.push(start(state, id, DecisionKind::Backfill));
        } else {
            decisions.push(Decision::requeue(id, DecisionKind::RequeueNoFit, state));
        }
    }
    Ok(decisions)
}

/// Each user is confined to its entitlement; no borrowing, no preemption.
/// Jobs larger than their user's partition are removed from the queue as
/// [`DecisionKind::Unrunnable`].
pub fn capped_pass(state: &mut ClusterState, users: &UserSet) -> Result<Vec<Decision>> {
    let mut decisions = Vec::new();
    for id in state.submitted().ids() {
        let job = state.submitted().get(id).expect("job is queued");
        let partition = users.entitlement(&job.user, state.cpu_total())?;
        if job.cpu_count > partition {
            state.submitted_mut().remove(id);
            decisions.push(Decision::requeue(id, DecisionKind::Unrunnable, state));
            continue;
        }
        let used: u32 = state
            .running()
            .iter()
            .filter(|r| r.user == job.user)
            .map(|r| r.cpu_count)
            .sum();
        if used + job.cpu_count <= partition {
            decisions.push(start(state, id, DecisionKind::Run));
        } else {
            decisions.push(Decision::requeue(id, DecisionKind::RequeueNoFit, state));
        }
    }
    Ok(decisions)
}
