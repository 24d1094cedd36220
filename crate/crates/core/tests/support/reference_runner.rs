//! Reference fair-share runner, written as a straight-line transcription of
//! the textbook procedure and sharing no code with the crate's runner.
//!
//! Two readings are fixed here rather than left open by the procedure:
//! the running queue only ever yields preemptable jobs, and a drained queue
//! restores the evicted jobs and requeues the candidate.

use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OJob {
    pub id: u64,
    pub user: String,
    pub priority: u32,
    pub cpus: u32,
    pub submit: u64,
    pub last_start: u64,
    pub preemptable: bool,
    pub checkpointable: bool,
}

#[derive(Debug, Clone)]
pub struct OState {
    pub cpu_total: u32,
    pub cpu_idle: i64,
    pub submitted: Vec<OJob>,
    pub running: Vec<OJob>,
    pub percent: BTreeMap<String, u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OOutcome {
    pub kind: &'static str,
    /// (job id, checkpointed?) in eviction order.
    pub victims: Vec<(u64, bool)>,
    pub cpu_idle_after: i64,
}

/// "Least prioritized": lowest priority, then the earliest start, then
/// the earliest submission, then the lowest id.
fn dequeue_least_prioritized(running: &mut Vec<OJob>) -> Option<OJob> {
    let pos = running
        .iter()
        .enumerate()
        .filter(|(_, j)| j.preemptable)
        .min_by_key(|(_, j)| (j.priority, j.last_start, j.submit, j.id))
        .map(|(i, _)| i)?;
    Some(running.remove(pos))
}

pub fn runner(s: &mut OState, j: OJob) -> OOutcome {
    // Usage of the candidate's user.
    let user_pable: i64 = s
        .running
        .iter()
        .filter(|r| r.user == j.user && r.preemptable)
        .map(|r| r.cpus as i64)
        .sum();
    let user_nonpable: i64 = s
        .running
        .iter()
        .filter(|r| r.user == j.user && !r.preemptable)
        .map(|r| r.cpus as i64)
        .sum();
    let user_total = user_pable + user_nonpable;
    let entitled = (s.percent[&j.user] as i64 * s.cpu_total as i64) / 100;

    // Non-preemptable cap.
    if !j.preemptable && user_nonpable + j.cpus as i64 >= entitled {
        s.submitted.push(j);
        return OOutcome {
            kind: "requeue_over_nonpreemptable_cap",
            victims: vec![],
            cpu_idle_after: s.cpu_idle,
        };
    }
    let mut kind = "run";
    let mut victims = Vec::new();
    if s.cpu_idle > j.cpus as i64 {
        // Fits the idle CPUs: run.
    } else if j.cpus as i64 > entitled - user_total {
        // Beyond the remaining entitlement.
        s.submitted.push(j);
        return OOutcome {
            kind: "requeue_no_entitlement_fit",
            victims: vec![],
            cpu_idle_after: s.cpu_idle,
        };
    } else {
        // Evict until the candidate fits.
        let saved = (s.cpu_idle, s.running.clone(), s.submitted.clone());
        while s.cpu_idle < j.cpus as i64 {
            let Some(victim) = dequeue_least_prioritized(&mut s.running) else {
                (s.cpu_idle, s.running, s.submitted) = saved;
                s.submitted.push(j);
                return OOutcome {
                    kind: "requeue_protected_capacity",
                    victims: vec![],
                    cpu_idle_after: s.cpu_idle,
                };
            };
            victims.push((victim.id, victim.checkpointable));
            s.cpu_idle += victim.cpus as i64;
            if victim.checkpointable {
                s.submitted.push(victim);
            }
        }
        kind = "run_after_preemption";
    }
    let cpus = j.cpus as i64;
    s.running.push(j);
    s.cpu_idle -= cpus;
    OOutcome {
        kind,
        victims,
        cpu_idle_after: s.cpu_idle,
    }
}
