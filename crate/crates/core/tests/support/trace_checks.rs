//! Trace audits written against the CSV-level record semantics only.

use std::collections::BTreeMap;

use omfs::model::UserSet;
use omfs::sim::{Trace, TraceEvent};

#[derive(Debug, Clone)]
struct Live {
    user: String,
    cpus: u32,
    preemptable: bool,
}

/// First record where `cpu_idle_after` disagrees with the running set.
pub fn conservation_error(trace: &Trace) -> Option<String> {
    let mut running: BTreeMap<u64, u32> = BTreeMap::new();
    for r in &trace.records {
        let id = r.job_id.unwrap_or(u64::MAX);
        match r.event {
            TraceEvent::Start => {
                running.insert(id, r.cpus.unwrap());
            }
            TraceEvent::Finish | TraceEvent::Checkpoint | TraceEvent::Kill if running.remove(&id).is_none() => {
                return Some(format!("seq {}: {} of job {id} which is not running", r.seq, r.event));
            }
            _ => {}
        }
        let busy: u32 = running.values().sum();
        if busy > trace.cpu_total || r.cpu_idle_after != trace.cpu_total - busy {
            return Some(format!(
                "seq {}: cpu_idle_after {} but {} of {} CPUs running",
                r.seq, r.cpu_idle_after, busy, trace.cpu_total
            ));
        }
    }
    None
}

/// Every start of a non-preemptable job must leave the user's
/// non-preemptable load strictly under its entitlement.
pub fn nonpreemptable_cap_error(trace: &Trace, users: &UserSet) -> Option<String> {
    let mut submitted: BTreeMap<u64, bool> = BTreeMap::new();
    let mut running: BTreeMap<u64, Live> = BTreeMap::new();
    for r in &trace.records {
        let Some(id) = r.job_id else { continue };
        match r.event {
            TraceEvent::Submit => {
                submitted.insert(id, r.detail_value("flags").unwrap().contains('P'));
            }
            TraceEvent::Start => {
                let user = r.user.clone().unwrap();
                let preemptable = submitted[&id];
                let cpus = r.cpus.unwrap();
                if !preemptable {
                    let np: u32 = running
                        .values()
                        .filter(|j| j.user == user && !j.preemptable)
                        .map(|j| j.cpus)
                        .sum();
                    let entitled = u64::from(users.get(&user).unwrap().percent) * u64::from(trace.cpu_total) / 100;
                    if u64::from(np + cpus) >= entitled {
                        return Some(format!(
                            "t={} job {id}: non-preemptable {np}+{cpus} >= entitled {entitled}",
                            r.time
                        ));
                    }
                }
                running.insert(id, Live { user, cpus, preemptable });
            }
            TraceEvent::Finish | TraceEvent::Checkpoint | TraceEvent::Kill => {
                running.remove(&id);
            }
            _ => {}
        }
    }
    None
}

/// Sums each job's working intervals (start or restart completion up to
/// finish or eviction; a kill discards the attempt) and compares finished
/// jobs against their runtime.
pub fn work_accounting_error(trace: &Trace) -> Option<String> {
    let mut runtime: BTreeMap<u64, u64> = BTreeMap::new();
    let mut done: BTreeMap<u64, u64> = BTreeMap::new();
    let mut since: BTreeMap<u64, u64> = BTreeMap::new();
    let mut finished = 0usize;
    for r in &trace.records {
        let Some(id) = r.job_id else { continue };
        match r.event {
            TraceEvent::Submit => {
                runtime.insert(id, r.detail_value("runtime").unwrap().parse().unwrap());
                done.insert(id, 0);
            }
            TraceEvent::Start => {
                if r.detail_value("restart") == Some("0") {
                    since.insert(id, r.time);
                }
            }
            TraceEvent::RestartDone => {
                since.insert(id, r.time);
            }
            TraceEvent::Checkpoint => {
                if let Some(t) = since.remove(&id) {
                    *done.get_mut(&id).unwrap() += r.time - t;
                }
            }
            TraceEvent::Kill => {
                since.remove(&id);
                done.insert(id, 0);
            }
            TraceEvent::Finish => {
                let Some(t) = since.remove(&id) else {
                    return Some(format!("job {id} finished at {} while not working", r.time));
                };
                let total = done[&id] + (r.time - t);
                if total != runtime[&id] {
                    return Some(format!("job {id}: worked {total}, runtime {}", runtime[&id]));
                }
                finished += 1;
            }
            _ => {}
        }
    }
    let expected = trace.jobs.values().filter(|j| j.finish_time.is_some()).count();
    (finished != expected).then(|| format!("{finished} finish records for {expected} finished jobs"))
}

/// Evictions of jobs that had run for less than `quantum` since their last start.
pub fn protected_evictions(trace: &Trace, quantum: u64) -> Vec<String> {
    let mut started: BTreeMap<u64, u64> = BTreeMap::new();
    let mut out = Vec::new();
    for r in &trace.records {
        let Some(id) = r.job_id else { continue };
        match r.event {
            TraceEvent::Start => {
                started.insert(id, r.time);
            }
            e if e.is_eviction() => {
                let t = started[&id];
                if r.time - t < quantum {
                    out.push(format!("job {id} evicted at {} after {}s", r.time, r.time - t));
                }
            }
            _ => {}
        }
    }
    out
}
