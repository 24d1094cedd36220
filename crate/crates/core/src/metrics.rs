//! Trace analysis: utilization, waiting, C/R activity, the fairness scan and
//! side-by-side scheduler comparison.
//!
//! Everything here works from the trace records alone. State is evaluated at
//! the end of each instant (after the last record carrying that time), since
//! records within one instant describe a single scheduling step.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use crate::error::{Error, Result};
use crate::model::{entitled_cpu_count, Job, JobId, Seconds, UsageSnapshot, UserSet};
use crate::policy::PolicyConfig;
use crate::runner::entitled_to_run;
use crate::sim::{SchedulerKind, Trace, TraceEvent, TraceRecord};

fn round6(num: u128, den: u128) -> f64 {
    if den == 0 {
        return 0.0;
    }
    let scaled = (num * 2_000_000 + den) / (2 * den);
    scaled as f64 / 1e6
}

/// Busy CPU-seconds over `[0, horizon)` divided by available CPU-seconds,
/// rounded to six decimals. An empty trace or a zero horizon gives 0.
pub fn utilization(trace: &Trace, horizon: Seconds) -> f64 {
    let den = u128::from(trace.cpu_total) * u128::from(horizon);
    round6(busy_cpu_seconds(trace, horizon), den)
}

fn busy_cpu_seconds(trace: &Trace, horizon: Seconds) -> u128 {
    let mut busy = 0u128;
    let mut since = 0;
    let mut level = 0u32;
    for r in &trace.records {
        let t = r.time.min(horizon);
        busy += u128::from(level) * u128::from(t - since);
        since = t;
        level = trace.cpu_total - r.cpu_idle_after.min(trace.cpu_total);
    }
    busy + u128::from(level) * u128::from(horizon.saturating_sub(since))
}

/// An interval in which a user had a job it was entitled to run waiting in
/// the queue for longer than the grace bound.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FairnessViolation {
    pub user: String,
    pub start: Seconds,
    pub end: Seconds,
    /// Largest unused entitlement (CPUs) seen during the interval.
    pub deficit: u32,
}

/// How long a suitable job may wait before it counts as a violation:
/// the quantum when protection is on, plus the worst checkpoint and restart
/// costs on this machine.
pub fn fairness_grace(config: &PolicyConfig, cpu_total: u32) -> Seconds {
    let quantum = if config.quantum_protection { config.quantum_seconds } else { 0 };
    quantum + config.cr_cost(cpu_total)
}

#[derive(Debug, Clone)]
struct Replay {
    cpu_total: u32,
    queued: BTreeMap<JobId, Job>,
    running: BTreeMap<JobId, Job>,
    known: BTreeMap<JobId, Job>,
}

impl Replay {
    fn new(cpu_total: u32) -> Self {
        Replay {
            cpu_total,
            queued: BTreeMap::new(),
            running: BTreeMap::new(),
            known: BTreeMap::new(),
        }
    }

    fn idle(&self) -> i64 {
        i64::from(self.cpu_total) - self.running.values().map(|j| i64::from(j.cpu_count)).sum::<i64>()
    }

    fn apply(&mut self, r: &TraceRecord) -> Result<()> {
        let Some(id) = r.job_id else { return Ok(()) };
        let missing = || Error::UnknownJob(id);
        match r.event {
            TraceEvent::Submit => {
                let flags = r.detail_value("flags").unwrap_or("-");
                let mut job = Job::new(id, r.user.clone().unwrap_or_default(), r.cpus.unwrap_or(0), 0)
                    .submitted_at(r.time);
                job.preemptable = flags.contains('P');
                job.checkpointable = flags.contains('C');
                job.priority = r.detail_value("priority").and_then(|p| p.parse().ok()).unwrap_or(0);
                self.known.insert(id, job.clone());
                self.queued.insert(id, job);
            }
            TraceEvent::Start => {
                let job = self.queued.remove(&id).ok_or_else(missing)?;
                self.running.insert(id, job);
            }
            TraceEvent::Finish | TraceEvent::Checkpoint | TraceEvent::Kill => {
                self.running.remove(&id).ok_or_else(missing)?;
            }
            TraceEvent::CheckpointDone | TraceEvent::Resubmit => {
                let job = self.known.get(&id).cloned().ok_or_else(missing)?;
                self.queued.insert(id, job);
            }
            TraceEvent::Unrunnable | TraceEvent::Stranded => {
                self.queued.remove(&id);
            }
            TraceEvent::RestartDone
            | TraceEvent::QuantumExpired
            | TraceEvent::Wakeup
            | TraceEvent::Reserve
            | TraceEvent::Stale => {}
        }
        Ok(())
    }

    fn usage(&self, user: &str, entitled: u32) -> UsageSnapshot {
        let (mut p, mut np) = (0, 0);
        for j in self.running.values().filter(|j| j.user == user) {
            if j.preemptable {
                p += j.cpu_count;
            } else {
                np += j.cpu_count;
            }
        }
        UsageSnapshot {
            preemptable_cpus: p,
            non_preemptable_cpus: np,
            total_cpus: p + np,
            entitled_cpus: entitled,
        }
    }

    /// Unused entitlement of every user with a waiting job it is entitled to run.
    fn starved(&self, users: &UserSet) -> Result<BTreeMap<String, u32>> {
        let mut out = BTreeMap::new();
        for job in self.queued.values() {
            if out.contains_key(&job.user) {
                continue;
            }
            let entitled = users.entitlement(&job.user, self.cpu_total)?;
            let usage = self.usage(&job.user, entitled);
            if entitled_to_run(job, &usage) {
                out.insert(job.user.clone(), usage.headroom().max(0) as u32);
            }
        }
        Ok(out)
    }
}

/// Replays an OMFS trace and reports every maximal interval, longer than
/// [`fairness_grace`], in which a user had a queued job satisfying
/// [`entitled_to_run`]. Intervals still open at the end of the trace are
/// closed at its last record.
pub fn fairness_violation_scan(trace: &Trace, users: &UserSet, config: &PolicyConfig) -> Result<Vec<FairnessViolation>> {
    let grace = fairness_grace(config, trace.cpu_total);
    let mut replay = Replay::new(trace.cpu_total);
    let mut open: BTreeMap<String, (Seconds, u32)> = BTreeMap::new();
    let mut out = Vec::new();

    let mut close = |user: String, (start, deficit): (Seconds, u32), end: Seconds| {
        if end - start > grace {
            out.push(FairnessViolation {
                user,
                start,
                end,
                deficit,
            });
        }
    };

    let records = &trace.records;
    let mut i = 0;
    while i < records.len() {
        let now = records[i].time;
        while i < records.len() && records[i].time == now {
            replay.apply(&records[i])?;
            i += 1;
        }
        let starved = replay.starved(users)?;
        let ended: Vec<String> = open.keys().filter(|u| !starved.contains_key(*u)).cloned().collect();
        for user in ended {
            let iv = open.remove(&user).expect("key listed above");
            close(user, iv, now);
        }
        for (user, deficit) in starved {
            let entry = open.entry(user).or_insert((now, 0));
            entry.1 = entry.1.max(deficit);
        }
    }
    let end = trace.makespan();
    for (user, iv) in open {
        close(user, iv, end);
    }
    out.sort_by(|a, b| (a.start, &a.user).cmp(&(b.start, &b.user)));
    Ok(out)
}

/// Checks that every record's idle count equals the machine size minus the
/// CPUs of the replayed running set. Returns the first offending record.
pub fn capacity_mismatch(trace: &Trace) -> Result<Option<TraceRecord>> {
    let mut replay = Replay::new(trace.cpu_total);
    for r in &trace.records {
        replay.apply(r)?;
        if replay.idle() != i64::from(r.cpu_idle_after) {
            return Ok(Some(r.clone()));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserStats {
    pub jobs: usize,
    pub started: usize,
    pub mean_wait: f64,
    pub max_wait: Seconds,
    pub cpu_seconds: u128,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WaitStats {
    /// Mean first-start minus submit over jobs that started.
    pub mean_wait: f64,
    pub max_wait: Seconds,
    /// Time spent back in the queue after evictions, summed over all jobs.
    pub requeue_wait: Seconds,
    pub never_started: usize,
    pub per_user: BTreeMap<String, UserStats>,
}

pub fn wait_stats(trace: &Trace) -> WaitStats {
    #[derive(Default)]
    struct Acc {
        jobs: usize,
        waits: Vec<Seconds>,
        cpu_seconds: u128,
    }
    let mut acc: BTreeMap<String, Acc> = BTreeMap::new();
    let mut queued_since: BTreeMap<JobId, Seconds> = BTreeMap::new();
    let mut running_since: BTreeMap<JobId, (Seconds, u32)> = BTreeMap::new();
    let mut started: BTreeMap<JobId, ()> = BTreeMap::new();
    let mut requeue_wait = 0;
    let mut never_started = 0;

    for r in &trace.records {
        let Some(id) = r.job_id else { continue };
        let user = r.user.clone().unwrap_or_default();
        match r.event {
            TraceEvent::Submit => {
                acc.entry(user).or_default().jobs += 1;
                queued_since.insert(id, r.time);
            }
            TraceEvent::CheckpointDone | TraceEvent::Resubmit => {
                queued_since.insert(id, r.time);
            }
            TraceEvent::Start => {
                let since = queued_since.remove(&id).unwrap_or(r.time);
                if started.insert(id, ()).is_none() {
                    acc.entry(user).or_default().waits.push(r.time - since);
                } else {
                    requeue_wait += r.time - since;
                }
                running_since.insert(id, (r.time, r.cpus.unwrap_or(0)));
            }
            TraceEvent::Finish | TraceEvent::Checkpoint | TraceEvent::Kill => {
                if let Some((t, cpus)) = running_since.remove(&id) {
                    acc.entry(user).or_default().cpu_seconds += u128::from(cpus) * u128::from(r.time - t);
                }
            }
            _ => {}
        }
    }
    for (user, a) in &acc {
        never_started += a.jobs - a.waits.len();
        let _ = user;
    }

    let all: Vec<Seconds> = acc.values().flat_map(|a| a.waits.iter().copied()).collect();
    let mean = |w: &[Seconds]| {
        if w.is_empty() {
            0.0
        } else {
            round6(w.iter().map(|&x| u128::from(x)).sum(), w.len() as u128)
        }
    };
    WaitStats {
        mean_wait: mean(&all),
        max_wait: all.iter().copied().max().unwrap_or(0),
        requeue_wait,
        never_started,
        per_user: acc
            .into_iter()
            .map(|(u, a)| {
                (
                    u,
                    UserStats {
                        jobs: a.jobs,
                        started: a.waits.len(),
                        mean_wait: mean(&a.waits),
                        max_wait: a.waits.iter().copied().max().unwrap_or(0),
                        cpu_seconds: a.cpu_seconds,
                    },
                )
            })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CrStats {
    pub checkpoint_ops: usize,
    pub restart_ops: usize,
    pub kills: usize,
}

pub fn cr_stats(trace: &Trace) -> CrStats {
    let mut s = CrStats::default();
    for r in &trace.records {
        match r.event {
            TraceEvent::Checkpoint => s.checkpoint_ops += 1,
            TraceEvent::Kill => s.kills += 1,
            TraceEvent::Start if r.detail_value("restart") == Some("1") => s.restart_ops += 1,
            _ => {}
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub scheduler: SchedulerKind,
    pub workload_hash: String,
    pub cpu_total: u32,
    pub makespan: Seconds,
    pub jobs: usize,
    pub finished: usize,
    pub utilization: f64,
    pub waits: WaitStats,
    pub cr: CrStats,
    /// Only computed for OMFS traces.
    pub fairness_violations: Option<Vec<FairnessViolation>>,
}

impl MetricsReport {
    /// Utilization is taken over the trace's own makespan.
    pub fn from_trace(trace: &Trace, users: &UserSet, config: &PolicyConfig) -> Result<Self> {
        let fairness_violations = match trace.scheduler {
            SchedulerKind::Omfs => Some(fairness_violation_scan(trace, users, config)?),
            _ => None,
        };
        Ok(MetricsReport {
            scheduler: trace.scheduler,
            workload_hash: trace.workload_hash.clone(),
            cpu_total: trace.cpu_total,
            makespan: trace.makespan(),
            jobs: trace.jobs.len(),
            finished: trace.jobs.values().filter(|j| j.finish_time.is_some()).count(),
            utilization: utilization(trace, trace.makespan()),
            waits: wait_stats(trace),
            cr: cr_stats(trace),
            fairness_violations,
        })
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scheduler {}", self.scheduler)?;
        writeln!(f, "workload_hash {}", self.workload_hash)?;
        writeln!(f, "cpu_total {}", self.cpu_total)?;
        writeln!(f, "makespan {}", self.makespan)?;
        writeln!(f, "jobs {}", self.jobs)?;
        writeln!(f, "finished {}", self.finished)?;
        writeln!(f, "utilization {:.6}", self.utilization)?;
        writeln!(f, "mean_wait {:.6}", self.waits.mean_wait)?;
        writeln!(f, "max_wait {}", self.waits.max_wait)?;
        writeln!(f, "requeue_wait {}", self.waits.requeue_wait)?;
        writeln!(f, "never_started {}", self.waits.never_started)?;
        writeln!(f, "checkpoint_ops {}", self.cr.checkpoint_ops)?;
        writeln!(f, "restart_ops {}", self.cr.restart_ops)?;
        writeln!(f, "kills {}", self.cr.kills)?;
        match &self.fairness_violations {
            None => writeln!(f, "fairness_violations n/a")?,
            Some(v) => {
                writeln!(f, "fairness_violations {}", v.len())?;
                for x in v {
                    writeln!(
                        f,
                        "violation user={} start={} end={} deficit={}",
                        x.user, x.start, x.end, x.deficit
                    )?;
                }
            }
        }
        for (user, s) in &self.waits.per_user {
            writeln!(
                f,
                "user {user} jobs={} started={} mean_wait={:.6} max_wait={} cpu_seconds={}",
                s.jobs, s.started, s.mean_wait, s.max_wait, s.cpu_seconds
            )?;
        }
        Ok(())
    }
}

/// Reports for several schedulers on one workload.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub workload_hash: String,
    pub reports: Vec<MetricsReport>,
}

const COMPARE_COLUMNS: [&str; 12] = [
    "scheduler",
    "utilization",
    "makespan",
    "mean_wait",
    "max_wait",
    "requeue_wait",
    "never_started",
    "checkpoint_ops",
    "restart_ops",
    "kills",
    "fairness_violations",
    "note",
];

/// Builds the comparison, refusing reports from different workloads. Rows
/// follow [`SchedulerKind`] order whatever the input order.
pub fn compare_report(reports: impl IntoIterator<Item = MetricsReport>) -> Result<Comparison> {
    let mut reports: Vec<MetricsReport> = reports.into_iter().collect();
    let Some(first) = reports.first() else {
        return Err(Error::Config("nothing to compare".into()));
    };
    let hash = first.workload_hash.clone();
    if let Some(other) = reports.iter().find(|r| r.workload_hash != hash) {
        return Err(Error::WorkloadMismatch(hash, other.workload_hash.clone()));
    }
    reports.sort_by_key(|r| r.scheduler);
    Ok(Comparison {
        workload_hash: hash,
        reports,
    })
}

impl Comparison {
    pub fn get(&self, scheduler: SchedulerKind) -> Option<&MetricsReport> {
        self.reports.iter().find(|r| r.scheduler == scheduler)
    }

    /// OMFS utilization minus capped utilization, when both are present.
    pub fn pooling_gain(&self) -> Option<f64> {
        let omfs = self.get(SchedulerKind::Omfs)?.utilization;
        let capped = self.get(SchedulerKind::Capped)?.utilization;
        Some(((omfs - capped) * 1e6).round() / 1e6)
    }

    fn rows(&self) -> Vec<[String; 12]> {
        self.reports
            .iter()
            .map(|r| {
                let note = match (r.scheduler, self.pooling_gain()) {
                    (SchedulerKind::Omfs, Some(g)) => format!("pooling gain {g:+.2}"),
                    _ => String::new(),
                };
                [
                    r.scheduler.to_string(),
                    format!("{:.6}", r.utilization),
                    r.makespan.to_string(),
                    format!("{:.6}", r.waits.mean_wait),
                    r.waits.max_wait.to_string(),
                    r.waits.requeue_wait.to_string(),
                    r.waits.never_started.to_string(),
                    r.cr.checkpoint_ops.to_string(),
                    r.cr.restart_ops.to_string(),
                    r.cr.kills.to_string(),
                    r.fairness_violations
                        .as_ref()
                        .map_or_else(|| "n/a".to_string(), |v| v.len().to_string()),
                    note,
                ]
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = COMPARE_COLUMNS.join(",");
        out.push('\n');
        for row in self.rows() {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_text(&self) -> String {
        let rows = self.rows();
        let widths: Vec<usize> = (0..COMPARE_COLUMNS.len())
            .map(|c| rows.iter().map(|r| r[c].len()).chain([COMPARE_COLUMNS[c].len()]).max().unwrap_or(0))
            .collect();
        let mut out = format!("workload_hash {}\n", self.workload_hash);
        let mut line = |cells: Vec<&str>| {
            let text: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect();
            let _ = writeln!(out, "{}", text.join("  ").trim_end());
        };
        line(COMPARE_COLUMNS.to_vec());
        for r in &rows {
            line(r.iter().map(String::as_str).collect());
        }
        out
    }
}

/// Entitled CPUs per user, in declaration order.
pub fn entitlement_table(users: &UserSet, cpu_total: u32) -> Result<Vec<(String, u32, u32)>> {
    users
        .iter()
        .map(|u| Ok((u.name.clone(), u.percent, entitled_cpu_count(u.percent, cpu_total)?)))
        .collect()
}
