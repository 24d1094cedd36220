//! Domain types and the entitlement/usage arithmetic shared by every scheduler.
//!
//! CPU counts are plain integers and a user's share is an integer percentage,
//! so the entitlement `floor(percent * cpu_total / 100)` is exact.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{submitted_order, OrderKey};

pub type JobId = u64;

/// Simulation time in whole seconds.
pub type Seconds = u64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserSpec {
    pub name: String,
    pub percent: u32,
}

impl UserSpec {
    pub fn new(name: impl Into<String>, percent: u32) -> Self {
        UserSpec {
            name: name.into(),
            percent,
        }
    }
}

/// The system's user table, in declaration order.
///
/// Construction does not validate; run [`validate_system`] before trusting it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserSet {
    users: Vec<UserSpec>,
}

impl UserSet {
    pub fn new(users: impl IntoIterator<Item = UserSpec>) -> Self {
        UserSet {
            users: users.into_iter().collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&UserSpec> {
        self.users.iter().find(|u| u.name == name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    pub fn iter(&self) -> impl Iterator<Item = &UserSpec> {
        self.users.iter()
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn percent_sum(&self) -> u64 {
        self.users.iter().map(|u| u64::from(u.percent)).sum()
    }

    /// Entitled CPUs of `name` on a system with `cpu_total` CPUs.
    pub fn entitlement(&self, name: &str, cpu_total: u32) -> Result<u32> {
        let user = self
            .get(name)
            .ok_or_else(|| Error::UnknownUser(name.to_string()))?;
        entitled_cpu_count(user.percent, cpu_total)
    }
}

impl FromIterator<UserSpec> for UserSet {
    fn from_iter<T: IntoIterator<Item = UserSpec>>(iter: T) -> Self {
        UserSet::new(iter)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Submitted,
    Running,
    Checkpointed,
    Killed,
    Finished,
}

impl JobState {
    pub fn as_str(self) -> &'static str {
        match self {
            JobState::Submitted => "submitted",
            JobState::Running => "running",
            JobState::Checkpointed => "checkpointed",
            JobState::Killed => "killed",
            JobState::Finished => "finished",
        }
    }

    /// Waiting in the submitted queue (fresh or after a checkpoint).
    pub fn is_queued(self) -> bool {
        matches!(self, JobState::Submitted | JobState::Checkpointed)
    }
}

impl fmt::Display for JobState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A unit of work. `checkpointable` implies `preemptable`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Job {
    pub id: JobId,
    pub user: String,
    /// Only meaningful relative to other jobs of the same user.
    pub priority: u32,
    pub cpu_count: u32,
    pub submit_time: Seconds,
    pub total_runtime: Seconds,
    /// User-supplied runtime estimate, used by backfill only.
    pub estimated_runtime: Option<Seconds>,
    pub completed_runtime: Seconds,
    pub preemptable: bool,
    pub checkpointable: bool,
    pub state: JobState,
    pub last_start_time: Option<Seconds>,
    pub checkpoint_count: u32,
}

impl Job {
    /// A fresh non-preemptable job submitted at t=0 with priority 0.
    pub fn new(id: JobId, user: impl Into<String>, cpu_count: u32, total_runtime: Seconds) -> Self {
        Job {
            id,
            user: user.into(),
            priority: 0,
            cpu_count,
            submit_time: 0,
            total_runtime,
            estimated_runtime: None,
            completed_runtime: 0,
            preemptable: false,
            checkpointable: false,
            state: JobState::Submitted,
            last_start_time: None,
            checkpoint_count: 0,
        }
    }

    pub fn preemptable(mut self) -> Self {
        self.preemptable = true;
        self
    }

    /// Marks the job checkpointable (and therefore preemptable).
    pub fn checkpointable(mut self) -> Self {
        self.preemptable = true;
        self.checkpointable = true;
        self
    }

    pub fn with_priority(mut self, priority: u32) -> Self {
        self.priority = priority;
        self
    }

    pub fn submitted_at(mut self, t: Seconds) -> Self {
        self.submit_time = t;
        self
    }

    pub fn with_estimate(mut self, estimate: Seconds) -> Self {
        self.estimated_runtime = Some(estimate);
        self
    }

    pub fn remaining_runtime(&self) -> Seconds {
        self.total_runtime - self.completed_runtime
    }

    /// Estimate used by backfill; falls back to the true runtime.
    pub fn runtime_estimate(&self) -> Seconds {
        self.estimated_runtime.unwrap_or(self.total_runtime)
    }

    /// Checks the per-job invariants against a system of `cpu_total` CPUs.
    pub fn check(&self, cpu_total: u32) -> Result<()> {
        if self.cpu_count > cpu_total {
            return Err(Error::Contract(format!(
                "job {} requests {} CPUs but the system has {}",
                self.id, self.cpu_count, cpu_total
            )));
        }
        if self.completed_runtime > self.total_runtime {
            return Err(Error::Contract(format!(
                "job {} completed more work than it requires",
                self.id
            )));
        }
        if self.checkpointable && !self.preemptable {
            return Err(Error::Contract(format!(
                "job {} is checkpointable but not preemptable",
                self.id
            )));
        }
        Ok(())
    }

    /// `P`, `C` style flag string used by the workload format and the trace.
    pub fn flags(&self) -> &'static str {
        match (self.preemptable, self.checkpointable) {
            (_, true) => "PC",
            (true, false) => "P",
            (false, false) => "-",
        }
    }
}

/// Submitted jobs keyed by [`submitted_order`].
#[derive(Debug, Clone, Default)]
pub struct SubmittedQueue {
    by_key: BTreeMap<OrderKey, Job>,
    keys: BTreeMap<JobId, OrderKey>,
}

impl SubmittedQueue {
    pub fn len(&self) -> usize {
        self.by_key.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_key.is_empty()
    }

    pub fn contains(&self, id: JobId) -> bool {
        self.keys.contains_key(&id)
    }

    pub fn get(&self, id: JobId) -> Option<&Job> {
        self.keys.get(&id).and_then(|k| self.by_key.get(k))
    }

    /// Jobs in dequeue order.
    pub fn iter(&self) -> impl Iterator<Item = &Job> {
        self.by_key.values()
    }

    pub fn ids(&self) -> Vec<JobId> {
        self.by_key.values().map(|j| j.id).collect()
    }

    pub(crate) fn insert(&mut self, job: Job) {
        let key = submitted_order(&job);
        self.keys.insert(job.id, key);
        self.by_key.insert(key, job);
    }

    pub(crate) fn remove(&mut self, id: JobId) -> Option<Job> {
        let key = self.keys.remove(&id)?;
        self.by_key.remove(&key)
    }
}

/// Running jobs; the busy-CPU sum is maintained on every insert and remove.
#[derive(Debug, Clone, Default)]
pub struct RunningSet {
    jobs: BTreeMap<JobId, Job>,
    busy: u64,
}

impl RunningSet {
    pub fn len(&self) -> usize {
        self.jobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jobs.is_empty()
    }

    pub fn contains(&self, id: JobId) -> bool {
        self.jobs.contains_key(&id)
    }

    pub fn get(&self, id: JobId) -> Option<&Job> {
        self.jobs.get(&id)
    }

    /// Jobs in id order.
    pub fn iter(&self) -> impl Iterator<Item = &Job> {
        self.jobs.values()
    }

    pub fn busy_cpus(&self) -> u64 {
        self.busy
    }

    pub(crate) fn insert(&mut self, job: Job) {
        self.busy += u64::from(job.cpu_count);
        if let Some(old) = self.jobs.insert(job.id, job) {
            self.busy -= u64::from(old.cpu_count);
        }
    }

    pub(crate) fn remove(&mut self, id: JobId) -> Option<Job> {
        let job = self.jobs.remove(&id)?;
        self.busy -= u64::from(job.cpu_count);
        Some(job)
    }
}

/// CPU pool plus the submitted and running queues.
///
/// Idle CPUs are always derived from the running set.
#[derive(Debug, Clone)]
pub struct ClusterState {
    cpu_total: u32,
    pub now: Seconds,
    submitted: SubmittedQueue,
    running: RunningSet,
}

impl ClusterState {
    pub fn new(cpu_total: u32) -> Self {
        ClusterState {
            cpu_total,
            now: 0,
            submitted: SubmittedQueue::default(),
            running: RunningSet::default(),
        }
    }

    pub fn cpu_total(&self) -> u32 {
        self.cpu_total
    }

    pub fn cpu_idle(&self) -> u32 {
        // RunningSet::insert callers keep busy <= cpu_total.
        (u64::from(self.cpu_total) - self.running.busy_cpus()) as u32
    }

    pub fn submitted(&self) -> &SubmittedQueue {
        &self.submitted
    }

    pub fn running(&self) -> &RunningSet {
        &self.running
    }

    pub fn contains(&self, id: JobId) -> bool {
        self.submitted.contains(id) || self.running.contains(id)
    }

    /// Puts a fresh or checkpointed job into the submitted queue.
    pub fn submit(&mut self, job: Job) -> Result<()> {
        job.check(self.cpu_total)?;
        if !job.state.is_queued() {
            return Err(Error::Contract(format!(
                "job {} cannot be queued in state {}",
                job.id, job.state
            )));
        }
        if self.contains(job.id) {
            return Err(Error::Contract(format!("job {} is already queued", job.id)));
        }
        self.submitted.insert(job);
        Ok(())
    }

    /// Places a job directly in the running set, e.g. to build a starting state.
    ///
    /// Fails if the job does not fit the idle CPUs. A missing
    /// `last_start_time` is set to `now`.
    pub fn admit_running(&mut self, mut job: Job) -> Result<()> {
        job.check(self.cpu_total)?;
        if self.contains(job.id) {
            return Err(Error::Contract(format!("job {} is already queued", job.id)));
        }
        if job.cpu_count > self.cpu_idle() {
            return Err(Error::Contract(format!(
                "job {} needs {} CPUs, only {} idle",
                job.id,
                job.cpu_count,
                self.cpu_idle()
            )));
        }
        job.state = JobState::Running;
        job.last_start_time.get_or_insert(self.now);
        self.running.insert(job);
        Ok(())
    }

    pub(crate) fn submitted_mut(&mut self) -> &mut SubmittedQueue {
        &mut self.submitted
    }

    pub(crate) fn running_mut(&mut self) -> &mut RunningSet {
        &mut self.running
    }

    /// Moves a job into the running set. Caller guarantees it fits.
    pub(crate) fn start(&mut self, mut job: Job) {
        debug_assert!(job.cpu_count <= self.cpu_idle());
        job.state = JobState::Running;
        job.last_start_time = Some(self.now);
        self.running.insert(job);
    }

    /// Removes a job from whichever queue holds it.
    pub fn take(&mut self, id: JobId) -> Option<Job> {
        self.submitted.remove(id).or_else(|| self.running.remove(id))
    }
}

/// CPU accounting for one user over the running set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UsageSnapshot {
    pub preemptable_cpus: u32,
    pub non_preemptable_cpus: u32,
    pub total_cpus: u32,
    pub entitled_cpus: u32,
}

impl UsageSnapshot {
    /// CPUs the user may still claim within its entitlement; negative when over.
    pub fn headroom(&self) -> i64 {
        i64::from(self.entitled_cpus) - i64::from(self.total_cpus)
    }

    pub fn over_entitlement(&self) -> bool {
        self.total_cpus > self.entitled_cpus
    }
}

/// `floor(percent * cpu_total / 100)` in exact integer arithmetic.
pub fn entitled_cpu_count(percent: u32, cpu_total: u32) -> Result<u32> {
    if percent > 100 {
        return Err(Error::PercentOutOfRange(percent));
    }
    Ok((u64::from(percent) * u64::from(cpu_total) / 100) as u32)
}

pub fn usage_snapshot(user: &str, state: &ClusterState, users: &UserSet) -> Result<UsageSnapshot> {
    let entitled_cpus = users.entitlement(user, state.cpu_total())?;
    Ok(usage_from_running(user, state.running(), entitled_cpus))
}

pub(crate) fn usage_from_running(user: &str, running: &RunningSet, entitled_cpus: u32) -> UsageSnapshot {
    let (mut preemptable_cpus, mut non_preemptable_cpus) = (0u32, 0u32);
    for job in running.iter().filter(|j| j.user == user) {
        if job.preemptable {
            preemptable_cpus += job.cpu_count;
        } else {
            non_preemptable_cpus += job.cpu_count;
        }
    }
    UsageSnapshot {
        preemptable_cpus,
        non_preemptable_cpus,
        total_cpus: preemptable_cpus + non_preemptable_cpus,
        entitled_cpus,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    PercentOutOfRange { user: String, percent: u32 },
    PercentSumExceeded { sum: u64 },
    ZeroCpuTotal,
    DuplicateUser(String),
    InvalidName(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::PercentOutOfRange { user, percent } => {
                write!(f, "user {user}: percent {percent} outside [0, 100]")
            }
            Violation::PercentSumExceeded { sum } => {
                write!(f, "percent sum {sum} exceeds 100")
            }
            Violation::ZeroCpuTotal => f.write_str("cpu_total must be positive"),
            Violation::DuplicateUser(name) => write!(f, "user {name} declared twice"),
            Violation::InvalidName(name) => {
                write!(f, "user name `{name}` must be non-empty ASCII letters, digits, `_`, `-` or `.`")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// User names end up in whitespace- and comma-separated files.
pub fn is_valid_user_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

/// Checks the user table and CPU total. Every violated constraint is reported.
pub fn validate_system(users: &UserSet, cpu_total: u32) -> Result<(), ValidationReport> {
    let mut violations = Vec::new();
    if cpu_total == 0 {
        violations.push(Violation::ZeroCpuTotal);
    }
    let mut seen = std::collections::BTreeSet::new();
    for u in users.iter() {
        if !is_valid_user_name(&u.name) {
            violations.push(Violation::InvalidName(u.name.clone()));
        }
        if !seen.insert(u.name.as_str()) {
            violations.push(Violation::DuplicateUser(u.name.clone()));
        }
        if u.percent > 100 {
            violations.push(Violation::PercentOutOfRange {
                user: u.name.clone(),
                percent: u.percent,
            });
        }
    }
    let sum = users.percent_sum();
    if sum > 100 {
        violations.push(Violation::PercentSumExceeded { sum });
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(ValidationReport { violations })
    }
}
