//! Deterministic discrete-event simulation of a cluster driven by one of the
//! schedulers in this crate.
//!
//! Time is integer seconds. Events at the same instant are applied in
//! scheduling order; after all events of an instant are applied, scheduling
//! passes run until one admits nothing. Evicted jobs release their CPUs at
//! once and rejoin the queue after the checkpoint cost; a restarted job holds
//! its CPUs for the restart cost before its work resumes.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use log::{debug, trace};
use sha2::{Digest, Sha256};

use crate::baselines::{backfill_pass, capped_pass, fcfs_pass, Reservation};
use crate::error::{Error, Result};
use crate::model::{validate_system, ClusterState, Job, JobId, JobState, Seconds, UserSet};
use crate::policy::{checkpoint_cost, restart_cost, PolicyConfig};
use crate::runner::{scheduler_pass, Decision, DecisionKind, Disposition};
use crate::workload::WorkloadSpec;

/// Upper bound on scheduling passes at a single instant.
const MAX_PASSES_PER_INSTANT: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SchedulerKind {
    Omfs,
    Fcfs,
    Backfill,
    Capped,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 4] = [
        SchedulerKind::Omfs,
        SchedulerKind::Fcfs,
        SchedulerKind::Backfill,
        SchedulerKind::Capped,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchedulerKind::Omfs => "omfs",
            SchedulerKind::Fcfs => "fcfs",
            SchedulerKind::Backfill => "backfill",
            SchedulerKind::Capped => "capped",
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchedulerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchedulerKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheduler `{s}` (expected omfs, fcfs, backfill or capped)")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    Submit(Job),
    Finish(JobId),
    CheckpointDone(JobId),
    RestartDone(JobId),
    QuantumExpired(JobId),
    Wakeup,
}

impl EventKind {
    fn job_id(&self) -> Option<JobId> {
        match self {
            EventKind::Submit(j) => Some(j.id),
            EventKind::Finish(id)
            | EventKind::CheckpointDone(id)
            | EventKind::RestartDone(id)
            | EventKind::QuantumExpired(id) => Some(*id),
            EventKind::Wakeup => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub time: Seconds,
    pub seq: u64,
    pub kind: EventKind,
}

/// The kinds of line that appear in a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TraceEvent {
    Submit,
    Start,
    RestartDone,
    Finish,
    Checkpoint,
    CheckpointDone,
    Kill,
    Resubmit,
    QuantumExpired,
    Wakeup,
    Reserve,
    Unrunnable,
    Stranded,
    Stale,
}

impl TraceEvent {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceEvent::Submit => "submit",
            TraceEvent::Start => "start",
            TraceEvent::RestartDone => "restart_done",
            TraceEvent::Finish => "finish",
            TraceEvent::Checkpoint => "checkpoint",
            TraceEvent::CheckpointDone => "checkpoint_done",
            TraceEvent::Kill => "kill",
            TraceEvent::Resubmit => "resubmit",
            TraceEvent::QuantumExpired => "quantum_expired",
            TraceEvent::Wakeup => "wakeup",
            TraceEvent::Reserve => "reserve",
            TraceEvent::Unrunnable => "unrunnable",
            TraceEvent::Stranded => "stranded",
            TraceEvent::Stale => "stale",
        }
    }

    /// Evictions: the job leaves the running set before completing.
    pub fn is_eviction(self) -> bool {
        matches!(self, TraceEvent::Checkpoint | TraceEvent::Kill)
    }
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub time: Seconds,
    pub seq: u64,
    pub event: TraceEvent,
    pub job_id: Option<JobId>,
    pub user: Option<String>,
    pub cpus: Option<u32>,
    pub cpu_idle_after: u32,
    /// `key=value` pairs separated by `;`.
    pub detail: String,
}

impl TraceRecord {
    /// Looks up `key` in the detail string.
    pub fn detail_value(&self, key: &str) -> Option<&str> {
        self.detail
            .split(';')
            .filter_map(|kv| kv.split_once('='))
            .find(|(k, _)| *k == key)
            .map(|(_, v)| v)
    }
}

/// Final per-job figures.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobStats {
    pub id: JobId,
    pub user: String,
    pub cpus: u32,
    pub priority: u32,
    pub preemptable: bool,
    pub checkpointable: bool,
    pub submit_time: Seconds,
    pub total_runtime: Seconds,
    pub completed_runtime: Seconds,
    pub first_start: Option<Seconds>,
    pub finish_time: Option<Seconds>,
    pub checkpoint_count: u32,
    pub final_state: JobState,
    /// Still queued (or declared unrunnable) when the simulation ran dry.
    pub stranded: bool,
}

impl JobStats {
    pub fn wait(&self) -> Option<Seconds> {
        self.first_start.map(|s| s - self.submit_time)
    }

    pub fn turnaround(&self) -> Option<Seconds> {
        self.finish_time.map(|f| f - self.submit_time)
    }
}

pub const TRACE_CSV_HEADER: &str = "time,seq,event,job_id,user,cpus,cpu_idle_after,detail";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub cpu_total: u32,
    pub scheduler: SchedulerKind,
    pub workload_hash: String,
    pub records: Vec<TraceRecord>,
    pub jobs: BTreeMap<JobId, JobStats>,
}

impl Trace {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{TRACE_CSV_HEADER}")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.time,
                r.seq,
                r.event,
                r.job_id.map(|v| v.to_string()).unwrap_or_default(),
                r.user.as_deref().unwrap_or(""),
                r.cpus.map(|v| v.to_string()).unwrap_or_default(),
                r.cpu_idle_after,
                r.detail
            )?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("trace is UTF-8")
    }

    /// SHA-256 of the CSV serialization, hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_csv().as_bytes()))
    }

    /// Time of the last record.
    pub fn makespan(&self) -> Seconds {
        self.records.last().map_or(0, |r| r.time)
    }
}

#[derive(Debug, Clone)]
struct Book {
    template: Job,
    work_start: Option<Seconds>,
    needs_restart: bool,
    completed_runtime: Seconds,
    checkpoint_count: u32,
    first_start: Option<Seconds>,
    finish_time: Option<Seconds>,
    final_state: JobState,
    stranded: bool,
}

/// Records and events produced by one [`Simulation::apply_event`].
#[derive(Debug, Clone, Default)]
pub struct Applied {
    pub records: Vec<TraceRecord>,
    pub scheduled: Vec<Event>,
    pub pass_triggered: bool,
}

pub struct Simulation {
    users: UserSet,
    config: PolicyConfig,
    scheduler: SchedulerKind,
    state: ClusterState,
    events: BTreeMap<(Seconds, u64), EventKind>,
    next_event_seq: u64,
    pending: BTreeMap<JobId, Vec<(Seconds, u64)>>,
    books: BTreeMap<JobId, Book>,
    in_flight: BTreeMap<JobId, Job>,
    reservation: Option<Reservation>,
    records: Vec<TraceRecord>,
    workload_hash: String,
    scheduled_log: Option<Vec<Event>>,
}

impl Simulation {
    /// Validates the workload and queues a submit event for every job.
    pub fn new(workload: &WorkloadSpec, config: &PolicyConfig, scheduler: SchedulerKind) -> Result<Self> {
        validate_system(&workload.users, workload.cpu_total).map_err(Error::Validation)?;
        config.validate()?;
        workload.validate()?;
        let mut sim = Simulation {
            users: workload.users.clone(),
            config: config.clone(),
            scheduler,
            state: ClusterState::new(workload.cpu_total),
            events: BTreeMap::new(),
            next_event_seq: 0,
            pending: BTreeMap::new(),
            books: BTreeMap::new(),
            in_flight: BTreeMap::new(),
            reservation: None,
            records: Vec::new(),
            workload_hash: workload.hash(),
            scheduled_log: None,
        };
        let mut jobs: Vec<Job> = workload.jobs.iter().map(|t| t.to_job()).collect();
        jobs.sort_by_key(|j| (j.submit_time, j.id));
        for job in jobs {
            sim.schedule(job.submit_time, EventKind::Submit(job));
        }
        Ok(sim)
    }

    pub fn state(&self) -> &ClusterState {
        &self.state
    }

    pub fn now(&self) -> Seconds {
        self.state.now
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    /// Time of the earliest pending event.
    pub fn next_event_time(&self) -> Option<Seconds> {
        self.events.keys().next().map(|(t, _)| *t)
    }

    /// Queues an event; returns its sequence number.
    pub fn schedule(&mut self, time: Seconds, kind: EventKind) -> u64 {
        let seq = self.next_event_seq;
        self.next_event_seq += 1;
        if let Some(id) = kind.job_id() {
            if !matches!(kind, EventKind::Submit(_)) {
                self.pending.entry(id).or_default().push((time, seq));
            }
        }
        if let Some(log) = self.scheduled_log.as_mut() {
            log.push(Event {
                time,
                seq,
                kind: kind.clone(),
            });
        }
        self.events.insert((time, seq), kind);
        seq
    }

    fn cancel_pending(&mut self, id: JobId) {
        for key in self.pending.remove(&id).unwrap_or_default() {
            self.events.remove(&key);
        }
    }

    fn pop_event_at(&mut self, time: Seconds) -> Option<Event> {
        let (&(t, seq), _) = self.events.iter().next()?;
        if t != time {
            return None;
        }
        let kind = self.events.remove(&(t, seq)).expect("key just observed");
        if let Some(id) = kind.job_id() {
            if let Some(keys) = self.pending.get_mut(&id) {
                keys.retain(|k| *k != (t, seq));
            }
        }
        Some(Event { time: t, seq, kind })
    }

    fn record(&mut self, event: TraceEvent, job: Option<(&JobId, &str, u32)>, detail: String) {
        let seq = self.records.len() as u64;
        let rec = TraceRecord {
            time: self.state.now,
            seq,
            event,
            job_id: job.map(|(id, _, _)| *id),
            user: job.map(|(_, u, _)| u.to_string()),
            cpus: job.map(|(_, _, c)| c),
            cpu_idle_after: self.state.cpu_idle(),
            detail,
        };
        trace!("{} {} {:?}", rec.time, rec.event, rec.job_id);
        self.records.push(rec);
    }

    fn record_job(&mut self, event: TraceEvent, id: JobId, detail: String) {
        let (user, cpus) = {
            let t = &self.books[&id].template;
            (t.user.clone(), t.cpu_count)
        };
        self.record(event, Some((&id, &user, cpus)), detail);
    }

    fn book(&self, id: JobId) -> Result<&Book> {
        self.books.get(&id).ok_or(Error::UnknownJob(id))
    }

    /// Applies one event. The event's time becomes the current time; the
    /// caller is expected to run a pass (see [`Simulation::settle`]) when
    /// `pass_triggered` is set.
    pub fn apply_event(&mut self, event: Event) -> Result<Applied> {
        if event.time < self.state.now {
            return Err(Error::Contract(format!(
                "event at {} applied after time {}",
                event.time, self.state.now
            )));
        }
        self.state.now = event.time;
        let first = self.records.len();
        self.scheduled_log = Some(Vec::new());
        let pass_triggered = self.apply_kind(event.kind);
        let scheduled = self.scheduled_log.take().unwrap_or_default();
        Ok(Applied {
            pass_triggered: pass_triggered?,
            records: self.records[first..].to_vec(),
            scheduled,
        })
    }

    fn apply_kind(&mut self, kind: EventKind) -> Result<bool> {
        let now = self.state.now;
        match kind {
            EventKind::Submit(mut job) => {
                if self.books.contains_key(&job.id) {
                    return Err(Error::Contract(format!("job {} submitted twice", job.id)));
                }
                job.state = JobState::Submitted;
                let id = job.id;
                let detail = format!(
                    "flags={};priority={};runtime={}",
                    job.flags(),
                    job.priority,
                    job.total_runtime
                );
                self.books.insert(
                    id,
                    Book {
                        template: job.clone(),
                        work_start: None,
                        needs_restart: false,
                        completed_runtime: 0,
                        checkpoint_count: 0,
                        first_start: None,
                        finish_time: None,
                        final_state: JobState::Submitted,
                        stranded: false,
                    },
                );
                self.state.submit(job)?;
                self.record_job(TraceEvent::Submit, id, detail);
                Ok(true)
            }
            EventKind::Finish(id) => {
                self.book(id)?;
                if !self.state.running().contains(id) {
                    self.record_job(TraceEvent::Stale, id, "event=finish".into());
                    return Ok(false);
                }
                let job = self.state.running_mut().remove(id).expect("checked above");
                self.cancel_pending(id);
                let book = self.books.get_mut(&id).expect("checked above");
                let work_start = book.work_start.take().unwrap_or(now);
                book.completed_runtime += now - work_start;
                debug_assert_eq!(book.completed_runtime, job.total_runtime, "job {id} work accounting");
                book.finish_time = Some(now);
                book.final_state = JobState::Finished;
                self.record_job(TraceEvent::Finish, id, String::new());
                Ok(true)
            }
            EventKind::CheckpointDone(id) => {
                self.book(id)?;
                let Some(job) = self.in_flight.remove(&id) else {
                    self.record_job(TraceEvent::Stale, id, "event=checkpoint_done".into());
                    return Ok(false);
                };
                self.state.submit(job)?;
                self.record_job(TraceEvent::CheckpointDone, id, String::new());
                Ok(true)
            }
            EventKind::RestartDone(id) => {
                self.book(id)?;
                let Some(job) = self.state.running().get(id) else {
                    self.record_job(TraceEvent::Stale, id, "event=restart_done".into());
                    return Ok(false);
                };
                let remaining = job.total_runtime - self.books[&id].completed_runtime;
                self.books.get_mut(&id).expect("checked above").work_start = Some(now);
                self.schedule(now + remaining, EventKind::Finish(id));
                self.record_job(TraceEvent::RestartDone, id, format!("remaining={remaining}"));
                Ok(false)
            }
            EventKind::QuantumExpired(id) => {
                self.book(id)?;
                if !self.state.running().contains(id) {
                    self.record_job(TraceEvent::Stale, id, "event=quantum_expired".into());
                    return Ok(false);
                }
                self.record_job(TraceEvent::QuantumExpired, id, String::new());
                Ok(true)
            }
            EventKind::Wakeup => {
                self.record(TraceEvent::Wakeup, None, String::new());
                Ok(true)
            }
        }
    }

    /// Runs scheduling passes until one starts no job.
    pub fn settle(&mut self) -> Result<Vec<Decision>> {
        let mut all = Vec::new();
        for _ in 0..MAX_PASSES_PER_INSTANT {
            let reserved_before = self.reservation;
            let decisions = self.pass()?;
            let mut progressed = false;
            for d in &decisions {
                progressed |= self.apply_decision(d)?;
            }
            if let Some(r) = self.reservation {
                if reserved_before.is_none_or(|b| b.job_id != r.job_id) {
                    self.record_job(TraceEvent::Reserve, r.job_id, format!("start={}", r.start));
                }
            }
            all.extend(decisions);
            if !progressed {
                return Ok(all);
            }
        }
        Err(Error::Livelock(MAX_PASSES_PER_INSTANT))
    }

    fn pass(&mut self) -> Result<Vec<Decision>> {
        match self.scheduler {
            SchedulerKind::Omfs => scheduler_pass(&mut self.state, &self.users, &self.config),
            SchedulerKind::Fcfs => fcfs_pass(&mut self.state),
            SchedulerKind::Capped => capped_pass(&mut self.state, &self.users),
            SchedulerKind::Backfill => backfill_pass(&mut self.state, &mut self.reservation),
        }
    }

    /// Turns one decision into trace records and follow-up events. Returns
    /// true if a job started.
    fn apply_decision(&mut self, d: &Decision) -> Result<bool> {
        let now = self.state.now;
        if d.kind == DecisionKind::Unrunnable {
            self.books.get_mut(&d.job_id).ok_or(Error::UnknownJob(d.job_id))?.stranded = true;
            self.record_job(TraceEvent::Unrunnable, d.job_id, String::new());
            self.records.last_mut().expect("just recorded").cpu_idle_after = d.cpu_idle_after;
            return Ok(false);
        }
        if !d.kind.started() {
            return Ok(false);
        }

        // Records are written after the pass; rebuild the idle count seen
        // after each eviction so every record agrees with the running set.
        let job_cpus = self.book(d.job_id)?.template.cpu_count;
        let freed: u32 = d.victims.iter().map(|v| v.cpus).sum();
        let mut idle = d.cpu_idle_after + job_cpus - freed;
        for v in &d.victims {
            idle += v.cpus;
            self.evict(v.job_id, v.disposition, d.job_id, idle)?;
        }

        let book = self.books.get_mut(&d.job_id).expect("checked above");
        book.first_start.get_or_insert(now);
        book.final_state = JobState::Running;
        let restart = std::mem::take(&mut book.needs_restart);
        // Not read from the running set: a later decision of the same pass
        // may already have evicted this job again.
        let job = book.template.clone();
        if restart {
            book.work_start = None;
            self.schedule(now + restart_cost(&job, &self.config), EventKind::RestartDone(job.id));
        } else {
            book.work_start = Some(now);
            let remaining = job.total_runtime - book.completed_runtime;
            self.schedule(now + remaining, EventKind::Finish(job.id));
        }
        if self.scheduler == SchedulerKind::Omfs && self.config.quantum_protection && self.config.quantum_seconds > 0 {
            self.schedule(now + self.config.quantum_seconds, EventKind::QuantumExpired(job.id));
        }
        let mut detail = format!(
            "decision={};flags={};restart={}",
            d.kind,
            job.flags(),
            u8::from(restart)
        );
        if d.kind == DecisionKind::Backfill && job.estimated_runtime.is_none() {
            detail.push_str(";estimate=fallback");
        }
        let rec_idle = d.cpu_idle_after;
        self.record_job(TraceEvent::Start, job.id, detail);
        self.records.last_mut().expect("just recorded").cpu_idle_after = rec_idle;
        debug!("t={now} start job {} ({})", job.id, d.kind);
        Ok(true)
    }

    fn evict(&mut self, id: JobId, disposition: Disposition, by: JobId, idle_after: u32) -> Result<()> {
        let now = self.state.now;
        self.cancel_pending(id);
        let book = self.books.get_mut(&id).ok_or(Error::UnknownJob(id))?;
        if let Some(ws) = book.work_start.take() {
            book.completed_runtime += now.saturating_sub(ws);
        }
        let completed = book.completed_runtime;
        match disposition {
            Disposition::Checkpointed => {
                book.checkpoint_count += 1;
                book.needs_restart = true;
                book.final_state = JobState::Checkpointed;
                let mut job = self
                    .state
                    .submitted_mut()
                    .remove(id)
                    .ok_or_else(|| Error::Contract(format!("checkpointed job {id} missing from the queue")))?;
                job.completed_runtime = completed;
                let done = now + checkpoint_cost(&job, &self.config);
                self.in_flight.insert(id, job);
                self.schedule(done, EventKind::CheckpointDone(id));
                self.record_job(TraceEvent::Checkpoint, id, format!("by={by};completed={completed}"));
            }
            Disposition::Dropped => {
                book.final_state = JobState::Killed;
                book.needs_restart = false;
                book.work_start = None;
                self.record_job(TraceEvent::Kill, id, format!("by={by};lost={completed}"));
            }
        }
        self.records.last_mut().expect("just recorded").cpu_idle_after = idle_after;

        if disposition == Disposition::Dropped && self.config.resubmit_killed {
            let book = self.books.get_mut(&id).expect("checked above");
            book.completed_runtime = 0;
            book.final_state = JobState::Submitted;
            let mut job = book.template.clone();
            job.state = JobState::Submitted;
            self.state.submit(job)?;
            self.record_job(TraceEvent::Resubmit, id, String::new());
            self.records.last_mut().expect("just recorded").cpu_idle_after = idle_after;
        }
        Ok(())
    }

    /// Runs until no events remain and returns the trace.
    pub fn run(mut self) -> Result<Trace> {
        while let Some(t) = self.next_event_time() {
            let mut rounds = 0usize;
            // Zero-delay events created while settling land at the same instant.
            while self.next_event_time() == Some(t) {
                rounds += 1;
                if rounds > MAX_PASSES_PER_INSTANT {
                    return Err(Error::Livelock(rounds));
                }
                self.state.now = t;
                let mut pass = false;
                while let Some(ev) = self.pop_event_at(t) {
                    pass |= self.apply_event(ev)?.pass_triggered;
                }
                if pass {
                    self.settle()?;
                }
            }
        }
        let leftovers: Vec<JobId> = self.state.submitted().ids();
        for id in leftovers {
            self.books.get_mut(&id).expect("queued jobs have books").stranded = true;
            self.record_job(TraceEvent::Stranded, id, String::new());
        }
        Ok(self.into_trace())
    }

    fn into_trace(self) -> Trace {
        let jobs = self
            .books
            .into_iter()
            .map(|(id, b)| {
                let t = b.template;
                (
                    id,
                    JobStats {
                        id,
                        user: t.user,
                        cpus: t.cpu_count,
                        priority: t.priority,
                        preemptable: t.preemptable,
                        checkpointable: t.checkpointable,
                        submit_time: t.submit_time,
                        total_runtime: t.total_runtime,
                        completed_runtime: b.completed_runtime,
                        first_start: b.first_start,
                        finish_time: b.finish_time,
                        checkpoint_count: b.checkpoint_count,
                        final_state: b.final_state,
                        stranded: b.stranded,
                    },
                )
            })
            .collect();
        Trace {
            cpu_total: self.state.cpu_total(),
            scheduler: self.scheduler,
            workload_hash: self.workload_hash,
            records: self.records,
            jobs,
        }
    }
}

/// Simulates `workload` under `scheduler` from an empty cluster.
pub fn simulate(workload: &WorkloadSpec, config: &PolicyConfig, scheduler: SchedulerKind) -> Result<Trace> {
    Simulation::new(workload, config, scheduler)?.run()
}
