//! Workload and configuration I/O: the native workload format, Standard
//! Workload Format import, a seeded synthetic generator and the JSON system
//! configuration.
//!
//! Native workload files look like this:
//!
//! ```text
//! # cpu_total 16
//! # user A 50
//! # user B 25
//! # id submit runtime est_runtime cpus user priority flags
//! 1 0 100 120 4 A 0 PC
//! 2 10 50 - 2 B 1
//! ```
//!
//! `est_runtime` may be `-` (unknown). `flags` is a subset of `P`
//! (preemptable) and `C` (checkpointable, requires `P`); it may be omitted or
//! written `-` for a non-preemptable job.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, ParseError, Result};
use crate::model::{validate_system, Job, JobId, JobState, Seconds, UserSet, UserSpec};
use crate::policy::{CostModel, IdleFitMode, PolicyConfig, VictimScope, DEFAULT_QUANTUM_SECONDS};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobTemplate {
    pub id: JobId,
    pub submit_time: Seconds,
    pub total_runtime: Seconds,
    pub estimated_runtime: Option<Seconds>,
    pub cpu_count: u32,
    pub user: String,
    pub priority: u32,
    pub preemptable: bool,
    pub checkpointable: bool,
}

impl JobTemplate {
    pub fn to_job(&self) -> Job {
        Job {
            id: self.id,
            user: self.user.clone(),
            priority: self.priority,
            cpu_count: self.cpu_count,
            submit_time: self.submit_time,
            total_runtime: self.total_runtime,
            estimated_runtime: self.estimated_runtime,
            completed_runtime: 0,
            preemptable: self.preemptable,
            checkpointable: self.checkpointable,
            state: JobState::Submitted,
            last_start_time: None,
            checkpoint_count: 0,
        }
    }

    fn flags(&self) -> &'static str {
        match (self.preemptable, self.checkpointable) {
            (_, true) => "PC",
            (true, false) => "P",
            (false, false) => "-",
        }
    }
}

impl From<&Job> for JobTemplate {
    fn from(j: &Job) -> Self {
        JobTemplate {
            id: j.id,
            submit_time: j.submit_time,
            total_runtime: j.total_runtime,
            estimated_runtime: j.estimated_runtime,
            cpu_count: j.cpu_count,
            user: j.user.clone(),
            priority: j.priority,
            preemptable: j.preemptable,
            checkpointable: j.checkpointable,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub cpu_total: u32,
    pub users: UserSet,
    pub jobs: Vec<JobTemplate>,
}

impl WorkloadSpec {
    pub fn new(cpu_total: u32, users: UserSet, jobs: impl IntoIterator<Item = Job>) -> Self {
        WorkloadSpec {
            cpu_total,
            users,
            jobs: jobs.into_iter().map(|j| JobTemplate::from(&j)).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_system(&self.users, self.cpu_total).map_err(Error::Validation)?;
        let mut ids = BTreeSet::new();
        for j in &self.jobs {
            if !ids.insert(j.id) {
                return Err(Error::Config(format!("duplicate job id {}", j.id)));
            }
            if !self.users.contains(&j.user) {
                return Err(Error::UnknownUser(j.user.clone()));
            }
            if j.cpu_count > self.cpu_total {
                return Err(Error::Config(format!(
                    "job {} requests {} CPUs, system has {}",
                    j.id, j.cpu_count, self.cpu_total
                )));
            }
            if j.checkpointable && !j.preemptable {
                return Err(Error::Config(format!("job {} is checkpointable but not preemptable", j.id)));
            }
        }
        Ok(())
    }

    /// Serializes to the native format; [`parse_workload`] reads it back unchanged.
    pub fn to_native(&self) -> String {
        let mut out = String::new();
        out.push_str("# omfs workload\n");
        let _ = writeln!(out, "# cpu_total {}", self.cpu_total);
        for u in self.users.iter() {
            let _ = writeln!(out, "# user {} {}", u.name, u.percent);
        }
        out.push_str("# id submit runtime est_runtime cpus user priority flags\n");
        for j in &self.jobs {
            let est = j.estimated_runtime.map_or_else(|| "-".to_string(), |e| e.to_string());
            let _ = writeln!(
                out,
                "{} {} {} {} {} {} {} {}",
                j.id,
                j.submit_time,
                j.total_runtime,
                est,
                j.cpu_count,
                j.user,
                j.priority,
                j.flags()
            );
        }
        out
    }

    /// SHA-256 of the native serialization, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_native().as_bytes()))
    }

    /// Replaces the user table and CPU count with a configuration's, failing
    /// if the workload declared different ones. A config with no users keeps
    /// the workload's table.
    pub fn reconcile(mut self, system: &SystemConfig) -> Result<Self> {
        if self.cpu_total != 0 && self.cpu_total != system.cpu_total {
            return Err(Error::Config(format!(
                "workload declares cpu_total {} but the config has {}",
                self.cpu_total, system.cpu_total
            )));
        }
        if system.users.is_empty() {
            self.cpu_total = system.cpu_total;
            self.validate()?;
            return Ok(self);
        }
        if !self.users.is_empty() && self.users != system.users {
            return Err(Error::Config("workload user table differs from the config".into()));
        }
        self.cpu_total = system.cpu_total;
        self.users = system.users.clone();
        self.validate()?;
        Ok(self)
    }
}

struct Fields<'a> {
    line: usize,
    tokens: Vec<(usize, &'a str)>,
}

impl<'a> Fields<'a> {
    fn split(line: usize, text: &'a str) -> Self {
        let mut tokens = Vec::new();
        let mut start = None;
        for (i, c) in text.char_indices() {
            match (c.is_whitespace(), start) {
                (true, Some(s)) => {
                    tokens.push((s + 1, &text[s..i]));
                    start = None;
                }
                (false, None) => start = Some(i),
                _ => {}
            }
        }
        if let Some(s) = start {
            tokens.push((s + 1, &text[s..]));
        }
        Fields { line, tokens }
    }

    fn err(&self, column: usize, message: impl Into<String>) -> ParseError {
        ParseError {
            line: self.line,
            column,
            message: message.into(),
        }
    }

    fn num<T: std::str::FromStr>(&self, idx: usize, what: &str) -> Result<T, ParseError> {
        let (col, tok) = self.tokens[idx];
        tok.parse()
            .map_err(|_| self.err(col, format!("{what}: expected a non-negative integer, got `{tok}`")))
    }
}

/// Parses the native workload format. `cpu_total` and the user table must be declared.
pub fn parse_workload(text: &str) -> Result<WorkloadSpec> {
    let mut cpu_total = None;
    let mut users = Vec::new();
    let mut jobs: Vec<(usize, usize, JobTemplate)> = Vec::new();
    let mut ids = BTreeMap::new();

    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let body = raw.trim_end_matches('\r');
        if body.trim().is_empty() {
            continue;
        }
        if let Some(rest) = body.trim_start().strip_prefix('#') {
            let offset = body.len() - rest.len();
            let f = Fields::split(line, rest);
            match f.tokens.first().map(|t| t.1) {
                Some("cpu_total") => {
                    if f.tokens.len() != 2 {
                        return Err(f.err(offset + 1, "expected `# cpu_total <N>`").into());
                    }
                    if cpu_total.is_some() {
                        return Err(f.err(offset + 1, "cpu_total declared twice").into());
                    }
                    cpu_total = Some(f.num::<u32>(1, "cpu_total")?);
                }
                Some("user") => {
                    if f.tokens.len() != 3 {
                        return Err(f.err(offset + 1, "expected `# user <name> <percent>`").into());
                    }
                    users.push(UserSpec::new(f.tokens[1].1, f.num::<u32>(2, "percent")?));
                }
                _ => {}
            }
            continue;
        }

        let f = Fields::split(line, body);
        if !(7..=8).contains(&f.tokens.len()) {
            return Err(f
                .err(1, format!("expected 7 or 8 fields, found {}", f.tokens.len()))
                .into());
        }
        let id: JobId = f.num(0, "id")?;
        if let Some(prev) = ids.insert(id, line) {
            return Err(f.err(f.tokens[0].0, format!("duplicate job id {id} (first on line {prev})")).into());
        }
        let estimated_runtime = match f.tokens[3].1 {
            "-" => None,
            _ => Some(f.num(3, "est_runtime")?),
        };
        let (preemptable, checkpointable) = match f.tokens.get(7) {
            None => (false, false),
            Some(&(col, tok)) => parse_flags(tok).map_err(|m| f.err(col, m))?,
        };
        jobs.push((
            line,
            f.tokens[5].0,
            JobTemplate {
                id,
                submit_time: f.num(1, "submit")?,
                total_runtime: f.num(2, "runtime")?,
                estimated_runtime,
                cpu_count: f.num(4, "cpus")?,
                user: f.tokens[5].1.to_string(),
                priority: f.num(6, "priority")?,
                preemptable,
                checkpointable,
            },
        ));
    }

    let cpu_total = cpu_total.ok_or_else(|| ParseError {
        line: 1,
        column: 1,
        message: "missing `# cpu_total <N>` header".into(),
    })?;
    let users = UserSet::new(users);
    validate_system(&users, cpu_total).map_err(Error::Validation)?;
    for (line, column, j) in &jobs {
        if !users.contains(&j.user) {
            return Err(ParseError {
                line: *line,
                column: *column,
                message: format!("unknown user `{}`", j.user),
            }
            .into());
        }
        if j.cpu_count > cpu_total {
            return Err(ParseError {
                line: *line,
                column: 1,
                message: format!("job {} requests {} CPUs, system has {}", j.id, j.cpu_count, cpu_total),
            }
            .into());
        }
    }
    Ok(WorkloadSpec {
        cpu_total,
        users,
        jobs: jobs.into_iter().map(|(_, _, j)| j).collect(),
    })
}

fn parse_flags(tok: &str) -> std::result::Result<(bool, bool), String> {
    if tok == "-" {
        return Ok((false, false));
    }
    let (mut p, mut c) = (false, false);
    for ch in tok.chars() {
        let slot = match ch {
            'P' => &mut p,
            'C' => &mut c,
            other => return Err(format!("unknown flag `{other}` (expected P or C)")),
        };
        if *slot {
            return Err(format!("flag `{ch}` repeated"));
        }
        *slot = true;
    }
    if c && !p {
        return Err("flag C (checkpointable) requires P (preemptable)".into());
    }
    Ok((p, c))
}

/// Settings the Standard Workload Format cannot express.
#[derive(Debug, Clone, PartialEq)]
pub struct SwfDefaults {
    /// Falls back to the `MaxProcs` header, then to the largest job.
    pub cpu_total: Option<u32>,
    /// When absent, one user per SWF user id with equal shares.
    pub users: Option<UserSet>,
    pub preemptable: bool,
    pub checkpointable: bool,
    pub priority: u32,
    /// Reject malformed lines instead of skipping them.
    pub strict: bool,
}

impl Default for SwfDefaults {
    fn default() -> Self {
        SwfDefaults {
            cpu_total: None,
            users: None,
            preemptable: true,
            checkpointable: true,
            priority: 0,
            strict: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwfImport {
    pub workload: WorkloadSpec,
    /// Lines dropped in lenient mode.
    pub skipped: usize,
}

const SWF_FIELDS: usize = 18;

/// Imports an SWF trace. Fields used (1-based): 1 job id, 2 submit time,
/// 4 run time, 8 requested processors (5 allocated processors when 8 is
/// unset), 12 user id.
pub fn import_swf(text: &str, defaults: &SwfDefaults) -> Result<SwfImport> {
    let mut header_procs = None;
    let mut rows: Vec<(usize, JobTemplate)> = Vec::new();
    let mut skipped = 0usize;
    let mut seen = BTreeSet::new();

    let mut reject = |line: usize, msg: String| -> Result<()> {
        if defaults.strict {
            Err(ParseError {
                line,
                column: 1,
                message: msg,
            }
            .into())
        } else {
            log::warn!("swf line {line}: {msg}; skipped");
            skipped += 1;
            Ok(())
        }
    };

    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let body = raw.trim();
        if body.is_empty() {
            continue;
        }
        if let Some(comment) = body.strip_prefix(';') {
            if let Some((key, value)) = comment.split_once(':') {
                if key.trim() == "MaxProcs" {
                    header_procs = value.trim().parse::<u32>().ok();
                }
            }
            continue;
        }
        let fields: Vec<&str> = body.split_whitespace().collect();
        if fields.len() < SWF_FIELDS {
            reject(line, format!("expected {SWF_FIELDS} fields, found {}", fields.len()))?;
            continue;
        }
        let num = |i: usize| -> Option<i64> { fields[i - 1].parse::<f64>().ok().map(|v| v as i64) };
        let (Some(id), Some(submit), Some(runtime), Some(alloc), Some(req), Some(user)) =
            (num(1), num(2), num(4), num(5), num(8), num(12))
        else {
            reject(line, "non-numeric field".into())?;
            continue;
        };
        if id < 0 || submit < 0 {
            reject(line, "negative job id or submit time".into())?;
            continue;
        }
        if runtime < 0 {
            reject(line, format!("negative runtime {runtime}"))?;
            continue;
        }
        let cpus = if req > 0 { req } else { alloc };
        if cpus <= 0 {
            reject(line, "no processor count".into())?;
            continue;
        }
        if !seen.insert(id) {
            reject(line, format!("duplicate job id {id}"))?;
            continue;
        }
        let user = if user >= 0 { format!("u{user}") } else { "unknown".into() };
        rows.push((
            line,
            JobTemplate {
                id: id as JobId,
                submit_time: submit as Seconds,
                total_runtime: runtime as Seconds,
                estimated_runtime: None,
                cpu_count: cpus.min(i64::from(u32::MAX)) as u32,
                user,
                priority: defaults.priority,
                preemptable: defaults.preemptable || defaults.checkpointable,
                checkpointable: defaults.checkpointable,
            },
        ));
    }

    let cpu_total = defaults
        .cpu_total
        .or(header_procs)
        .unwrap_or_else(|| rows.iter().map(|(_, j)| j.cpu_count).max().unwrap_or(1));
    let users = match &defaults.users {
        Some(u) => u.clone(),
        None => {
            let names: BTreeSet<&str> = rows.iter().map(|(_, j)| j.user.as_str()).collect();
            let share = if names.is_empty() { 0 } else { 100 / names.len() as u32 };
            names.into_iter().map(|n| UserSpec::new(n, share)).collect()
        }
    };

    let mut jobs = Vec::with_capacity(rows.len());
    for (line, j) in rows {
        if j.cpu_count > cpu_total {
            reject(line, format!("{} processors exceed the system's {cpu_total}", j.cpu_count))?;
            continue;
        }
        if !users.contains(&j.user) {
            reject(line, format!("user {} not in the configured user table", j.user))?;
            continue;
        }
        jobs.push(j);
    }
    let workload = WorkloadSpec { cpu_total, users, jobs };
    workload.validate()?;
    Ok(SwfImport { workload, skipped })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorUser {
    pub name: String,
    pub percent: u32,
    /// Mean submissions per second; zero means the user submits nothing.
    pub arrival_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub min: u64,
    pub max: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorParams {
    pub seed: u64,
    pub n_jobs: usize,
    pub cpu_total: u32,
    pub users: Vec<GeneratorUser>,
    pub runtime: Bounds,
    pub cpus: Bounds,
    pub fraction_preemptable: f64,
    /// Share of the preemptable jobs that are also checkpointable.
    pub fraction_checkpointable: f64,
    /// Probability that a user's next job arrives together with the previous one.
    #[serde(default)]
    pub burstiness: f64,
    /// Estimates are drawn uniformly from `[runtime, runtime * factor]`.
    #[serde(default = "one")]
    pub estimate_factor_max: f64,
    #[serde(default)]
    pub max_priority: u32,
}

fn one() -> f64 {
    1.0
}

impl GeneratorParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Generator(m));
        let users = UserSet::new(self.users.iter().map(|u| UserSpec::new(&u.name, u.percent)));
        validate_system(&users, self.cpu_total).map_err(Error::Validation)?;
        for (name, v) in [
            ("fraction_preemptable", self.fraction_preemptable),
            ("fraction_checkpointable", self.fraction_checkpointable),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} outside [0, 1]"));
            }
        }
        if !(0.0..1.0).contains(&self.burstiness) {
            return bad(format!("burstiness = {} outside [0, 1)", self.burstiness));
        }
        if !(self.estimate_factor_max.is_finite() && self.estimate_factor_max >= 1.0) {
            return bad("estimate_factor_max must be at least 1".into());
        }
        if self.runtime.min == 0 || self.runtime.min > self.runtime.max {
            return bad(format!("runtime bounds {:?} must satisfy 0 < min <= max", self.runtime));
        }
        if self.cpus.min == 0 || self.cpus.min > self.cpus.max || self.cpus.max > u64::from(self.cpu_total) {
            return bad(format!(
                "cpus bounds {:?} must satisfy 0 < min <= max <= cpu_total",
                self.cpus
            ));
        }
        if self.users.iter().any(|u| !(u.arrival_rate.is_finite() && u.arrival_rate >= 0.0)) {
            return bad("arrival rates must be finite and non-negative".into());
        }
        if self.n_jobs > 0 && self.users.iter().all(|u| u.arrival_rate == 0.0) {
            return bad("no user has a positive arrival rate".into());
        }
        Ok(())
    }
}

/// Draws a workload; identical parameters give an identical workload.
///
/// Each user with a positive rate has its own Poisson arrival stream; the
/// streams are merged in time order and cut at `n_jobs`. Job ids follow
/// arrival order starting at 1.
pub fn generate_workload(params: &GeneratorParams) -> Result<WorkloadSpec> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let gaps: Vec<Option<Exp<f64>>> = params
        .users
        .iter()
        .map(|u| (u.arrival_rate > 0.0).then(|| Exp::new(u.arrival_rate).expect("rate checked positive")))
        .collect();
    let mut next: Vec<Option<f64>> = gaps.iter().map(|g| g.map(|g| g.sample(&mut rng))).collect();

    let mut jobs = Vec::with_capacity(params.n_jobs);
    for id in 1..=params.n_jobs as JobId {
        let (who, at) = next
            .iter()
            .enumerate()
            .filter_map(|(i, t)| t.map(|t| (i, t)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .expect("some user has a positive rate");
        let total_runtime = rng.random_range(params.runtime.min..=params.runtime.max);
        let cpu_count = rng.random_range(params.cpus.min..=params.cpus.max) as u32;
        let priority = rng.random_range(0..=params.max_priority);
        let preemptable = rng.random_bool(params.fraction_preemptable);
        let checkpointable = preemptable && rng.random_bool(params.fraction_checkpointable);
        let factor = rng.random_range(1.0..=params.estimate_factor_max);
        jobs.push(JobTemplate {
            id,
            submit_time: at as Seconds,
            total_runtime,
            estimated_runtime: Some((total_runtime as f64 * factor).ceil() as Seconds),
            cpu_count,
            user: params.users[who].name.clone(),
            priority,
            preemptable,
            checkpointable,
        });

        let gap = if rng.random_bool(params.burstiness) {
            0.0
        } else {
            gaps[who].expect("user was chosen").sample(&mut rng)
        };
        next[who] = Some(at + gap);
    }
    Ok(WorkloadSpec {
        cpu_total: params.cpu_total,
        users: params.users.iter().map(|u| UserSpec::new(&u.name, u.percent)).collect(),
        jobs,
    })
}

/// Users, machine size and policy, as read from a JSON config file.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub users: UserSet,
    pub cpu_total: u32,
    pub policy: PolicyConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    cpu_total: u32,
    users: BTreeMap<String, u32>,
    quantum_seconds: Option<Seconds>,
    checkpoint_cost: Option<CostModel>,
    restart_cost: Option<CostModel>,
    idle_fit_mode: Option<IdleFitMode>,
    quantum_protection: Option<bool>,
    victim_scope: Option<VictimScope>,
    resubmit_killed: Option<bool>,
}

pub fn parse_config(text: &str) -> Result<SystemConfig> {
    let file: ConfigFile = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let users: UserSet = file.users.into_iter().map(|(n, p)| UserSpec::new(n, p)).collect();
    validate_system(&users, file.cpu_total).map_err(Error::Validation)?;
    let policy = PolicyConfig {
        quantum_seconds: file.quantum_seconds.unwrap_or(DEFAULT_QUANTUM_SECONDS),
        checkpoint_cost: file.checkpoint_cost.unwrap_or(CostModel::ZERO),
        restart_cost: file.restart_cost.unwrap_or(CostModel::ZERO),
        idle_fit_mode: file.idle_fit_mode.unwrap_or_default(),
        quantum_protection: file.quantum_protection.unwrap_or(true),
        victim_scope: file.victim_scope.unwrap_or_default(),
        resubmit_killed: file.resubmit_killed.unwrap_or(false),
    };
    policy.validate()?;
    Ok(SystemConfig {
        users,
        cpu_total: file.cpu_total,
        policy,
    })
}
