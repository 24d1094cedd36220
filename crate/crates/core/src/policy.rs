//! Queue ordering, quantum protection and the checkpoint/restart cost model.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Job, JobId, JobState, Seconds, UsageSnapshot};

/// How the "enough idle CPUs" test compares idle CPUs with the request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdleFitMode {
    /// `cpu_idle > cpu_count`.
    #[default]
    Strict,
    /// `cpu_idle >= cpu_count`.
    Inclusive,
}

impl IdleFitMode {
    pub fn fits(self, cpu_idle: u32, cpu_count: u32) -> bool {
        match self {
            IdleFitMode::Strict => cpu_idle > cpu_count,
            IdleFitMode::Inclusive => cpu_idle >= cpu_count,
        }
    }
}

/// Which running jobs are offered as eviction victims first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VictimScope {
    /// Every unprotected preemptable job is equally eligible. Serialized
    /// as `paper_literal`.
    #[serde(rename = "paper_literal")]
    Literal,
    /// Jobs of users above their entitlement go before anyone else's.
    #[default]
    OverEntitlementFirst,
}

macro_rules! str_enum {
    ($ty:ty { $($variant:path => $s:literal),+ $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($variant => $s),+ })
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($s => Ok($variant),)+
                    other => Err(Error::Config(format!("unknown value `{other}`"))),
                }
            }
        }
    };
}

str_enum!(IdleFitMode { IdleFitMode::Strict => "strict", IdleFitMode::Inclusive => "inclusive" });
str_enum!(VictimScope {
    VictimScope::Literal => "paper_literal",
    VictimScope::OverEntitlementFirst => "over_entitlement_first",
});

/// Linear cost `fixed + per_cpu * cpus`, rounded up to whole seconds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModel {
    #[serde(default)]
    pub fixed: f64,
    #[serde(default)]
    pub per_cpu: f64,
}

impl CostModel {
    pub const ZERO: CostModel = CostModel {
        fixed: 0.0,
        per_cpu: 0.0,
    };

    pub fn new(fixed: f64, per_cpu: f64) -> Self {
        CostModel { fixed, per_cpu }
    }

    pub fn seconds(&self, cpu_count: u32) -> Seconds {
        let cost = self.fixed + self.per_cpu * f64::from(cpu_count);
        cost.max(0.0).ceil() as Seconds
    }

    fn is_valid(&self) -> bool {
        self.fixed.is_finite() && self.per_cpu.is_finite() && self.fixed >= 0.0 && self.per_cpu >= 0.0
    }
}

pub const DEFAULT_QUANTUM_SECONDS: Seconds = 1800;

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    pub quantum_seconds: Seconds,
    pub checkpoint_cost: CostModel,
    pub restart_cost: CostModel,
    pub idle_fit_mode: IdleFitMode,
    pub quantum_protection: bool,
    pub victim_scope: VictimScope,
    /// Re-enter killed (non-checkpointable) victims from scratch.
    pub resubmit_killed: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            quantum_seconds: DEFAULT_QUANTUM_SECONDS,
            checkpoint_cost: CostModel::ZERO,
            restart_cost: CostModel::ZERO,
            idle_fit_mode: IdleFitMode::Strict,
            quantum_protection: true,
            victim_scope: VictimScope::OverEntitlementFirst,
            resubmit_killed: false,
        }
    }
}

impl PolicyConfig {
    /// Strict idle fit, no quantum, no entitlement tiers when picking victims.
    pub fn literal() -> Self {
        PolicyConfig {
            quantum_seconds: 0,
            victim_scope: VictimScope::Literal,
            ..PolicyConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.checkpoint_cost.is_valid() || !self.restart_cost.is_valid() {
            return Err(Error::Config(
                "checkpoint and restart costs must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Upper bound on a single checkpoint plus restart for a job of `cpu_count` CPUs.
    pub fn cr_cost(&self, cpu_count: u32) -> Seconds {
        self.checkpoint_cost.seconds(cpu_count) + self.restart_cost.seconds(cpu_count)
    }
}

/// Eviction tiers, lowest evicted first.
pub mod tier {
    pub const OVER_ENTITLEMENT: u8 = 0;
    pub const WITHIN_ENTITLEMENT: u8 = 1;
    pub const QUANTUM_PROTECTED: u8 = 2;
    /// Non-preemptable jobs are never victims.
    pub const NEVER: u8 = 3;
}

/// Total order used for both queues. Smaller keys are dequeued first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OrderKey {
    pub victim_tier: u8,
    pub user_local_priority: i64,
    /// Negated uninterrupted runtime for victims, zero in the submitted queue.
    pub elapsed_rank: i64,
    pub tiebreak: (Seconds, JobId),
}

/// Highest priority first, then oldest submission, then lowest id.
pub fn submitted_order(job: &Job) -> OrderKey {
    OrderKey {
        victim_tier: 0,
        user_local_priority: -i64::from(job.priority),
        elapsed_rank: 0,
        tiebreak: (job.submit_time, job.id),
    }
}

pub fn is_quantum_protected(job: &Job, now: Seconds, config: &PolicyConfig) -> Result<bool> {
    let started = match (job.state, job.last_start_time) {
        (JobState::Running, Some(t)) => t,
        _ => {
            return Err(Error::Contract(format!(
                "quantum check on job {} which is {} without a start time",
                job.id, job.state
            )))
        }
    };
    Ok(protected_since(started, now, config))
}

pub(crate) fn protected_since(started: Seconds, now: Seconds, config: &PolicyConfig) -> bool {
    config.quantum_protection && now.saturating_sub(started) < config.quantum_seconds
}

/// Eviction order of a running job; `snapshot` is the usage of the job's user.
pub fn running_victim_order(job: &Job, now: Seconds, snapshot: &UsageSnapshot, config: &PolicyConfig) -> OrderKey {
    let started = job.last_start_time.unwrap_or(now);
    let victim_tier = if !job.preemptable {
        tier::NEVER
    } else if protected_since(started, now, config) {
        tier::QUANTUM_PROTECTED
    } else if config.victim_scope == VictimScope::Literal || snapshot.over_entitlement() {
        tier::OVER_ENTITLEMENT
    } else {
        tier::WITHIN_ENTITLEMENT
    };
    OrderKey {
        victim_tier,
        user_local_priority: i64::from(job.priority),
        elapsed_rank: -(now.saturating_sub(started) as i64),
        tiebreak: (job.submit_time, job.id),
    }
}

pub fn checkpoint_cost(job: &Job, config: &PolicyConfig) -> Seconds {
    config.checkpoint_cost.seconds(job.cpu_count)
}

pub fn restart_cost(job: &Job, config: &PolicyConfig) -> Seconds {
    config.restart_cost.seconds(job.cpu_count)
}
