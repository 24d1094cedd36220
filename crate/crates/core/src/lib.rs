//! Memoryless fair-share scheduling for HPC clusters with checkpoint-restart
//! preemption, and a deterministic discrete-event simulator to exercise it.
//!
//! Each user owns a percentage of the machine. A job may always use idle
//! CPUs; when the machine is full, a user still below its entitlement may
//! evict jobs of users above theirs. The scheduler keeps no usage history.
//!
//! - [`model`]: users, jobs and the cluster state.
//! - [`policy`]: queue and victim ordering, quantum protection, C/R costs.
//! - [`runner`]: admission of a single job and scheduling passes.
//! - [`baselines`]: FCFS, backfill and static capping for comparison.
//! - [`sim`]: the event-driven simulator and its trace.
//! - [`workload`]: workload files, SWF import, generator, configuration.
//! - [`metrics`]: utilization, waits, C/R counts, fairness scan, comparison.
//! - [`cli`]: the `omfs` command line.

pub mod baselines;
pub mod cli;
pub mod error;
pub mod metrics;
pub mod model;
pub mod policy;
pub mod runner;
pub mod sim;
pub mod workload;

pub use error::{Error, Result};
pub use model::{ClusterState, Job, JobId, JobState, Seconds, UserSet, UserSpec};
pub use policy::PolicyConfig;
pub use runner::{scheduler_pass, try_run, Decision, DecisionKind};
pub use sim::{simulate, SchedulerKind, Trace};
pub use workload::{parse_config, parse_workload, WorkloadSpec};
