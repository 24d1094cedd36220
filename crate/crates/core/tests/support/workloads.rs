//! Fixture loading and seeded workload families.

use omfs::policy::PolicyConfig;
use omfs::workload::{generate_workload, parse_config, parse_workload, GeneratorParams, SystemConfig, WorkloadSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const S1_WL: &str = include_str!("../../fixtures/s1.wl");
pub const S1_CONFIG: &str = include_str!("../../fixtures/s1.json");
pub const POOLING_WL: &str = include_str!("../../fixtures/pooling.wl");
pub const CONFIG: &str = include_str!("../../fixtures/config.json");
pub const BURSTY: &str = include_str!("../../fixtures/bursty.json");
pub const MIXED: &str = include_str!("../../fixtures/mixed.json");
pub const TINY_SWF: &str = include_str!("../../fixtures/tiny.swf");
pub const QUANTUM: &str = include_str!("../../fixtures/quantum.json");

pub fn fixture_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn s1() -> (WorkloadSpec, SystemConfig) {
    let system = parse_config(S1_CONFIG).unwrap();
    (parse_workload(S1_WL).unwrap().reconcile(&system).unwrap(), system)
}

pub fn pooling() -> (WorkloadSpec, SystemConfig) {
    let system = parse_config(CONFIG).unwrap();
    (parse_workload(POOLING_WL).unwrap().reconcile(&system).unwrap(), system)
}

pub fn params(json: &str, seed: u64) -> GeneratorParams {
    let mut p: GeneratorParams = serde_json::from_str(json).unwrap();
    p.seed = seed;
    p
}

pub fn bursty(seed: u64) -> WorkloadSpec {
    generate_workload(&params(BURSTY, seed)).unwrap()
}

/// Jobs no longer than the default quantum, so protection lets most of
/// them finish before their CPUs can be reclaimed.
pub fn short_jobs() -> WorkloadSpec {
    generate_workload(&serde_json::from_str(QUANTUM).unwrap()).unwrap()
}

pub fn mixed(seed: u64) -> WorkloadSpec {
    generate_workload(&params(MIXED, seed)).unwrap()
}

/// A random workload family: machine size, user count, shares, job shapes
/// and arrival pressure all vary with the seed.
pub fn random_workload(seed: u64) -> WorkloadSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let cpu_total = rng.random_range(4..=64);
    let n_users = rng.random_range(1..=5);
    let mut left = 100;
    let users = (0..n_users)
        .map(|i| {
            let percent = if i + 1 == n_users { left } else { rng.random_range(0..=left) };
            left -= percent;
            serde_json::json!({
                "name": format!("user{i}"),
                "percent": percent,
                "arrival_rate": rng.random_range(0.0005..0.01),
            })
        })
        .collect::<Vec<_>>();
    let cpus_max = rng.random_range(1..=cpu_total);
    let runtime_min = rng.random_range(1..=1000);
    let json = serde_json::json!({
        "seed": seed,
        "n_jobs": rng.random_range(10..=80),
        "cpu_total": cpu_total,
        "users": users,
        "runtime": {"min": runtime_min, "max": runtime_min + rng.random_range(0..=20000)},
        "cpus": {"min": 1, "max": cpus_max},
        "fraction_preemptable": rng.random_range(0.0..=1.0),
        "fraction_checkpointable": rng.random_range(0.0..=1.0),
        "burstiness": rng.random_range(0.0..0.9),
        "estimate_factor_max": 2.0,
        "max_priority": rng.random_range(0..=4),
    });
    generate_workload(&serde_json::from_value(json).unwrap()).unwrap()
}

/// Costs and modes drawn from the seed; quantum protection as given.
///
/// The literal victim scope only comes with a quantum longer than any drawn
/// restart cost: without one, two entitled users can evict each other
/// forever (see `literal_scope_without_quantum_livelocks`).
pub fn random_policy(seed: u64, quantum_protection: bool) -> PolicyConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc0f1);
    let cost = |rng: &mut ChaCha8Rng| {
        if rng.random_bool(0.5) {
            omfs::policy::CostModel::ZERO
        } else {
            omfs::policy::CostModel::new(rng.random_range(0.0..120.0), rng.random_range(0.0..4.0))
        }
    };
    let quantum_seconds = [0, 300, 1800][rng.random_range(0..3)];
    let literal = quantum_protection && rng.random_bool(0.5);
    PolicyConfig {
        quantum_seconds: if literal { 1800 } else { quantum_seconds },
        checkpoint_cost: cost(&mut rng),
        restart_cost: cost(&mut rng),
        idle_fit_mode: if rng.random_bool(0.5) {
            omfs::policy::IdleFitMode::Strict
        } else {
            omfs::policy::IdleFitMode::Inclusive
        },
        quantum_protection,
        victim_scope: if literal {
            omfs::policy::VictimScope::Literal
        } else {
            omfs::policy::VictimScope::OverEntitlementFirst
        },
        resubmit_killed: rng.random_bool(0.3),
    }
}
