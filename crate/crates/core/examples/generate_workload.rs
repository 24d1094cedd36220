//! Builds generator parameters in code and prints the workload they produce.

use omfs::workload::{generate_workload, Bounds, GeneratorParams, GeneratorUser};

fn main() -> omfs::Result<()> {
    let user = |name: &str, percent, arrival_rate| GeneratorUser {
        name: name.into(),
        percent,
        arrival_rate,
    };
    let params = GeneratorParams {
        seed: 42,
        n_jobs: 12,
        cpu_total: 32,
        users: vec![user("chem", 60, 0.01), user("bio", 40, 0.002)],
        runtime: Bounds { min: 600, max: 7200 },
        cpus: Bounds { min: 1, max: 16 },
        fraction_preemptable: 0.8,
        fraction_checkpointable: 0.5,
        burstiness: 0.3,
        estimate_factor_max: 1.5,
        max_priority: 3,
    };
    let workload = generate_workload(&params)?;
    print!("{}", workload.to_native());
    println!("# workload_hash {}", workload.hash());
    Ok(())
}
