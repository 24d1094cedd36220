//! Checkpoint counts as the quantum grows, for short and for long jobs.

use omfs::sim::TraceEvent;
use omfs::workload::{generate_workload, GeneratorParams};
use omfs::{simulate, PolicyConfig, SchedulerKind};

fn main() -> omfs::Result<()> {
    let short: GeneratorParams = serde_json::from_str(include_str!("../fixtures/quantum.json"))
        .map_err(|e| omfs::Error::Generator(e.to_string()))?;
    let mut long = short.clone();
    long.runtime.min = 3600;
    long.runtime.max = 14_400;

    for (label, params) in [("runtimes 300-1500s", short), ("runtimes 3600-14400s", long)] {
        let workload = generate_workload(&params)?;
        print!("{label}:");
        for quantum in [0, 900, 1800, 3600] {
            let config = PolicyConfig {
                quantum_seconds: quantum,
                ..PolicyConfig::default()
            };
            let trace = simulate(&workload, &config, SchedulerKind::Omfs)?;
            let n = trace.records.iter().filter(|r| r.event == TraceEvent::Checkpoint).count();
            print!("  q={quantum}:{n}");
        }
        println!();
    }
    Ok(())
}
