//! Entitled CPUs per user for a few machine sizes.

use omfs::metrics::entitlement_table;
use omfs::{UserSet, UserSpec};

fn main() -> omfs::Result<()> {
    let users = UserSet::new([UserSpec::new("A", 50), UserSpec::new("B", 25), UserSpec::new("C", 25)]);
    for cpu_total in [16, 30, 7] {
        println!("cpu_total {cpu_total}");
        for (name, percent, cpus) in entitlement_table(&users, cpu_total)? {
            println!("  {name} {percent}% -> {cpus} cpus");
        }
    }
    Ok(())
}
