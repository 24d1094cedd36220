//! Imports a Standard Workload Format trace and runs it under backfill.

use omfs::sim::TraceEvent;
use omfs::workload::{import_swf, SwfDefaults};
use omfs::{simulate, PolicyConfig, SchedulerKind};

const TRACE: &str = "\
; MaxProcs: 8
1 0 -1 100 4 -1 -1 4 120 -1 1 1 1 -1 1 -1 -1 -1
2 10 -1 50 -1 -1 -1 6 60 -1 1 2 1 -1 1 -1 -1 -1
3 20 -1 30 2 -1 -1 -1 30 -1 1 1 1 -1 1 -1 -1 -1
4 25 -1 oops
";

fn main() -> omfs::Result<()> {
    let imported = import_swf(TRACE, &SwfDefaults::default())?;
    println!("imported {} jobs, skipped {} lines", imported.workload.jobs.len(), imported.skipped);
    let trace = simulate(&imported.workload, &PolicyConfig::default(), SchedulerKind::Backfill)?;
    for r in trace.records.iter().filter(|r| r.event == TraceEvent::Start) {
        println!("t={:>4} start job {}", r.time, r.job_id.unwrap_or_default());
    }
    println!("makespan {}", trace.makespan());
    Ok(())
}
