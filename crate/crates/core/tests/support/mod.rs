#![allow(dead_code)]

pub mod reference_runner;
pub mod states;
pub mod trace_checks;
pub mod workloads;
