//! A desk-scale laboratory for studying how well microbenchmarks and
//! application benchmarks detect injected performance regressions.
//!
//! * [`service`]: flight-booking HTTP service (the system under test)
//! * [`faults`]: severity-parameterized performance issues
//! * [`micro`]: 21-benchmark suite executed under randomized multiple
//!   interleaved trials
//! * [`loadgen`]: closed-workload duet load generator
//! * [`stats`]: median-ratio bootstrap change detection
//! * [`conductor`]: experiment orchestration, persistence and reporting

pub mod conductor;
pub mod faults;
pub mod jsonl;
pub mod loadgen;
pub mod micro;
pub mod service;
pub mod stats;
pub mod store;
