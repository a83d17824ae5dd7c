//! Microbenchmark suite and its execution under randomized multiple
//! interleaved trials (RMIT).

pub mod execute;
pub mod rmit;
pub mod suite;
pub mod timing;

pub use execute::{
    execute_instance, execute_plan, InProcessLauncher, InstanceJob, InstanceLauncher, LaunchError,
    MeasurementSample, MicroRun, VersionSpec,
};
pub use rmit::{build_rmit_plan, RmitConfig, RmitPlan, Slot};
pub use suite::{register_suite, suite_ids, BenchGroup, FnTarget, Microbenchmark, ServiceFactory};
pub use timing::{run_timed_iteration, TimedRun};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BenchError {
    #[error("benchmark target failed: {0}")]
    Target(String),
    /// The target consumed its finite inputs and needs a reset.
    #[error("benchmark target exhausted")]
    Exhausted,
    #[error("benchmark target made no progress")]
    NoProgress,
}

/// One benchmarkable operation with private state.
pub trait BenchTarget {
    fn run_once(&mut self) -> Result<(), BenchError>;

    /// Remaining operations before [`BenchTarget::reset`] is needed, if finite.
    fn remaining_capacity(&self) -> Option<u64> {
        None
    }

    /// Restores fresh state. Called outside timed regions.
    fn reset(&mut self) {}
}
