use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::rmit::RmitPlan;
use super::suite::{register_suite, Microbenchmark, ServiceFactory};
use super::timing::run_timed_iteration;
use crate::faults::IssueConfig;
use crate::service::dataset::DatasetConfig;

/// A labelled build of the service: which issue it carries and how severe.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VersionSpec {
    pub label: String,
    pub issue: IssueConfig,
}

impl VersionSpec {
    pub fn new(label: impl Into<String>, issue: IssueConfig) -> Self {
        Self { label: label.into(), issue }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MeasurementSample {
    pub bench_id: String,
    pub version: String,
    pub instance_run: u32,
    pub suite_run: u32,
    pub iteration: u32,
    /// Mean time per operation; `None` when the iteration failed.
    pub mean_ns: Option<f64>,
    pub ops: u64,
    pub failed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Everything a fresh instance needs to execute its share of a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct InstanceJob {
    pub plan: RmitPlan,
    pub instance_run: u32,
    pub versions: [VersionSpec; 2],
    pub budget_ms: u64,
    pub dataset: DatasetConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum LaunchError {
    #[error("unknown benchmark {0}")]
    UnknownBenchmark(String),
    #[error("unknown version label {0}")]
    UnknownVersion(String),
    #[error("dataset: {0}")]
    Dataset(#[from] crate::service::dataset::DatasetError),
    #[error("instance process: {0}")]
    Process(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Runs one instance run of a plan in a fresh environment.
pub trait InstanceLauncher {
    fn launch(&self, job: &InstanceJob) -> Result<Vec<MeasurementSample>, LaunchError>;
}

/// Executes in the current process with a freshly seeded dataset per
/// instance run, or with a caller-supplied suite.
#[derive(Default)]
pub struct InProcessLauncher {
    suite: Option<Vec<Microbenchmark>>,
}

impl InProcessLauncher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_suite(suite: Vec<Microbenchmark>) -> Self {
        Self { suite: Some(suite) }
    }
}

impl InstanceLauncher for InProcessLauncher {
    fn launch(&self, job: &InstanceJob) -> Result<Vec<MeasurementSample>, LaunchError> {
        match &self.suite {
            Some(suite) => execute_instance(suite, job),
            None => {
                let factory = ServiceFactory::new(job.dataset)?;
                execute_instance(&register_suite(&factory), job)
            }
        }
    }
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".into())
}

/// Executes the slots of `job.instance_run` in plan order. A failing
/// iteration yields a failed sample and does not stop the rest.
pub fn execute_instance(suite: &[Microbenchmark], job: &InstanceJob) -> Result<Vec<MeasurementSample>, LaunchError> {
    let by_id: BTreeMap<&str, &Microbenchmark> = suite.iter().map(|b| (b.id.as_str(), b)).collect();
    let budget = Duration::from_millis(job.budget_ms);
    let mut out = Vec::new();
    for slot in job.plan.instance_slots(job.instance_run) {
        let bench = by_id
            .get(slot.bench_id.as_str())
            .ok_or_else(|| LaunchError::UnknownBenchmark(slot.bench_id.clone()))?;
        let version = job
            .versions
            .iter()
            .find(|v| v.label == slot.version)
            .ok_or_else(|| LaunchError::UnknownVersion(slot.version.clone()))?;

        let result = catch_unwind(AssertUnwindSafe(|| {
            let mut target = bench.instantiate(version.issue);
            run_timed_iteration(target.as_mut(), budget)
        }));
        let (mean_ns, ops, error) = match result {
            Ok(Ok(run)) => (Some(run.mean_ns), run.ops, None),
            Ok(Err(e)) => (None, 0, Some(e.to_string())),
            Err(p) => (None, 0, Some(panic_message(p))),
        };
        if let Some(e) = &error {
            tracing::warn!(bench = %slot.bench_id, version = %slot.version, "iteration failed: {e}");
        }
        out.push(MeasurementSample {
            bench_id: slot.bench_id.clone(),
            version: slot.version.clone(),
            instance_run: slot.instance_run,
            suite_run: slot.suite_run,
            iteration: slot.iteration,
            mean_ns,
            ops,
            failed: error.is_some(),
            error,
        });
    }
    Ok(out)
}

/// Samples of a whole plan plus the instance runs that failed outright.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MicroRun {
    pub samples: Vec<MeasurementSample>,
    pub failed_instances: Vec<(u32, String)>,
}

impl MicroRun {
    /// Successful per-iteration means for one benchmark and version.
    pub fn means(&self, bench_id: &str, version: &str) -> Vec<f64> {
        self.samples
            .iter()
            .filter(|s| s.bench_id == bench_id && s.version == version)
            .filter_map(|s| s.mean_ns)
            .collect()
    }

    pub fn bench_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.samples.iter().map(|s| s.bench_id.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }
}

/// Runs every instance run of `plan` through `launcher`, one after the other.
pub fn execute_plan(
    plan: &RmitPlan,
    versions: &[VersionSpec; 2],
    dataset: &DatasetConfig,
    budget: Duration,
    launcher: &dyn InstanceLauncher,
) -> MicroRun {
    let mut run = MicroRun::default();
    for instance_run in 0..plan.config.instance_runs {
        let job = InstanceJob {
            plan: plan.clone(),
            instance_run,
            versions: versions.clone(),
            budget_ms: budget.as_millis() as u64,
            dataset: *dataset,
        };
        tracing::info!(instance_run, "starting instance run");
        match launcher.launch(&job) {
            Ok(samples) => run.samples.extend(samples),
            Err(e) => {
                tracing::warn!(instance_run, "instance run failed: {e}");
                run.failed_instances.push((instance_run, e.to_string()));
            }
        }
    }
    run
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::faults::IssueKind;
    use crate::micro::rmit::{build_rmit_plan, RmitConfig};
    use crate::micro::{BenchError, BenchGroup, FnTarget};

    fn tiny() -> DatasetConfig {
        DatasetConfig { airport_count: 5, flight_count: 10, seats_per_flight: 6, user_count: 1, rng_seed: 2 }
    }

    fn versions() -> [VersionSpec; 2] {
        [
            VersionSpec::new("v1", IssueConfig::NONE),
            VersionSpec::new("v2", IssueConfig::new(IssueKind::RequestId, 1)),
        ]
    }

    #[test]
    fn failing_target_yields_failed_samples_and_run_continues() {
        let suite = vec![
            Microbenchmark::new("bad", "bad", BenchGroup::Store, [], |_| {
                Box::new(FnTarget(|| Err(BenchError::Target("nope".into()))))
            }),
            Microbenchmark::new("panics", "panics", BenchGroup::Store, [], |_| {
                Box::new(FnTarget(|| -> Result<(), BenchError> { panic!("kaboom") }))
            }),
            Microbenchmark::new("ok", "ok", BenchGroup::Store, [], |_| Box::new(FnTarget(|| Ok(())))),
        ];
        let ids: Vec<String> = suite.iter().map(|b| b.id.clone()).collect();
        let cfg = RmitConfig { instance_runs: 2, suite_runs: 1, iterations: 2 };
        let plan = build_rmit_plan(&ids, ["v1", "v2"], cfg, 1).unwrap();
        let run = execute_plan(&plan, &versions(), &tiny(), Duration::from_millis(2), &InProcessLauncher::with_suite(suite));
        assert!(run.failed_instances.is_empty());
        assert_eq!(run.samples.len(), 3 * 2 * 4);
        for s in &run.samples {
            assert_eq!(s.failed, s.bench_id != "ok");
            assert_eq!(s.mean_ns.is_none(), s.failed);
        }
        assert!(run.means("bad", "v1").is_empty());
        assert_eq!(run.means("ok", "v2").len(), 4);
    }

    struct Broken;
    impl InstanceLauncher for Broken {
        fn launch(&self, job: &InstanceJob) -> Result<Vec<MeasurementSample>, LaunchError> {
            if job.instance_run == 1 {
                Err(LaunchError::Process("crashed".into()))
            } else {
                InProcessLauncher::new().launch(job)
            }
        }
    }

    #[test]
    fn failed_instance_is_recorded_and_others_kept() {
        let ids = vec!["M3".to_string()];
        let cfg = RmitConfig { instance_runs: 3, suite_runs: 1, iterations: 1 };
        let plan = build_rmit_plan(&ids, ["v1", "v2"], cfg, 1).unwrap();
        let run = execute_plan(&plan, &versions(), &tiny(), Duration::from_millis(2), &Broken);
        assert_eq!(run.failed_instances.len(), 1);
        assert_eq!(run.failed_instances[0].0, 1);
        assert_eq!(run.samples.len(), 4);
    }

    #[test]
    fn unknown_benchmark_is_an_error() {
        let plan = build_rmit_plan(&["nope".to_string()], ["v1", "v2"], RmitConfig::FULL, 1).unwrap();
        let job = InstanceJob { plan, instance_run: 0, versions: versions(), budget_ms: 1, dataset: tiny() };
        assert!(matches!(InProcessLauncher::new().launch(&job), Err(LaunchError::UnknownBenchmark(_))));
    }

    #[test]
    fn sample_round_trips_as_json() {
        let s = MeasurementSample {
            bench_id: "M1".into(),
            version: "v1".into(),
            instance_run: 0,
            suite_run: 1,
            iteration: 2,
            mean_ns: Some(12.5),
            ops: 100,
            failed: false,
            error: None,
        };
        let j = serde_json::to_string(&s).unwrap();
        assert!(j.contains("\"benchId\":\"M1\"") && j.contains("\"meanNs\":12.5"));
        assert_eq!(serde_json::from_str::<MeasurementSample>(&j).unwrap(), s);
    }
}
