use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{BenchType, ConfigError, ExperimentConfig, LauncherKind};
use super::launch::{InProcessServices, ServiceLauncher, SubprocessLauncher, SubprocessServices};
use crate::jsonl;
use crate::loadgen::{self, DuetTarget, Endpoint, HttpConnector, RequestRecord};
use crate::micro::{self, InProcessLauncher, InstanceLauncher, MeasurementSample, MicroRun, VersionSpec};
use crate::stats::{self, ChangeReport, RciwStat, StatsConfig};

pub const SCHEMA_VERSION: u32 = 1;
pub const BASELINE_LABEL: &str = "v1";
pub const TREATMENT_LABEL: &str = "v2";

const MANIFEST: &str = "manifest.json";
const REPORTS: &str = "reports.jsonl";
const RCIW: &str = "rciw.jsonl";
const MICRO_RAW: &str = "micro_samples.jsonl";
const APP_RAW: &str = "app_records.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum RawData {
    Micro { samples: Vec<MeasurementSample> },
    App { records: Vec<RequestRecord> },
}

impl RawData {
    fn file_name(&self) -> &'static str {
        match self {
            RawData::Micro { .. } => MICRO_RAW,
            RawData::App { .. } => APP_RAW,
        }
    }

    fn write(&self, dir: &Path) -> std::io::Result<()> {
        let path = dir.join(self.file_name());
        match self {
            RawData::Micro { samples } => jsonl::write(&path, samples),
            RawData::App { records } => jsonl::write(&path, records),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FailureCounts {
    pub failed_iterations: u64,
    pub failed_instances: u64,
    pub transport_failures: u64,
    pub error_statuses: u64,
    /// Set when the experiment could not run at all.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fatal: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub reports: Vec<ChangeReport>,
    pub rciw: Vec<RciwStat>,
    /// Expected targets without a report.
    pub missing_targets: Vec<String>,
    pub failures: FailureCounts,
    pub partial: bool,
    pub wall_time_s: f64,
    #[serde(skip)]
    pub raw: Option<RawData>,
}

impl ExperimentResult {
    pub fn report(&self, target: &str) -> Option<&ChangeReport> {
        self.reports.iter().find(|r| r.target == target)
    }

    pub fn is_complete(&self) -> bool {
        !self.partial
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Targets an experiment of this type is expected to report on.
pub fn expected_targets(bench_type: BenchType) -> Vec<String> {
    match bench_type {
        BenchType::Micro => micro::suite_ids(),
        BenchType::App => Endpoint::ALL.iter().map(|e| e.id().to_string()).collect(),
    }
}

/// Bootstrap stream for one target, independent of analysis order.
fn target_rng(seed: u64, target: &str, purpose: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(purpose.as_bytes());
    h.update([0]);
    h.update(target.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

#[allow(clippy::too_many_arguments)]
fn analyze_pair(
    target: &str,
    v1: &[f64],
    v2: &[f64],
    stats: &StatsConfig,
    seed: u64,
    reports: &mut Vec<ChangeReport>,
    rciw: &mut Vec<RciwStat>,
    missing: &mut Vec<String>,
) {
    if v1.is_empty() || v2.is_empty() {
        missing.push(target.to_string());
        return;
    }
    match stats::analyze_target(target, v1, v2, stats, &mut target_rng(seed, target, "ratio")) {
        Ok(r) => reports.push(r),
        Err(e) => {
            tracing::warn!(target, "analysis failed: {e}");
            missing.push(target.to_string());
            return;
        }
    }
    for (label, xs) in [(BASELINE_LABEL, v1), (TREATMENT_LABEL, v2)] {
        let mut rng = target_rng(seed, &format!("{target}/{label}"), "rciw");
        if let Ok(s) = stats::compute_rciw(target, label, xs, stats.bootstrap_iterations, stats.level, &mut rng) {
            rciw.push(s);
        }
    }
}

pub struct Analysis {
    pub reports: Vec<ChangeReport>,
    pub rciw: Vec<RciwStat>,
    pub missing_targets: Vec<String>,
}

/// Ratio of per-iteration mean durations per benchmark.
pub fn analyze_micro(samples: &[MeasurementSample], stats: &StatsConfig, seed: u64) -> Analysis {
    let run = MicroRun { samples: samples.to_vec(), failed_instances: Vec::new() };
    let mut a = Analysis { reports: Vec::new(), rciw: Vec::new(), missing_targets: Vec::new() };
    for id in micro::suite_ids() {
        let (v1, v2) = (run.means(&id, BASELINE_LABEL), run.means(&id, TREATMENT_LABEL));
        analyze_pair(&id, &v1, &v2, stats, seed, &mut a.reports, &mut a.rciw, &mut a.missing_targets);
    }
    a
}

/// Trims both versions to a common window, then compares per-second
/// median latencies per endpoint.
pub fn analyze_app(records: &[RequestRecord], trim: &super::config::TrimSettings, stats: &StatsConfig, seed: u64) -> Analysis {
    let mut a = Analysis { reports: Vec::new(), rciw: Vec::new(), missing_targets: Vec::new() };
    let split: Vec<Vec<RequestRecord>> = [BASELINE_LABEL, TREATMENT_LABEL]
        .iter()
        .map(|l| records.iter().filter(|r| r.version == *l).cloned().collect())
        .collect();
    let trimmed = match stats::trim_records(&split, trim.warmup_s, trim.cooldown_s) {
        Ok(t) => t,
        Err(e) => {
            tracing::warn!("trimming failed: {e}");
            a.missing_targets = Endpoint::ALL.iter().map(|e| e.id().to_string()).collect();
            return a;
        }
    };
    for e in Endpoint::ALL {
        let series = |recs: &[RequestRecord]| -> Vec<f64> {
            stats::per_second_medians(&loadgen::endpoint_series(recs, e)).into_iter().map(|(_, m)| m).collect()
        };
        let (v1, v2) = (series(&trimmed[0]), series(&trimmed[1]));
        analyze_pair(e.id(), &v1, &v2, stats, seed, &mut a.reports, &mut a.rciw, &mut a.missing_targets);
    }
    a
}

fn analyze_raw(config: &ExperimentConfig, raw: &RawData) -> Analysis {
    match raw {
        RawData::Micro { samples } => analyze_micro(samples, &config.stats, config.rng_seed),
        RawData::App { records } => analyze_app(records, &config.trim, &config.stats, config.rng_seed),
    }
}

fn executable(config: &ExperimentConfig) -> std::io::Result<PathBuf> {
    match &config.executable {
        Some(p) => Ok(p.clone()),
        None => std::env::current_exe(),
    }
}

struct Collected {
    raw: RawData,
    failures: FailureCounts,
}

fn versions(config: &ExperimentConfig) -> [VersionSpec; 2] {
    [VersionSpec::new(BASELINE_LABEL, config.baseline()), VersionSpec::new(TREATMENT_LABEL, config.treatment())]
}

fn collect_micro(config: &ExperimentConfig, dir: &Path) -> std::io::Result<Collected> {
    let ids = micro::suite_ids();
    let plan = micro::build_rmit_plan(&ids, [BASELINE_LABEL, TREATMENT_LABEL], config.rmit.plan_config(), config.rng_seed)
        .expect("validated config yields a plan");
    jsonl::write(&dir.join("plan.jsonl"), &plan.slots)?;
    let launcher: Box<dyn InstanceLauncher> = match config.launcher {
        LauncherKind::InProcess => Box::new(InProcessLauncher::new()),
        LauncherKind::Subprocess => Box::new(SubprocessLauncher { exe: executable(config)?, work_dir: dir.join("instances") }),
    };
    let run = micro::execute_plan(
        &plan,
        &versions(config),
        &config.dataset,
        Duration::from_secs_f64(config.rmit.budget_seconds),
        launcher.as_ref(),
    );
    let failures = FailureCounts {
        failed_iterations: run.samples.iter().filter(|s| s.failed).count() as u64,
        failed_instances: run.failed_instances.len() as u64,
        ..Default::default()
    };
    Ok(Collected { raw: RawData::Micro { samples: run.samples }, failures })
}

fn collect_app(config: &ExperimentConfig) -> std::io::Result<Collected> {
    let services: Box<dyn ServiceLauncher> = match config.launcher {
        LauncherKind::InProcess => Box::new(InProcessServices),
        LauncherKind::Subprocess => Box::new(SubprocessServices { exe: executable(config)? }),
    };
    let fatal = |msg: String| Collected {
        raw: RawData::App { records: Vec::new() },
        failures: FailureCounts { fatal: Some(msg), ..Default::default() },
    };
    let v1 = match services.start(config.baseline(), &config.dataset) {
        Ok(h) => h,
        Err(e) => return Ok(fatal(format!("starting {BASELINE_LABEL}: {e}"))),
    };
    let v2 = match services.start(config.treatment(), &config.dataset) {
        Ok(h) => h,
        Err(e) => return Ok(fatal(format!("starting {TREATMENT_LABEL}: {e}"))),
    };
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    let outcome = rt.block_on(loadgen::run_duet_workload(
        [
            DuetTarget::new(BASELINE_LABEL, HttpConnector::new(v1.addr())),
            DuetTarget::new(TREATMENT_LABEL, HttpConnector::new(v2.addr())),
        ],
        &config.workload,
        &config.dataset.credentials(0),
        config.duet,
    ));
    drop((v1, v2));
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => return Ok(fatal(e.to_string())),
    };
    let mut failures = FailureCounts::default();
    let mut records = Vec::new();
    let mut partial_versions = Vec::new();
    for v in outcome.versions {
        failures.transport_failures += v.transport_failures;
        failures.error_statuses += v.error_statuses;
        if v.partial {
            partial_versions.push(v.label.clone());
        }
        records.extend(v.records);
    }
    if !partial_versions.is_empty() {
        failures.fatal = Some(format!("service died mid-run: {}", partial_versions.join(", ")));
    }
    Ok(Collected { raw: RawData::App { records }, failures })
}

/// Runs one experiment: baseline v1 (no issue) against v2 (issue at
/// severity). Raw data reaches disk before any analysis runs.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult, ExperimentError> {
    config.validate()?;
    let dir = config.experiment_dir();
    std::fs::create_dir_all(&dir)?;
    let started = Instant::now();
    tracing::info!(experiment = %config.name(), "starting");

    let collected = match config.bench_type {
        BenchType::Micro => collect_micro(config, &dir)?,
        BenchType::App => collect_app(config)?,
    };
    collected.raw.write(&dir)?;

    let analysis = analyze_raw(config, &collected.raw);
    let partial = collected.failures.fatal.is_some()
        || collected.failures.failed_instances > 0
        || !analysis.missing_targets.is_empty();
    let result = ExperimentResult {
        config: config.clone(),
        config_hash: config.config_hash(),
        reports: analysis.reports,
        rciw: analysis.rciw,
        missing_targets: analysis.missing_targets,
        failures: collected.failures,
        partial,
        wall_time_s: started.elapsed().as_secs_f64(),
        raw: Some(collected.raw),
    };
    persist_results(&result, &dir)?;
    tracing::info!(experiment = %config.name(), partial, secs = result.wall_time_s, "finished");
    Ok(result)
}

// ---------------------------------------------------------------------------
// Persistence

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct Manifest {
    schema_version: u32,
    config_hash: String,
    config: ExperimentConfig,
    missing_targets: Vec<String>,
    failures: FailureCounts,
    partial: bool,
    wall_time_s: f64,
    reports_file: String,
    rciw_file: String,
    #[serde(default)]
    raw_file: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum PersistError {
    #[error("no results in {0}")]
    NotFound(PathBuf),
    #[error("schema version {found} is not supported (expected {SCHEMA_VERSION})")]
    Schema { found: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub fn persist_results(result: &ExperimentResult, dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    if let Some(raw) = &result.raw {
        raw.write(dir)?;
    }
    jsonl::write(&dir.join(REPORTS), &result.reports)?;
    jsonl::write(&dir.join(RCIW), &result.rciw)?;
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        config_hash: result.config_hash.clone(),
        config: result.config.clone(),
        missing_targets: result.missing_targets.clone(),
        failures: result.failures.clone(),
        partial: result.partial,
        wall_time_s: result.wall_time_s,
        reports_file: REPORTS.into(),
        rciw_file: RCIW.into(),
        raw_file: result.raw.as_ref().map(|r| r.file_name().to_string()),
    };
    std::fs::write(dir.join(MANIFEST), serde_json::to_vec_pretty(&manifest)?)
}

/// Loaded result plus integrity warnings.
#[derive(Debug, Clone, PartialEq)]
pub struct Loaded {
    pub result: ExperimentResult,
    pub warnings: Vec<String>,
}

pub fn load_results_checked(dir: &Path) -> Result<Loaded, PersistError> {
    let manifest_path = dir.join(MANIFEST);
    if !manifest_path.is_file() {
        return Err(PersistError::NotFound(dir.to_path_buf()));
    }
    let value: serde_json::Value = serde_json::from_slice(&std::fs::read(&manifest_path)?)?;
    let found = value.get("schemaVersion").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if found != SCHEMA_VERSION {
        return Err(PersistError::Schema { found });
    }
    let m: Manifest = serde_json::from_value(value)?;
    let mut warnings = Vec::new();
    let actual = m.config.config_hash();
    if actual != m.config_hash {
        let w = format!("config hash mismatch in {}: manifest {} vs config {actual}", dir.display(), m.config_hash);
        tracing::warn!("{w}");
        warnings.push(w);
    }
    let raw = match m.raw_file.as_deref() {
        Some(MICRO_RAW) => Some(RawData::Micro { samples: jsonl::read(&dir.join(MICRO_RAW))? }),
        Some(APP_RAW) => Some(RawData::App { records: jsonl::read(&dir.join(APP_RAW))? }),
        _ => None,
    };
    let result = ExperimentResult {
        config: m.config,
        config_hash: m.config_hash,
        reports: jsonl::read(&dir.join(&m.reports_file))?,
        rciw: jsonl::read(&dir.join(&m.rciw_file))?,
        missing_targets: m.missing_targets,
        failures: m.failures,
        partial: m.partial,
        wall_time_s: m.wall_time_s,
        raw,
    };
    Ok(Loaded { result, warnings })
}

pub fn load_results(dir: &Path) -> Result<ExperimentResult, PersistError> {
    load_results_checked(dir).map(|l| l.result)
}

/// Recomputes reports and RCIW from the persisted raw data.
pub fn reanalyze(result: &ExperimentResult) -> Option<ExperimentResult> {
    let raw = result.raw.as_ref()?;
    let a = analyze_raw(&result.config, raw);
    let mut out = result.clone();
    out.partial = result.failures.fatal.is_some() || result.failures.failed_instances > 0 || !a.missing_targets.is_empty();
    out.reports = a.reports;
    out.rciw = a.rciw;
    out.missing_targets = a.missing_targets;
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::faults::IssueKind;
    use crate::service::dataset::DatasetConfig;

    fn tiny_micro(dir: &Path) -> ExperimentConfig {
        let mut c = ExperimentConfig::desk(IssueKind::RequestId, 2048, BenchType::Micro);
        c.launcher = LauncherKind::InProcess;
        c.rmit = super::super::config::RmitSettings { instance_runs: 1, suite_runs: 1, iterations: 2, budget_seconds: 0.005 };
        c.dataset = DatasetConfig { airport_count: 5, flight_count: 20, seats_per_flight: 12, user_count: 2, rng_seed: 1 };
        c.stats.bootstrap_iterations = 200;
        c.output_dir = dir.to_path_buf();
        c
    }

    #[test]
    fn micro_experiment_persists_and_round_trips() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = tiny_micro(tmp.path());
        let res = run_experiment(&cfg).unwrap();
        assert_eq!(res.reports.len(), 21);
        assert!(res.missing_targets.is_empty() && !res.partial);
        assert_eq!(res.rciw.len(), 42);
        let dir = cfg.experiment_dir();
        for f in [MANIFEST, REPORTS, RCIW, MICRO_RAW, "plan.jsonl"] {
            assert!(dir.join(f).is_file(), "{f}");
        }
        let loaded = load_results(&dir).unwrap();
        assert_eq!(loaded, res);
        // re-analysis of persisted raw data is identical
        assert_eq!(reanalyze(&loaded).unwrap(), res);
    }

    #[test]
    fn load_errors_and_warnings() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(matches!(load_results(tmp.path()), Err(PersistError::NotFound(_))));

        let cfg = tiny_micro(tmp.path());
        let res = ExperimentResult {
            config: cfg.clone(),
            config_hash: "deadbeef".into(),
            reports: Vec::new(),
            rciw: Vec::new(),
            missing_targets: vec!["E1".into()],
            failures: FailureCounts { fatal: Some("boom".into()), ..Default::default() },
            partial: true,
            wall_time_s: 1.5,
            raw: None,
        };
        persist_results(&res, tmp.path()).unwrap();
        let l = load_results_checked(tmp.path()).unwrap();
        assert_eq!(l.result, res);
        assert_eq!(l.warnings.len(), 1);

        let p = tmp.path().join(MANIFEST);
        let text = std::fs::read_to_string(&p).unwrap().replace("\"schemaVersion\": 1", "\"schemaVersion\": 99");
        std::fs::write(&p, text).unwrap();
        assert!(matches!(load_results(tmp.path()), Err(PersistError::Schema { found: 99 })));
    }

    fn rec(version: &str, endpoint: Endpoint, t: f64, latency_ns: u64) -> RequestRecord {
        RequestRecord { endpoint, version: version.into(), start_time_s: t, latency_ns, status: 200 }
    }

    #[test]
    fn app_analysis_uses_trimmed_per_second_medians() {
        let mut records = Vec::new();
        for sec in 0..30 {
            for k in 0..4 {
                let t = sec as f64 + k as f64 * 0.2;
                for e in Endpoint::ALL {
                    records.push(rec(BASELINE_LABEL, e, t, 1000 + k));
                    // v2 is 2x slower on E2 only
                    let slow = if e == Endpoint::E2 { 2 } else { 1 };
                    records.push(rec(TREATMENT_LABEL, e, t, (1000 + k) * slow));
                }
            }
        }
        // outliers inside warmup must not matter
        records.push(rec(TREATMENT_LABEL, Endpoint::E1, 0.5, 1_000_000));
        let trim = super::super::config::TrimSettings { warmup_s: 5.0, cooldown_s: 5.0 };
        let stats = StatsConfig { bootstrap_iterations: 500, ..Default::default() };
        let a = analyze_app(&records, &trim, &stats, 1);
        assert!(a.missing_targets.is_empty());
        let get = |id: &str| a.reports.iter().find(|r| r.target == id).unwrap().clone();
        assert!((get("E2").r - 2.0).abs() < 1e-12);
        assert_eq!(get("E2").class, stats::ChangeClass::RelevantRegression);
        for id in ["E1", "E3", "E4"] {
            assert_eq!(get(id).class, stats::ChangeClass::NoChange, "{id}");
        }
        // seconds 5..=24 survive: 20 per-second medians per version
        assert_eq!(get("E3").n1, 20);
    }

    #[test]
    fn app_analysis_with_no_window_marks_all_missing() {
        let records = vec![rec(BASELINE_LABEL, Endpoint::E2, 1.0, 5), rec(TREATMENT_LABEL, Endpoint::E2, 1.0, 5)];
        let trim = super::super::config::TrimSettings { warmup_s: 5.0, cooldown_s: 5.0 };
        let a = analyze_app(&records, &trim, &StatsConfig::default(), 1);
        assert_eq!(a.missing_targets.len(), 4);
    }

    #[test]
    fn app_experiment_in_process() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::desk(IssueKind::CleanPath, 2048, BenchType::App);
        cfg.launcher = LauncherKind::InProcess;
        cfg.dataset = DatasetConfig { airport_count: 5, flight_count: 20, seats_per_flight: 60, user_count: 1, rng_seed: 1 };
        cfg.workload = loadgen::WorkloadConfig { s1_vus: 2, s1_iterations_per_vu: 30, s2_vus: 1, s2_iterations_per_vu: 10, rng_seed: 1 };
        cfg.trim = super::super::config::TrimSettings { warmup_s: 0.0, cooldown_s: 0.0 };
        cfg.stats.bootstrap_iterations = 100;
        cfg.output_dir = tmp.path().to_path_buf();
        let res = run_experiment(&cfg).unwrap();
        assert_eq!(res.failures.transport_failures, 0);
        assert!(res.failures.fatal.is_none());
        // every endpoint either reported or listed missing, nothing else
        let mut seen: Vec<String> = res.reports.iter().map(|r| r.target.clone()).chain(res.missing_targets.clone()).collect();
        seen.sort();
        assert_eq!(seen, ["E1", "E2", "E3", "E4"]);
        let raw = load_results(&cfg.experiment_dir()).unwrap().raw.unwrap();
        assert!(matches!(raw, RawData::App { records } if !records.is_empty()));
    }
}
