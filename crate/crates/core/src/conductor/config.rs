use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::faults::{IssueConfig, IssueKind};
use crate::loadgen::{DuetOptions, WorkloadConfig};
use crate::micro::RmitConfig;
use crate::service::dataset::DatasetConfig;
use crate::stats::StatsConfig;

pub const MAX_SEVERITY: u32 = 2048;

/// `0` plus every power of two up to [`MAX_SEVERITY`]: 13 levels.
pub fn default_levels() -> Vec<u32> {
    std::iter::once(0).chain((0..=11).map(|k| 1u32 << k)).collect()
}

pub fn in_sweep_domain(severity: u32) -> bool {
    severity == 0 || (severity.is_power_of_two() && severity <= MAX_SEVERITY)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BenchType {
    Micro,
    App,
}

impl fmt::Display for BenchType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BenchType::Micro => "micro",
            BenchType::App => "app",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Desk,
    Full,
}

impl FromStr for Profile {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "desk" => Ok(Profile::Desk),
            "full" => Ok(Profile::Full),
            other => Err(format!("unknown profile {other}")),
        }
    }
}

/// Where microbenchmark instances and service versions run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum LauncherKind {
    /// Fresh child processes of the `perflab` binary.
    Subprocess,
    /// Threads of the current process.
    InProcess,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RmitSettings {
    pub instance_runs: u32,
    pub suite_runs: u32,
    pub iterations: u32,
    pub budget_seconds: f64,
}

impl RmitSettings {
    pub fn plan_config(&self) -> RmitConfig {
        RmitConfig { instance_runs: self.instance_runs, suite_runs: self.suite_runs, iterations: self.iterations }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrimSettings {
    pub warmup_s: f64,
    pub cooldown_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExperimentConfig {
    pub issue: IssueKind,
    pub severity: u32,
    pub bench_type: BenchType,
    pub rmit: RmitSettings,
    pub workload: WorkloadConfig,
    pub trim: TrimSettings,
    pub stats: StatsConfig,
    pub dataset: DatasetConfig,
    pub duet: DuetOptions,
    pub launcher: LauncherKind,
    pub rng_seed: u64,
    pub output_dir: PathBuf,
    /// Binary used by the subprocess launcher; defaults to the current executable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub executable: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("issue kind must be one of the injected issues, not none")]
    NoIssue,
    #[error("severity {0} is not 0 or a power of two up to {MAX_SEVERITY}")]
    Severity(u32),
    #[error("rmit: {0}")]
    Rmit(String),
    #[error("workload: {0}")]
    Workload(String),
    #[error("trim windows must be finite and non-negative")]
    Trim,
    #[error("stats: {0}")]
    Stats(String),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("levels must be non-empty and strictly ascending")]
    Levels,
}

impl ExperimentConfig {
    /// Desk scale fits a single machine. The RMIT part follows
    /// 2 instance runs x 2 suite runs x 3 iterations at 0.2 s. The workload
    /// is sized so that a run lasts tens of seconds, long enough for the
    /// 5 s trims to leave a usable window.
    pub fn desk(issue: IssueKind, severity: u32, bench_type: BenchType) -> Self {
        Self {
            issue,
            severity,
            bench_type,
            rmit: RmitSettings { instance_runs: 2, suite_runs: 2, iterations: 3, budget_seconds: 0.2 },
            workload: WorkloadConfig {
                s1_vus: 5,
                s1_iterations_per_vu: 5000,
                s2_vus: 2,
                s2_iterations_per_vu: 2000,
                rng_seed: 1,
            },
            trim: TrimSettings { warmup_s: 5.0, cooldown_s: 5.0 },
            stats: StatsConfig::default(),
            dataset: DatasetConfig::default(),
            duet: DuetOptions { stop_when_first_finishes: true },
            launcher: LauncherKind::Subprocess,
            rng_seed: 1,
            output_dir: PathBuf::from("results"),
            executable: None,
        }
    }

    /// 3 x 3 x 5 RMIT at 1 s; 50 x 2000 searches and 10 x 380 bookings;
    /// 60 s trims.
    pub fn full(issue: IssueKind, severity: u32, bench_type: BenchType) -> Self {
        Self {
            rmit: RmitSettings { instance_runs: 3, suite_runs: 3, iterations: 5, budget_seconds: 1.0 },
            workload: WorkloadConfig::FULL,
            trim: TrimSettings { warmup_s: 60.0, cooldown_s: 60.0 },
            duet: DuetOptions::default(),
            ..Self::desk(issue, severity, bench_type)
        }
    }

    pub fn profile(profile: Profile, issue: IssueKind, severity: u32, bench_type: BenchType) -> Self {
        match profile {
            Profile::Desk => Self::desk(issue, severity, bench_type),
            Profile::Full => Self::full(issue, severity, bench_type),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.issue == IssueKind::None {
            return Err(ConfigError::NoIssue);
        }
        if !in_sweep_domain(self.severity) {
            return Err(ConfigError::Severity(self.severity));
        }
        self.rmit.plan_config().validate().map_err(|e| ConfigError::Rmit(e.to_string()))?;
        if !(self.rmit.budget_seconds.is_finite() && self.rmit.budget_seconds > 0.0) {
            return Err(ConfigError::Rmit("budget must be positive".into()));
        }
        self.workload.validate().map_err(|e| ConfigError::Workload(e.to_string()))?;
        let t = self.trim;
        if !(t.warmup_s.is_finite() && t.cooldown_s.is_finite() && t.warmup_s >= 0.0 && t.cooldown_s >= 0.0) {
            return Err(ConfigError::Trim);
        }
        self.stats.validate().map_err(|e| ConfigError::Stats(e.to_string()))?;
        self.dataset.validate().map_err(|e| ConfigError::Dataset(e.to_string()))?;
        Ok(())
    }

    /// Baseline without any issue.
    pub fn baseline(&self) -> IssueConfig {
        IssueConfig::NONE
    }

    /// The version under test. At severity 0 this is the A/A twin.
    pub fn treatment(&self) -> IssueConfig {
        IssueConfig::new(self.issue, self.severity)
    }

    pub fn name(&self) -> String {
        format!("{}-{}-s{}", self.bench_type, self.issue, self.severity)
    }

    pub fn experiment_dir(&self) -> PathBuf {
        self.output_dir.join(self.name())
    }

    /// Hash over everything that affects results. Paths are excluded.
    pub fn config_hash(&self) -> String {
        let mut echo = self.clone();
        echo.output_dir = PathBuf::new();
        echo.executable = None;
        let json = serde_json::to_vec(&echo).expect("config serializes");
        hex::encode(&Sha256::digest(&json)[..16])
    }
}
