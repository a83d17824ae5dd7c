use serde::{Deserialize, Serialize};

use super::config::{ConfigError, ExperimentConfig};
use super::experiment::{expected_targets, run_experiment, ExperimentResult};
use crate::stats::matrix::DetectionMatrix;

/// Per-level outcome of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SweepLevel {
    pub severity: u32,
    pub complete: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub matrix: DetectionMatrix,
    pub levels: Vec<SweepLevel>,
    pub results: Vec<ExperimentResult>,
}

impl SweepOutcome {
    pub fn complete(&self) -> bool {
        self.levels.iter().all(|l| l.complete)
    }
}

pub fn validate_levels(levels: &[u32]) -> Result<(), ConfigError> {
    if levels.is_empty() || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ConfigError::Levels);
    }
    Ok(())
}

/// Runs `base` once per severity level. Failed experiments and missing
/// targets become absent cells; the sweep always continues.
pub fn run_severity_sweep(base: &ExperimentConfig, levels: &[u32]) -> Result<SweepOutcome, ConfigError> {
    validate_levels(levels)?;
    for &s in levels {
        ExperimentConfig { severity: s, ..base.clone() }.validate()?;
    }
    let targets = expected_targets(base.bench_type);
    let mut matrix = DetectionMatrix::new();
    let mut outcome_levels = Vec::new();
    let mut results = Vec::new();
    for &severity in levels {
        let cfg = ExperimentConfig { severity, ..base.clone() };
        let (reported, error) = match run_experiment(&cfg) {
            Ok(res) => {
                let error = res.failures.fatal.clone();
                let reported = res.reports.clone();
                let complete = !res.partial;
                outcome_levels.push(SweepLevel { severity, complete, error: error.clone() });
                results.push(res);
                (reported, error)
            }
            Err(e) => {
                tracing::warn!(severity, "experiment failed: {e}");
                outcome_levels.push(SweepLevel { severity, complete: false, error: Some(e.to_string()) });
                (Vec::new(), Some(e.to_string()))
            }
        };
        if let Some(e) = error {
            tracing::warn!(severity, "experiment incomplete: {e}");
        }
        for t in &targets {
            let inserted = match reported.iter().find(|r| &r.target == t) {
                Some(r) => matrix.insert_report(base.issue, severity, r),
                None => matrix.mark_absent(base.issue, severity, t),
            };
            inserted.expect("one cell per level and target");
        }
    }
    Ok(SweepOutcome { matrix, levels: outcome_levels, results })
}
