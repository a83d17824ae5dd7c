//! Change detection between a baseline (`v1`) and a treatment (`v2`).
//!
//! The effect size is the median ratio `r = median(v2) / median(v1)`. A
//! percentile-bootstrap confidence interval around `r` decides whether the
//! change is statistically distinguishable from `r = 1`; the magnitude of
//! `r - 1` then separates small from relevant changes.

pub mod matrix;

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use matrix::{build_detection_matrix, Cell, DetectionMatrix};

pub const DEFAULT_BOOTSTRAP_ITERATIONS: usize = 10_000;
pub const DEFAULT_CONFIDENCE_LEVEL: f64 = 0.99;
pub const DEFAULT_SMALL_THRESHOLD: f64 = 0.03;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("sample set is empty")]
    Empty,
    #[error("samples must be finite and positive, found {0}")]
    NonPositive(f64),
    #[error("median is zero")]
    ZeroMedian,
    #[error("confidence level {0} outside (0, 1)")]
    InvalidLevel(f64),
    #[error("bootstrap needs at least one iteration")]
    NoIterations,
    #[error("trimming window [{lo}, {hi}] removed all records")]
    EmptyWindow { lo: f64, hi: f64 },
    #[error("duplicate detection cell {0}")]
    DuplicateCell(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    #[serde(rename = "ciLo")]
    pub lo: f64,
    #[serde(rename = "ciHi")]
    pub hi: f64,
    pub level: f64,
    pub iterations: usize,
}

impl ConfidenceInterval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChangeClass {
    NoChange,
    SmallRegression,
    RelevantRegression,
    SmallImprovement,
    RelevantImprovement,
}

impl ChangeClass {
    pub const ALL: [ChangeClass; 5] = [
        ChangeClass::NoChange,
        ChangeClass::SmallRegression,
        ChangeClass::RelevantRegression,
        ChangeClass::SmallImprovement,
        ChangeClass::RelevantImprovement,
    ];

    pub fn is_change(self) -> bool {
        self != ChangeClass::NoChange
    }

    pub fn is_relevant(self) -> bool {
        matches!(self, ChangeClass::RelevantRegression | ChangeClass::RelevantImprovement)
    }

    pub fn description(self) -> &'static str {
        match self {
            ChangeClass::NoChange => "no performance change",
            ChangeClass::SmallRegression => "<=3% performance regression (small)",
            ChangeClass::RelevantRegression => ">3% performance regression (relevant)",
            ChangeClass::SmallImprovement => "<=3% performance improvement (small)",
            ChangeClass::RelevantImprovement => ">3% performance improvement (relevant)",
        }
    }
}

/// Bootstrap and classification parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StatsConfig {
    pub bootstrap_iterations: usize,
    pub level: f64,
    pub small_threshold: f64,
}

impl Default for StatsConfig {
    fn default() -> Self {
        Self {
            bootstrap_iterations: DEFAULT_BOOTSTRAP_ITERATIONS,
            level: DEFAULT_CONFIDENCE_LEVEL,
            small_threshold: DEFAULT_SMALL_THRESHOLD,
        }
    }
}

impl StatsConfig {
    pub fn validate(&self) -> Result<(), StatsError> {
        if self.bootstrap_iterations == 0 {
            return Err(StatsError::NoIterations);
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(StatsError::InvalidLevel(self.level));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeReport {
    pub target: String,
    pub r: f64,
    #[serde(flatten)]
    pub ci: ConfidenceInterval,
    pub class: ChangeClass,
    pub n1: usize,
    pub n2: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RciwStat {
    pub target: String,
    pub version: String,
    pub rciw: f64,
    pub median: f64,
    #[serde(flatten)]
    pub ci: ConfidenceInterval,
}

// ---------------------------------------------------------------------------
// Order statistics

/// Median with the midpoint convention for even lengths. Reorders `xs`.
fn median_in_place(xs: &mut [f64]) -> f64 {
    let n = xs.len();
    let mid = n / 2;
    let (lower, m, _) = xs.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *m;
    if n % 2 == 1 {
        upper
    } else {
        let below = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (below + upper) / 2.0
    }
}

pub fn median(xs: &[f64]) -> Result<f64, StatsError> {
    if xs.is_empty() {
        return Err(StatsError::Empty);
    }
    Ok(median_in_place(&mut xs.to_vec()))
}

/// Type-7 (linear interpolation) quantile of ascending `sorted`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

fn check_positive(xs: &[f64]) -> Result<(), StatsError> {
    if xs.is_empty() {
        return Err(StatsError::Empty);
    }
    match xs.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        Some(bad) => Err(StatsError::NonPositive(*bad)),
        None => Ok(()),
    }
}

fn check_level(level: f64, iterations: usize) -> Result<(), StatsError> {
    StatsConfig {
        bootstrap_iterations: iterations,
        level,
        small_threshold: DEFAULT_SMALL_THRESHOLD,
    }
    .validate()
}

/// `median(v2) / median(v1)`.
pub fn median_ratio(v1: &[f64], v2: &[f64]) -> Result<f64, StatsError> {
    check_positive(v1)?;
    check_positive(v2)?;
    Ok(median(v2)? / median(v1)?)
}

fn resample_median<R: Rng + ?Sized>(src: &[f64], buf: &mut [f64], rng: &mut R) -> f64 {
    for slot in buf.iter_mut() {
        *slot = src[rng.random_range(0..src.len())];
    }
    median_in_place(buf)
}

fn percentile_interval(mut dist: Vec<f64>, level: f64) -> ConfidenceInterval {
    dist.sort_unstable_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    ConfidenceInterval {
        lo: quantile_sorted(&dist, tail),
        hi: quantile_sorted(&dist, 1.0 - tail),
        level,
        iterations: dist.len(),
    }
}

/// Percentile bootstrap CI of the median ratio. Both samples are resampled
/// independently with replacement at their original sizes.
pub fn bootstrap_ci_median_ratio<R: Rng + ?Sized>(
    v1: &[f64],
    v2: &[f64],
    iterations: usize,
    level: f64,
    rng: &mut R,
) -> Result<ConfidenceInterval, StatsError> {
    check_positive(v1)?;
    check_positive(v2)?;
    check_level(level, iterations)?;
    let mut b1 = vec![0.0; v1.len()];
    let mut b2 = vec![0.0; v2.len()];
    let dist: Vec<f64> = (0..iterations)
        .map(|_| {
            let m1 = resample_median(v1, &mut b1, rng);
            let m2 = resample_median(v2, &mut b2, rng);
            m2 / m1
        })
        .collect();
    Ok(percentile_interval(dist, level))
}

/// Five-way classification. A CI that contains 1 means no detectable
/// change; otherwise the side of 1 gives the direction and `|r - 1|`
/// compared against `small_threshold` (inclusive) gives the magnitude.
pub fn classify_change(r: f64, ci: &ConfidenceInterval, small_threshold: f64) -> ChangeClass {
    if ci.contains(1.0) {
        return ChangeClass::NoChange;
    }
    let regression = if r != 1.0 { r > 1.0 } else { ci.lo > 1.0 };
    // Tolerance keeps values like 1.03 inside an inclusive 0.03 band.
    let relevant = (r - 1.0).abs() > small_threshold + 1e-12;
    match (regression, relevant) {
        (true, true) => ChangeClass::RelevantRegression,
        (true, false) => ChangeClass::SmallRegression,
        (false, true) => ChangeClass::RelevantImprovement,
        (false, false) => ChangeClass::SmallImprovement,
    }
}

/// Median ratio, bootstrap CI and classification for one target.
pub fn analyze_target<R: Rng + ?Sized>(
    target: &str,
    v1: &[f64],
    v2: &[f64],
    cfg: &StatsConfig,
    rng: &mut R,
) -> Result<ChangeReport, StatsError> {
    cfg.validate()?;
    let r = median_ratio(v1, v2)?;
    let ci = bootstrap_ci_median_ratio(v1, v2, cfg.bootstrap_iterations, cfg.level, rng)?;
    Ok(ChangeReport {
        target: target.to_string(),
        r,
        ci,
        class: classify_change(r, &ci, cfg.small_threshold),
        n1: v1.len(),
        n2: v2.len(),
    })
}

/// Bootstrap CI of the median and its width relative to the sample median.
pub fn compute_rciw<R: Rng + ?Sized>(
    target: &str,
    version: &str,
    samples: &[f64],
    iterations: usize,
    level: f64,
    rng: &mut R,
) -> Result<RciwStat, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::Empty);
    }
    if let Some(bad) = samples.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(StatsError::NonPositive(*bad));
    }
    check_level(level, iterations)?;
    let med = median(samples)?;
    if med == 0.0 {
        return Err(StatsError::ZeroMedian);
    }
    let mut buf = vec![0.0; samples.len()];
    let dist: Vec<f64> = (0..iterations).map(|_| resample_median(samples, &mut buf, rng)).collect();
    let ci = percentile_interval(dist, level);
    Ok(RciwStat {
        target: target.to_string(),
        version: version.to_string(),
        rciw: ci.width() / med,
        median: med,
        ci,
    })
}

// ---------------------------------------------------------------------------
// Application-benchmark preprocessing

/// Anything with a start time in seconds since experiment start.
pub trait Timed {
    fn start_time_s(&self) -> f64;
}

impl Timed for (f64, f64) {
    fn start_time_s(&self) -> f64 {
        self.0
    }
}

/// Keeps records with `warmup <= t <= first_finish - cooldown`, where
/// `first_finish` is the earliest last-start-time across versions. The same
/// window applies to every version.
pub fn trim_records<T: Timed + Clone>(
    per_version: &[Vec<T>],
    warmup_s: f64,
    cooldown_s: f64,
) -> Result<Vec<Vec<T>>, StatsError> {
    let first_finish = per_version
        .iter()
        .filter_map(|recs| recs.iter().map(Timed::start_time_s).max_by(f64::total_cmp))
        .min_by(f64::total_cmp)
        .ok_or(StatsError::Empty)?;
    let (lo, hi) = (warmup_s, first_finish - cooldown_s);
    let trimmed: Vec<Vec<T>> = per_version
        .iter()
        .map(|recs| {
            recs.iter()
                .filter(|r| {
                    let t = r.start_time_s();
                    t >= lo && t <= hi
                })
                .cloned()
                .collect()
        })
        .collect();
    if trimmed.iter().any(Vec::is_empty) {
        return Err(StatsError::EmptyWindow { lo, hi });
    }
    Ok(trimmed)
}

/// Median latency per whole second of start time; empty seconds are skipped.
pub fn per_second_medians(records: &[(f64, f64)]) -> Vec<(u64, f64)> {
    let mut buckets: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for &(t, latency) in records {
        buckets.entry(t.max(0.0).floor() as u64).or_default().push(latency);
    }
    buckets
        .into_iter()
        .map(|(sec, mut lats)| (sec, median_in_place(&mut lats)))
        .collect()
}
