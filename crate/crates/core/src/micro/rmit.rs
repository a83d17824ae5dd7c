use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RmitConfig {
    pub instance_runs: u32,
    pub suite_runs: u32,
    /// Consecutive timed iterations per version per benchmark.
    pub iterations: u32,
}

impl RmitConfig {
    /// Three instance runs, three suite runs, five iterations.
    pub const FULL: RmitConfig = RmitConfig { instance_runs: 3, suite_runs: 3, iterations: 5 };

    pub fn validate(&self) -> Result<(), RmitError> {
        if self.instance_runs == 0 || self.suite_runs == 0 || self.iterations == 0 {
            return Err(RmitError::ZeroCount);
        }
        Ok(())
    }

    pub fn samples_per_version(&self) -> u32 {
        self.instance_runs * self.suite_runs * self.iterations
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RmitError {
    #[error("instance runs, suite runs and iterations must all be at least 1")]
    ZeroCount,
    #[error("benchmark list is empty")]
    NoBenchmarks,
    #[error("duplicate benchmark id {0}")]
    DuplicateBenchmark(String),
    #[error("the two versions need distinct labels")]
    SameVersions,
}

/// One timed iteration of one benchmark on one version.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Slot {
    pub instance_run: u32,
    pub suite_run: u32,
    pub bench_id: String,
    pub version: String,
    pub iteration: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RmitPlan {
    pub config: RmitConfig,
    pub seed: u64,
    pub versions: [String; 2],
    pub slots: Vec<Slot>,
}

impl RmitPlan {
    pub fn instance_slots(&self, instance_run: u32) -> impl Iterator<Item = &Slot> {
        self.slots.iter().filter(move |s| s.instance_run == instance_run)
    }
}

/// Per instance run and suite run, benchmark order is shuffled; per
/// benchmark, the order of the two versions is a coin flip and each
/// version then gets `iterations` consecutive slots.
pub fn build_rmit_plan(
    bench_ids: &[String],
    versions: [&str; 2],
    config: RmitConfig,
    seed: u64,
) -> Result<RmitPlan, RmitError> {
    config.validate()?;
    if bench_ids.is_empty() {
        return Err(RmitError::NoBenchmarks);
    }
    let mut seen = std::collections::HashSet::new();
    for id in bench_ids {
        if !seen.insert(id) {
            return Err(RmitError::DuplicateBenchmark(id.clone()));
        }
    }
    if versions[0] == versions[1] {
        return Err(RmitError::SameVersions);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut slots = Vec::with_capacity(
        bench_ids.len() * 2 * config.samples_per_version() as usize,
    );
    for instance_run in 0..config.instance_runs {
        for suite_run in 0..config.suite_runs {
            let mut order: Vec<&String> = bench_ids.iter().collect();
            order.shuffle(&mut rng);
            for id in order {
                let mut vs = versions;
                if rng.random_bool(0.5) {
                    vs.swap(0, 1);
                }
                for v in vs {
                    for iteration in 0..config.iterations {
                        slots.push(Slot {
                            instance_run,
                            suite_run,
                            bench_id: id.clone(),
                            version: v.to_string(),
                            iteration,
                        });
                    }
                }
            }
        }
    }
    Ok(RmitPlan { config, seed, versions: versions.map(str::to_string), slots })
}
