use std::time::{Duration, Instant};

use super::{BenchError, BenchTarget};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedRun {
    pub ops: u64,
    /// Time spent inside timed batches only.
    pub elapsed: Duration,
    pub mean_ns: f64,
}

/// Runs `target` in geometrically growing batches until the timed total
/// reaches `budget`. Resets for finite targets happen between batches and
/// are excluded from the measurement.
pub fn run_timed_iteration(target: &mut dyn BenchTarget, budget: Duration) -> Result<TimedRun, BenchError> {
    let mut ops: u64 = 0;
    let mut elapsed = Duration::ZERO;
    let mut batch: u64 = 1;
    let mut resets_without_progress = 0;

    while elapsed < budget {
        let mut n = batch;
        if let Some(cap) = target.remaining_capacity() {
            if cap == 0 {
                resets_without_progress += 1;
                if resets_without_progress > 1 {
                    return Err(BenchError::NoProgress);
                }
                target.reset();
                continue;
            }
            n = n.min(cap);
        }
        resets_without_progress = 0;

        let t0 = Instant::now();
        for _ in 0..n {
            target.run_once()?;
        }
        elapsed += t0.elapsed();
        ops += n;

        let per_op = elapsed.as_secs_f64() / ops as f64;
        let remaining = budget.saturating_sub(elapsed).as_secs_f64();
        let fit = if per_op > 0.0 { (remaining / per_op).ceil() as u64 } else { batch * 2 };
        batch = (batch * 2).min(fit).max(1);
    }

    Ok(TimedRun { ops, elapsed, mean_ns: elapsed.as_nanos() as f64 / ops as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::micro::FnTarget;

    fn spin(d: Duration) {
        let t = Instant::now();
        while t.elapsed() < d {
            std::hint::spin_loop();
        }
    }

    #[test]
    fn spin_wait_mean_within_twenty_percent() {
        let mut t = FnTarget(|| {
            spin(Duration::from_millis(1));
            Ok(())
        });
        let r = run_timed_iteration(&mut t, Duration::from_millis(300)).unwrap();
        let rel = (r.mean_ns - 1e6).abs() / 1e6;
        assert!(rel <= 0.2, "mean {} ns", r.mean_ns);
        assert!(r.elapsed >= Duration::from_millis(300));
        assert!(r.ops >= 200 && r.ops <= 320, "ops {}", r.ops);
    }

    #[test]
    fn overshoot_is_bounded() {
        let mut t = FnTarget(|| {
            spin(Duration::from_micros(50));
            Ok(())
        });
        let budget = Duration::from_millis(200);
        let r = run_timed_iteration(&mut t, budget).unwrap();
        assert!(r.elapsed < budget.mul_f64(1.25), "elapsed {:?}", r.elapsed);
    }

    #[test]
    fn failure_propagates() {
        let mut t = FnTarget(|| Err(BenchError::Target("boom".into())));
        assert_eq!(
            run_timed_iteration(&mut t, Duration::from_millis(10)),
            Err(BenchError::Target("boom".into()))
        );
    }

    struct Finite {
        left: u64,
        cap: u64,
        resets: u32,
    }

    impl BenchTarget for Finite {
        fn run_once(&mut self) -> Result<(), BenchError> {
            if self.left == 0 {
                return Err(BenchError::Exhausted);
            }
            self.left -= 1;
            spin(Duration::from_micros(20));
            Ok(())
        }
        fn remaining_capacity(&self) -> Option<u64> {
            Some(self.left)
        }
        fn reset(&mut self) {
            self.left = self.cap;
            self.resets += 1;
        }
    }

    #[test]
    fn finite_targets_are_reset_between_batches() {
        let mut t = Finite { left: 7, cap: 7, resets: 0 };
        let r = run_timed_iteration(&mut t, Duration::from_millis(20)).unwrap();
        assert!(t.resets > 0);
        assert!(r.ops > 7);
    }

    #[test]
    fn zero_capacity_after_reset_is_an_error() {
        let mut t = Finite { left: 0, cap: 0, resets: 0 };
        assert_eq!(run_timed_iteration(&mut t, Duration::from_millis(5)), Err(BenchError::NoProgress));
    }
}
