//! Wall-clock comparison of interpreter-only runs against JIT runs.

use std::time::{Duration, Instant};

use crate::behavior::Behavior;
use crate::coreir::Program;
use crate::monitor::{jit_run, Config, Hotness};

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub interp: Duration,
    pub jit: Duration,
    pub behavior: Behavior,
}

impl BenchReport {
    /// Interpreter time over JIT time.
    pub fn ratio(&self) -> f64 {
        self.interp.as_secs_f64() / self.jit.as_secs_f64().max(1e-9)
    }
}

/// Median wall time of `reps` runs, and the behavior of the last one.
pub fn median_time(p: &Program, cfg: Config, reps: usize) -> (Duration, Behavior) {
    let mut times = Vec::with_capacity(reps.max(1));
    let mut last = None;
    for _ in 0..reps.max(1) {
        let t = Instant::now();
        last = Some(jit_run(p, cfg));
        times.push(t.elapsed());
    }
    times.sort();
    (times[times.len() / 2], last.unwrap())
}

/// Times `p` with compilation disabled and then under `cfg`.
pub fn bench(p: &Program, cfg: Config, reps: usize) -> BenchReport {
    let (interp, _) = median_time(p, Config { hotness: Hotness::Never, ..cfg }, reps);
    let (jit, behavior) = median_time(p, cfg, reps);
    BenchReport { interp, jit, behavior }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coreir::parse_program;

    #[test]
    fn reports_both_timings() {
        let p = parse_program("Function main(): l1: r1 <- 3 l2 l2: Print r1 l3 l3: Return r1").unwrap();
        let r = bench(&p, Config::default(), 3);
        assert_eq!(r.behavior.trace, vec![3]);
        assert!(r.ratio() > 0.0);
    }
}
