use std::collections::{HashMap, HashSet};

use crate::coreir::FunIdx;

/// Decides which functions are worth compiling. Any heuristic is sound: it
/// can only change when code gets compiled, never what the program does.
pub trait Heuristic: Send + Sync {
    fn hot(&self, fun: FunIdx, calls: u64) -> bool;
}

/// Compile a function once it has been called at least this many times.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Threshold(pub u64);

impl Heuristic for Threshold {
    fn hot(&self, _fun: FunIdx, calls: u64) -> bool {
        calls >= self.0
    }
}

/// Never compile anything.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Never;

impl Heuristic for Never {
    fn hot(&self, _fun: FunIdx, _calls: u64) -> bool {
        false
    }
}

/// Call counts and the list of functions whose compilation failed.
pub struct Profiler {
    counts: HashMap<FunIdx, u64>,
    heuristic: Box<dyn Heuristic>,
    do_not_compile: HashSet<FunIdx>,
}

impl Profiler {
    pub fn new(heuristic: Box<dyn Heuristic>) -> Self {
        Profiler { counts: HashMap::new(), heuristic, do_not_compile: HashSet::new() }
    }

    pub fn observe(&mut self, fun: FunIdx) {
        *self.counts.entry(fun).or_insert(0) += 1;
    }

    pub fn count(&self, fun: FunIdx) -> u64 {
        self.counts.get(&fun).copied().unwrap_or(0)
    }

    /// Whether `fun` should be compiled now.
    pub fn suggest(&self, fun: FunIdx, installed: bool) -> bool {
        !installed && !self.do_not_compile.contains(&fun) && self.heuristic.hot(fun, self.count(fun))
    }

    pub fn forbid(&mut self, fun: FunIdx) {
        self.do_not_compile.insert(fun);
    }

    pub fn is_forbidden(&self, fun: FunIdx) -> bool {
        self.do_not_compile.contains(&fun)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_calls() {
        let mut p = Profiler::new(Box::new(Threshold(2)));
        let (f, g) = (FunIdx(1), FunIdx(2));
        p.observe(f);
        assert_eq!(p.count(f), 1);
        assert!(!p.suggest(f, false));
        p.observe(f);
        assert_eq!(p.count(f), 2);
        assert!(p.suggest(f, false));
        assert!(!p.suggest(f, true), "installed functions are not recompiled");
        assert_eq!(p.count(g), 0);
        p.forbid(f);
        assert!(!p.suggest(f, false));
    }

    #[test]
    fn never_compiles() {
        let mut p = Profiler::new(Box::new(Never));
        for _ in 0..100 {
            p.observe(FunIdx(1));
        }
        assert!(!p.suggest(FunIdx(1), false));
    }
}
