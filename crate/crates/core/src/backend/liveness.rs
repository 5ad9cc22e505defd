use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::coreir::{Label, Reg, Version};

/// Live-in registers per label.
pub type LiveSets = BTreeMap<Label, BTreeSet<Reg>>;

/// Backward liveness over a version's CFG, solved with a worklist until the
/// least fixed point. A failed `Assume` leaves the function, so only its
/// fall-through edge contributes live-out registers.
pub fn compute_liveness(v: &Version) -> LiveSets {
    let mut preds: BTreeMap<Label, Vec<Label>> = BTreeMap::new();
    for (&l, i) in &v.code {
        for s in i.successors() {
            preds.entry(s).or_default().push(l);
        }
    }

    let mut live: LiveSets = v.code.keys().map(|&l| (l, BTreeSet::new())).collect();
    let mut work: VecDeque<Label> = v.code.keys().rev().copied().collect();
    let mut queued: BTreeSet<Label> = work.iter().copied().collect();

    while let Some(l) = work.pop_front() {
        queued.remove(&l);
        let instr = &v.code[&l];
        let mut new: BTreeSet<Reg> = instr
            .successors()
            .filter_map(|s| live.get(&s))
            .flatten()
            .copied()
            .collect();
        if let Some(d) = instr.def() {
            new.remove(&d);
        }
        new.extend(instr.uses());
        if new != live[&l] {
            live.insert(l, new);
            for &p in preds.get(&l).into_iter().flatten() {
                if queued.insert(p) {
                    work.push_back(p);
                }
            }
        }
    }
    live
}
