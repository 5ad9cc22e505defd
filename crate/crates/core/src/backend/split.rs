use std::collections::BTreeSet;

use crate::coreir::{Instr, Label, Version};
use crate::primitives::SegmentKey;

/// A piece of a function between synchronization points: everything
/// reachable from `root` without crossing a call. Calls are included as the
/// segment's exits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub key: SegmentKey,
    pub root: Label,
    pub labels: BTreeSet<Label>,
}

fn reach(v: &Version, root: Label) -> BTreeSet<Label> {
    let mut seen = BTreeSet::new();
    let mut stack = vec![root];
    while let Some(l) = stack.pop() {
        let Some(i) = v.code.get(&l) else { continue };
        if !seen.insert(l) {
            continue;
        }
        if !matches!(i, Instr::Call { .. }) {
            stack.extend(i.successors());
        }
    }
    seen
}

/// Splits a version at its call sites: one entry segment, plus one
/// continuation segment per `Call`, rooted at the call's successor.
pub fn split_version(v: &Version) -> Vec<Segment> {
    let mut out = vec![Segment { key: SegmentKey::Entry, root: v.entry, labels: reach(v, v.entry) }];
    for (&l, i) in &v.code {
        if let Instr::Call { next, .. } = i {
            out.push(Segment { key: SegmentKey::Cont(l), root: *next, labels: reach(v, *next) });
        }
    }
    out
}

/// Splits the version new activations of `f` run.
pub fn split_function(f: &crate::coreir::Function) -> Vec<Segment> {
    split_version(f.current_version())
}
