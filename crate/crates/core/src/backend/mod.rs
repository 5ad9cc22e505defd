//! The dynamic compiler.
//!
//! A function is split at its call sites ([`split_function`]), its liveness
//! is computed ([`compute_liveness`]), and every segment is lowered to RTL
//! blocks under the stack calling convention ([`gen_segment`]), flattened
//! ([`flatten`]), optionally turned into machine code, and installed.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::coreir::{FunIdx, Program};
use crate::nativegen;
use crate::primitives::{CompiledUnit, Runtime, Tier};

mod liveness;
mod lower;
mod rtl;
mod split;

pub use liveness::{compute_liveness, LiveSets};
pub use lower::{gen_segment, Cancelled, PlantedBug};
pub use rtl::{
    flatten, run_blocks, status_name, Block, BlockId, BlockInstr, Operand, PrimOp, RtlBlockUnit, RtlError,
    RtlInstr, RtlUnit, RunEnd, Terminator, VReg, RETCALL, RETDEOPT, RETRET,
};
pub use split::{split_function, split_version, Segment};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompileOptions {
    pub tier: Tier,
    /// Makes every compilation cancel, to exercise the fallback path.
    pub inject_failure: bool,
    #[doc(hidden)]
    pub planted_bug: Option<PlantedBug>,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions { tier: Tier::Rtl, inject_failure: false, planted_bug: None }
    }
}

/// Everything the compiler produces for one segment.
#[derive(Debug, Clone)]
pub struct SegmentArtifacts {
    pub segment: Segment,
    pub blocks: RtlBlockUnit,
    pub rtl: RtlUnit,
}

/// Generates the RTL for every segment of `fun`'s current version, without
/// touching any runtime.
pub fn compile_segments(p: &Program, fun: FunIdx, bug: Option<PlantedBug>) -> Result<Vec<SegmentArtifacts>, Cancelled> {
    let f = p.try_get(fun).ok_or_else(|| Cancelled(format!("unknown function index {fun}")))?;
    let v = f.current_version();
    let live = compute_liveness(v);
    // Compiled code has no notion of an unbound register, so a function
    // that may read one stays interpreted.
    if let Some(unbound) = live.get(&v.entry).into_iter().flatten().find(|r| !f.params.contains(r)) {
        return Err(Cancelled(format!("{} may read {unbound} before assigning it", f.name)));
    }
    split_function(f)
        .into_iter()
        .map(|segment| {
            let blocks = gen_segment(p, fun, v, &f.params, &segment, &live, bug)?;
            let rtl = flatten(&blocks);
            Ok(SegmentArtifacts { segment, blocks, rtl })
        })
        .collect()
}

/// Compiles `fun` and installs all of its segments, or none of them.
pub fn compile_function<R: Runtime + ?Sized>(
    p: &Program,
    fun: FunIdx,
    rt: &mut R,
    opts: &CompileOptions,
) -> Result<(), Cancelled> {
    if rt.check_installed(fun) {
        return Err(Cancelled("already installed".into()));
    }
    if opts.inject_failure {
        return Err(Cancelled("injected compilation failure".into()));
    }
    let artifacts = compile_segments(p, fun, opts.planted_bug)?;
    let mut units = Vec::with_capacity(artifacts.len());
    for a in artifacts {
        let native = match opts.tier {
            Tier::Rtl => None,
            Tier::Native => {
                let bytes = nativegen::emit_unit(&a.rtl).map_err(|e| Cancelled(e.to_string()))?;
                let handle = nativegen::install_native(&bytes, rt.instance()).map_err(|e| Cancelled(e.to_string()))?;
                Some(Arc::new(handle))
            }
        };
        units.push(CompiledUnit { key: a.rtl.key(), rtl: Arc::new(a.rtl), native });
    }
    for u in &units {
        if rt.load_code(u.key).is_ok() {
            return Err(Cancelled(format!("segment {} already installed", u.key)));
        }
    }
    for u in units {
        rt.install_code(u).map_err(|e| Cancelled(e.to_string()))?;
    }
    Ok(())
}

/// Human-readable compilation report for one function: segments, live sets,
/// block form and flat RTL.
pub fn dump_function(p: &Program, name: &str) -> Result<String, Cancelled> {
    let fun = p.idx_of(name).ok_or_else(|| Cancelled(format!("unknown function {name}")))?;
    let f = p.get(fun);
    let live = compute_liveness(f.current_version());
    let mut out = String::new();
    writeln!(out, "function {name} (index {fun}, {} version)", f.current_tag()).unwrap();
    writeln!(out, "live-in:").unwrap();
    for (l, regs) in &live {
        let regs: Vec<String> = regs.iter().map(ToString::to_string).collect();
        writeln!(out, "  {l}: {{{}}}", regs.join(", ")).unwrap();
    }
    let artifacts = compile_segments(p, fun, None)?;
    for a in &artifacts {
        let labels: Vec<String> = a.segment.labels.iter().map(ToString::to_string).collect();
        writeln!(out, "segment {} root {} labels [{}]", a.rtl.key(), a.segment.root, labels.join(", ")).unwrap();
    }
    for a in &artifacts {
        writeln!(out, "\n# blocks").unwrap();
        write!(out, "{}", a.blocks).unwrap();
        writeln!(out, "# rtl").unwrap();
        write!(out, "{}", a.rtl).unwrap();
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
