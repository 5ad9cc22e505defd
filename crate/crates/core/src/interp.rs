//! The fueled CoreIR interpreter.
//!
//! [`interp_slice`] runs one activation until it reaches a synchronization
//! point (a call, a return or a failed speculation) or runs out of fuel.
//! Calls never nest inside the interpreter: the caller's frame is pushed on
//! the runtime stack and control goes back to the monitor.

use crate::coreir::{eval_expr, FunIdx, Instr, Label, Program, Reg, RegMap, Value, VersionTag};
use crate::fault::Fault;
use crate::primitives::{IrFrame, Runtime};

pub const DEFAULT_FUEL: u64 = 1000;

/// A resumable interpreter position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    pub fun: FunIdx,
    pub tag: VersionTag,
    pub label: Label,
    pub regs: RegMap,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InterpOutcome {
    /// The caller's frame has already been pushed with `push_irsf`.
    SyncCall { callee: FunIdx, args: Vec<Value> },
    SyncReturn(Value),
    SyncDeopt { target: FunIdx, label: Label, regs: RegMap },
    OutOfFuel(Snapshot),
}

fn read(regs: &RegMap, r: Reg) -> Result<Value, Fault> {
    regs.get(&r).copied().ok_or(Fault::UnboundRegister(r))
}

/// Executes at most `fuel` instructions of `at`.
pub fn interp_slice<R: Runtime + ?Sized>(
    p: &Program,
    at: Snapshot,
    fuel: u64,
    rt: &mut R,
) -> Result<InterpOutcome, Fault> {
    let Snapshot { fun, tag, mut label, mut regs } = at;
    let f = p.try_get(fun).ok_or(Fault::UnknownFunIdx(fun.as_value()))?;
    let version = f.version(tag).ok_or_else(|| Fault::UnknownLabel { fun: f.name.clone(), label })?;
    let lookup = |name: &str| p.idx_of(name).ok_or_else(|| Fault::UnknownFunction(name.to_owned()));

    for _ in 0..fuel {
        let instr = version.instr(label).ok_or_else(|| Fault::UnknownLabel { fun: f.name.clone(), label })?;
        match instr {
            Instr::Nop { next } => label = *next,
            Instr::Assign { dst, expr, next } => {
                let v = eval_expr(&regs, expr)?;
                regs.insert(*dst, v);
                label = *next;
            }
            Instr::Cond { reg, ifso, ifnot } => label = if read(&regs, *reg)? != 0 { *ifso } else { *ifnot },
            Instr::Print { reg, next } => {
                rt.print_val(read(&regs, *reg)?);
                label = *next;
            }
            Instr::Call { dst, callee, args, next } => {
                let args = args.iter().map(|&r| read(&regs, r)).collect::<Result<Vec<_>, _>>()?;
                let callee = lookup(callee)?;
                rt.push_irsf(IrFrame { retreg: *dst, fun, tag, resume: *next, regs })?;
                return Ok(InterpOutcome::SyncCall { callee, args });
            }
            Instr::Return { reg } => return Ok(InterpOutcome::SyncReturn(read(&regs, *reg)?)),
            Instr::MemGet { dst, addr, next } => {
                let v = rt.heap_get(read(&regs, *addr)?)?;
                regs.insert(*dst, v);
                label = *next;
            }
            Instr::MemSet { addr, src, next } => {
                let a = read(&regs, *addr)?;
                rt.heap_set(a, read(&regs, *src)?)?;
                label = *next;
            }
            Instr::Assume { guard, target, target_label, varmap, next } => {
                if read(&regs, *guard)? != 0 {
                    label = *next;
                } else {
                    let new = varmap
                        .iter()
                        .map(|(r, e)| Ok((*r, eval_expr(&regs, e)?)))
                        .collect::<Result<RegMap, Fault>>()?;
                    return Ok(InterpOutcome::SyncDeopt { target: lookup(target)?, label: *target_label, regs: new });
                }
            }
        }
    }
    Ok(InterpOutcome::OutOfFuel(Snapshot { fun, tag, label, regs }))
}
