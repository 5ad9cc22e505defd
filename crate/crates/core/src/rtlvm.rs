//! Small-step executor for flat RTL units.
//!
//! This is the default compiled tier. Instructions are pre-decoded and the
//! virtual registers live in a dense vector, which is what makes it faster
//! than the CoreIR interpreter.

use crate::backend::{RtlInstr, RtlUnit, RunEnd};
use crate::coreir::Value;
use crate::fault::Fault;
use crate::primitives::Runtime;

/// Default bound on the total number of RTL steps in one engine run.
pub const DEFAULT_NATIVE_BUDGET: u64 = 100_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RtlState {
    pub pc: usize,
    pub regs: Vec<Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Running,
    Final(Value),
}

/// The state at the unit's entry, all registers zero.
pub fn rtl_start(u: &RtlUnit) -> RtlState {
    RtlState { pc: u.entry(), regs: vec![0; u.nregs() as usize] }
}

/// Executes one instruction.
#[inline]
pub fn rtl_step<R: Runtime + ?Sized>(u: &RtlUnit, s: &mut RtlState, rt: &mut R) -> Result<Step, Fault> {
    match u.code()[s.pc] {
        RtlInstr::Op { dst, expr, next } => {
            let regs = &s.regs;
            s.regs[dst.0 as usize] = expr.eval_with(|r| Ok(regs[r.0 as usize]))?;
            s.pc = next;
        }
        RtlInstr::Goto(next) => s.pc = next,
        RtlInstr::Branch { cond, ifso, ifnot } => s.pc = if s.regs[cond.0 as usize] != 0 { ifso } else { ifnot },
        RtlInstr::CallPrim { dst, prim, next } => {
            let v = prim.exec(&s.regs, rt)?;
            if let Some(d) = dst {
                s.regs[d.0 as usize] = v;
            }
            s.pc = next;
        }
        RtlInstr::ReturnStatus(code) => return Ok(Step::Final(code)),
    }
    Ok(Step::Running)
}

/// Runs `u` from its entry for at most `step_cap` steps. Returns how the run
/// ended and the number of steps taken.
pub fn rtl_run<R: Runtime + ?Sized>(u: &RtlUnit, rt: &mut R, step_cap: u64) -> Result<(RunEnd, u64), Fault> {
    let mut s = rtl_start(u);
    let mut steps = 0;
    while steps < step_cap {
        steps += 1;
        if let Step::Final(code) = rtl_step(u, &mut s, rt)? {
            return Ok((RunEnd::Final(code), steps));
        }
    }
    Ok((RunEnd::StepCap, steps))
}
