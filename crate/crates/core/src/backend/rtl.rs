//! RTL: the register-transfer language compiled segments are expressed in.
//!
//! [`RtlBlockUnit`] groups straight-line code into basic blocks, one per
//! CoreIR instruction; [`flatten`] unfolds it into [`RtlUnit`], where every
//! instruction carries its own successor. Only five primitives are callable
//! from RTL: `Pop`, `Push`, `HeapGet`, `HeapSet` and `Print`.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::coreir::{Expr, Label, Value};
use crate::fault::Fault;
use crate::primitives::{CodeKey, Runtime};

/// Status returned to the monitor when a unit finished normally.
pub const RETRET: Value = 0;
/// Status returned when a unit wants to call another function.
pub const RETCALL: Value = 1;
/// Status returned when a speculation failed.
pub const RETDEOPT: Value = 2;

pub fn status_name(code: Value) -> Option<&'static str> {
    match code {
        RETRET => Some("RETRET"),
        RETCALL => Some("RETCALL"),
        RETDEOPT => Some("RETDEOPT"),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VReg(pub u32);

impl fmt::Display for VReg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Operand {
    Reg(VReg),
    Imm(Value),
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Reg(r) => write!(f, "{r}"),
            Operand::Imm(v) => write!(f, "{v}"),
        }
    }
}

/// A primitive call with its arguments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PrimOp {
    Pop,
    Push(Operand),
    HeapGet(VReg),
    /// Address, value.
    HeapSet(VReg, VReg),
    Print(VReg),
}

impl PrimOp {
    pub fn name(&self) -> &'static str {
        match self {
            PrimOp::Pop => "Pop",
            PrimOp::Push(_) => "Push",
            PrimOp::HeapGet(_) => "HeapGet",
            PrimOp::HeapSet(..) => "HeapSet",
            PrimOp::Print(_) => "Print",
        }
    }

    fn regs(&self) -> impl Iterator<Item = VReg> {
        let (a, b) = match *self {
            PrimOp::Pop | PrimOp::Push(Operand::Imm(_)) => (None, None),
            PrimOp::Push(Operand::Reg(r)) | PrimOp::HeapGet(r) | PrimOp::Print(r) => (Some(r), None),
            PrimOp::HeapSet(a, b) => (Some(a), Some(b)),
        };
        a.into_iter().chain(b)
    }

    /// Performs the primitive. Returns the value written to the destination
    /// register, `0` for primitives without a result.
    #[inline]
    pub fn exec<R: Runtime + ?Sized>(&self, regs: &[Value], rt: &mut R) -> Result<Value, Fault> {
        let get = |r: VReg| regs[r.0 as usize];
        match *self {
            PrimOp::Pop => rt.pop(),
            PrimOp::Push(Operand::Reg(r)) => rt.push(get(r)).map(|_| 0),
            PrimOp::Push(Operand::Imm(v)) => rt.push(v).map(|_| 0),
            PrimOp::HeapGet(a) => rt.heap_get(get(a)),
            PrimOp::HeapSet(a, v) => rt.heap_set(get(a), get(v)).map(|_| 0),
            PrimOp::Print(r) => {
                rt.print_val(get(r));
                Ok(0)
            }
        }
    }
}

impl fmt::Display for PrimOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PrimOp::Pop => write!(f, "\"Pop\"()"),
            PrimOp::Push(o) => write!(f, "\"Push\"({o})"),
            PrimOp::HeapGet(a) => write!(f, "\"HeapGet\"({a})"),
            PrimOp::HeapSet(a, v) => write!(f, "\"HeapSet\"({a}, {v})"),
            PrimOp::Print(r) => write!(f, "\"Print\"({r})"),
        }
    }
}

fn fmt_status(f: &mut fmt::Formatter<'_>, code: Value) -> fmt::Result {
    match status_name(code) {
        Some(n) => write!(f, "return {n}"),
        None => write!(f, "return {code}"),
    }
}

// ---------------------------------------------------------------------------
// Block form

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BlockId {
    Prologue,
    At(Label),
    /// Deoptimization exit of the `Assume` at this label.
    Deopt(Label),
}

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockId::Prologue => f.write_str("prologue"),
            BlockId::At(l) => write!(f, "{l}"),
            BlockId::Deopt(l) => write!(f, "deopt.{l}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockInstr {
    Op { dst: VReg, expr: Expr<VReg> },
    CallPrim { dst: Option<VReg>, prim: PrimOp },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Terminator {
    Goto(BlockId),
    Branch { cond: VReg, ifso: BlockId, ifnot: BlockId },
    ReturnStatus(Value),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub body: Vec<BlockInstr>,
    pub term: Terminator,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RtlBlockUnit {
    pub key: CodeKey,
    pub entry: BlockId,
    pub blocks: BTreeMap<BlockId, Block>,
    pub nregs: u32,
}

impl fmt::Display for BlockInstr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockInstr::Op { dst, expr } => write!(f, "{dst} = {expr}"),
            BlockInstr::CallPrim { dst: Some(d), prim } => write!(f, "{d} = {prim}"),
            BlockInstr::CallPrim { dst: None, prim } => write!(f, "{prim}"),
        }
    }
}

impl fmt::Display for RtlBlockUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}() {{", self.key)?;
        for (id, b) in &self.blocks {
            writeln!(f, " {id}:")?;
            for i in &b.body {
                writeln!(f, "  {i}")?;
            }
            match b.term {
                Terminator::Goto(t) => writeln!(f, "  goto {t}")?,
                Terminator::Branch { cond, ifso, ifnot } => writeln!(f, "  if ({cond} != 0) goto {ifso} else goto {ifnot}")?,
                Terminator::ReturnStatus(c) => {
                    f.write_str("  ")?;
                    fmt_status(f, c)?;
                    writeln!(f)?;
                }
            }
        }
        writeln!(f, "}}")
    }
}

/// Outcome of running a unit to a bounded number of steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunEnd {
    Final(Value),
    StepCap,
}

/// Direct evaluator for block units. Used as the oracle for [`flatten`].
pub fn run_blocks<R: Runtime + ?Sized>(u: &RtlBlockUnit, rt: &mut R, step_cap: u64) -> Result<RunEnd, Fault> {
    let mut regs = vec![0; u.nregs as usize];
    let mut at = u.entry;
    let mut steps = 0;
    loop {
        let b = &u.blocks[&at];
        for i in &b.body {
            if steps == step_cap {
                return Ok(RunEnd::StepCap);
            }
            steps += 1;
            match i {
                BlockInstr::Op { dst, expr } => {
                    regs[dst.0 as usize] = expr.eval_with(|r| Ok(regs[r.0 as usize]))?;
                }
                BlockInstr::CallPrim { dst, prim } => {
                    let v = prim.exec(&regs, rt)?;
                    if let Some(d) = dst {
                        regs[d.0 as usize] = v;
                    }
                }
            }
        }
        if steps == step_cap {
            return Ok(RunEnd::StepCap);
        }
        steps += 1;
        match b.term {
            Terminator::Goto(t) => at = t,
            Terminator::Branch { cond, ifso, ifnot } => at = if regs[cond.0 as usize] != 0 { ifso } else { ifnot },
            Terminator::ReturnStatus(c) => return Ok(RunEnd::Final(c)),
        }
    }
}

// ---------------------------------------------------------------------------
// Flat form

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RtlInstr {
    Op { dst: VReg, expr: Expr<VReg>, next: usize },
    Goto(usize),
    Branch { cond: VReg, ifso: usize, ifnot: usize },
    CallPrim { dst: Option<VReg>, prim: PrimOp, next: usize },
    ReturnStatus(Value),
}

impl RtlInstr {
    fn targets(&self) -> impl Iterator<Item = usize> {
        let (a, b) = match *self {
            RtlInstr::Op { next, .. } | RtlInstr::Goto(next) | RtlInstr::CallPrim { next, .. } => (Some(next), None),
            RtlInstr::Branch { ifso, ifnot, .. } => (Some(ifso), Some(ifnot)),
            RtlInstr::ReturnStatus(_) => (None, None),
        };
        a.into_iter().chain(b)
    }

    fn regs(&self) -> Vec<VReg> {
        match self {
            RtlInstr::Op { dst, expr, .. } => std::iter::once(*dst).chain(expr.regs()).collect(),
            RtlInstr::Branch { cond, .. } => vec![*cond],
            RtlInstr::CallPrim { dst, prim, .. } => dst.iter().copied().chain(prim.regs()).collect(),
            RtlInstr::Goto(_) | RtlInstr::ReturnStatus(_) => vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RtlError {
    #[error("entry {0} is outside the code")]
    BadEntry(usize),
    #[error("instruction {at} jumps to {target}, outside the code")]
    BadTarget { at: usize, target: usize },
    #[error("instruction {at} uses {reg} but the unit has {nregs} registers")]
    BadReg { at: usize, reg: VReg, nregs: u32 },
}

/// A flat RTL unit: instructions indexed by label, entry label, and the
/// size of the virtual register file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RtlUnit {
    key: CodeKey,
    entry: usize,
    code: Vec<RtlInstr>,
    nregs: u32,
}

impl RtlUnit {
    pub fn new(key: CodeKey, entry: usize, code: Vec<RtlInstr>, nregs: u32) -> Result<Self, RtlError> {
        if entry >= code.len() {
            return Err(RtlError::BadEntry(entry));
        }
        for (at, i) in code.iter().enumerate() {
            if let Some(target) = i.targets().find(|&t| t >= code.len()) {
                return Err(RtlError::BadTarget { at, target });
            }
            if let Some(reg) = i.regs().into_iter().find(|r| r.0 >= nregs) {
                return Err(RtlError::BadReg { at, reg, nregs });
            }
        }
        Ok(RtlUnit { key, entry, code, nregs })
    }

    pub fn key(&self) -> CodeKey {
        self.key
    }

    pub fn entry(&self) -> usize {
        self.entry
    }

    pub fn code(&self) -> &[RtlInstr] {
        &self.code
    }

    pub fn nregs(&self) -> u32 {
        self.nregs
    }
}

impl fmt::Display for RtlUnit {
    /// One instruction per line; the successor is spelled out only when it
    /// is not the following line.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}() {{", self.key)?;
        if self.entry != 0 {
            writeln!(f, "  entry {}", self.entry)?;
        }
        for (i, instr) in self.code.iter().enumerate() {
            write!(f, "  {i:>3}: ")?;
            let fall = |f: &mut fmt::Formatter<'_>, next: usize| {
                if next == i + 1 {
                    Ok(())
                } else {
                    write!(f, " -> {next}")
                }
            };
            match *instr {
                RtlInstr::Op { dst, expr, next } => {
                    write!(f, "{dst} = {expr}")?;
                    fall(f, next)?;
                }
                RtlInstr::Goto(t) => write!(f, "goto {t}")?,
                RtlInstr::Branch { cond, ifso, ifnot } => write!(f, "if ({cond} != 0) goto {ifso} else goto {ifnot}")?,
                RtlInstr::CallPrim { dst, prim, next } => {
                    match dst {
                        Some(d) => write!(f, "{d} = {prim}")?,
                        None => write!(f, "{prim}")?,
                    }
                    fall(f, next)?;
                }
                RtlInstr::ReturnStatus(c) => fmt_status(f, c)?,
            }
            writeln!(f)?;
        }
        writeln!(f, "}}")
    }
}

/// Unfolds basic blocks into label-per-instruction RTL. Blocks are laid out
/// in id order; a `Goto` terminator is absorbed into the successor of the
/// block's last instruction, and only materializes for empty blocks.
pub fn flatten(b: &RtlBlockUnit) -> RtlUnit {
    let size = |blk: &Block| match blk.term {
        Terminator::Goto(_) if !blk.body.is_empty() => blk.body.len(),
        _ => blk.body.len() + 1,
    };
    let mut start = BTreeMap::new();
    let mut n = 0;
    for (id, blk) in &b.blocks {
        start.insert(*id, n);
        n += size(blk);
    }
    let mut code = Vec::with_capacity(n);
    for blk in b.blocks.values() {
        let base = code.len();
        let exit = match blk.term {
            Terminator::Goto(t) if !blk.body.is_empty() => start[&t],
            _ => base + blk.body.len(),
        };
        for (k, i) in blk.body.iter().enumerate() {
            let next = if k + 1 == blk.body.len() { exit } else { base + k + 1 };
            code.push(match *i {
                BlockInstr::Op { dst, expr } => RtlInstr::Op { dst, expr, next },
                BlockInstr::CallPrim { dst, prim } => RtlInstr::CallPrim { dst, prim, next },
            });
        }
        match blk.term {
            Terminator::Goto(_) if !blk.body.is_empty() => {}
            Terminator::Goto(t) => code.push(RtlInstr::Goto(start[&t])),
            Terminator::Branch { cond, ifso, ifnot } => {
                code.push(RtlInstr::Branch { cond, ifso: start[&ifso], ifnot: start[&ifnot] })
            }
            Terminator::ReturnStatus(c) => code.push(RtlInstr::ReturnStatus(c)),
        }
    }
    RtlUnit::new(b.key, start[&b.entry], code, b.nregs).expect("flattening a well-formed block unit")
}
