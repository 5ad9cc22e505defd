//! Lowering of a segment to RTL blocks under the stack calling convention.
//!
//! All communication with the monitor goes through `Push`/`Pop`:
//!
//! * entry: the caller pushed the arguments in declaration order; the
//!   prologue pops them in reverse.
//! * call: push the live registers (ascending), close the frame by pushing
//!   the function index and the call label, push the arguments, their count
//!   and the callee index, then return `RETCALL`.
//! * continuation: pop the call result, then the saved registers in reverse.
//! * return: push the value, return `RETRET`.
//! * failed `Assume`: push `(register id, value)` for every varmap entry,
//!   then the entry count, the target label and the target index, and
//!   return `RETDEOPT`.

use std::collections::{BTreeMap, BTreeSet};

use super::liveness::LiveSets;
use super::rtl::{Block, BlockId, BlockInstr, Operand, PrimOp, RtlBlockUnit, Terminator, VReg, RETCALL, RETDEOPT, RETRET};
use super::split::Segment;
use crate::coreir::{FunIdx, Instr, Label, Program, Reg, Value, Version};
use crate::primitives::{CodeKey, SegmentKey};

/// Deliberate miscompilations, for checking that the differential harness
/// notices them.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlantedBug {
    /// Restore saved registers in save order instead of reverse.
    RestoreInSaveOrder,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cancelled(pub String);

struct Lowering<'a> {
    program: &'a Program,
    version: &'a Version,
    live: &'a LiveSets,
    vregs: BTreeMap<Reg, VReg>,
    next_vreg: u32,
    bug: Option<PlantedBug>,
}

impl Lowering<'_> {
    fn v(&mut self, r: Reg) -> VReg {
        if let Some(&v) = self.vregs.get(&r) {
            return v;
        }
        let v = VReg(self.next_vreg);
        self.next_vreg += 1;
        self.vregs.insert(r, v);
        v
    }

    fn temp(&mut self) -> VReg {
        let v = VReg(self.next_vreg);
        self.next_vreg += 1;
        v
    }

    fn fun(&self, name: &str) -> Result<FunIdx, Cancelled> {
        self.program.idx_of(name).ok_or_else(|| Cancelled(format!("unknown function {name}")))
    }

    /// Registers saved across the call at `at`: live after it, minus its
    /// destination. Ascending order.
    fn saved_across(&self, at: Label) -> Vec<Reg> {
        match &self.version.code[&at] {
            Instr::Call { dst, next, .. } => {
                self.live.get(next).into_iter().flatten().copied().filter(|r| r != dst).collect()
            }
            _ => vec![],
        }
    }
}

fn push(o: Operand) -> BlockInstr {
    BlockInstr::CallPrim { dst: None, prim: PrimOp::Push(o) }
}

fn pop_into(dst: VReg) -> BlockInstr {
    BlockInstr::CallPrim { dst: Some(dst), prim: PrimOp::Pop }
}

/// Generates the block unit for one segment of `version`.
pub fn gen_segment(
    program: &Program,
    fun: FunIdx,
    version: &Version,
    params: &[Reg],
    seg: &Segment,
    live: &LiveSets,
    bug: Option<PlantedBug>,
) -> Result<RtlBlockUnit, Cancelled> {
    let mut cx = Lowering { program, version, live, vregs: BTreeMap::new(), next_vreg: 0, bug };
    // Number the CoreIR registers first, in ascending order, so names are
    // stable regardless of the order blocks are generated in.
    let mut mentioned: BTreeSet<Reg> = params.iter().copied().collect();
    for l in &seg.labels {
        let i = &version.code[l];
        mentioned.extend(i.uses());
        mentioned.extend(i.def());
        if let Instr::Call { .. } = i {
            mentioned.extend(cx.saved_across(*l));
        }
    }
    if let SegmentKey::Cont(at) = seg.key {
        mentioned.extend(cx.saved_across(at));
        if let Some(Instr::Call { dst, .. }) = version.code.get(&at) {
            mentioned.insert(*dst);
        }
    }
    for r in mentioned {
        cx.v(r);
    }

    let mut blocks = BTreeMap::new();

    let mut prologue = Vec::new();
    match seg.key {
        SegmentKey::Entry => {
            for &p in params.iter().rev() {
                prologue.push(pop_into(cx.v(p)));
            }
        }
        SegmentKey::Cont(at) => {
            let Some(Instr::Call { dst, .. }) = version.code.get(&at) else {
                return Err(Cancelled(format!("continuation label {at} is not a call")));
            };
            prologue.push(pop_into(cx.v(*dst)));
            let saved = cx.saved_across(at);
            let order: Vec<Reg> = match cx.bug {
                Some(PlantedBug::RestoreInSaveOrder) => saved,
                None => saved.into_iter().rev().collect(),
            };
            for r in order {
                prologue.push(pop_into(cx.v(r)));
            }
        }
    }
    blocks.insert(BlockId::Prologue, Block { body: prologue, term: Terminator::Goto(BlockId::At(seg.root)) });

    for &l in &seg.labels {
        let goto = |n: Label| Terminator::Goto(BlockId::At(n));
        let block = match &version.code[&l] {
            Instr::Nop { next } => Block { body: vec![], term: goto(*next) },
            Instr::Assign { dst, expr, next } => {
                let expr = expr.map_regs(|r| cx.v(r));
                Block { body: vec![BlockInstr::Op { dst: cx.v(*dst), expr }], term: goto(*next) }
            }
            Instr::Cond { reg, ifso, ifnot } => Block {
                body: vec![],
                term: Terminator::Branch { cond: cx.v(*reg), ifso: BlockId::At(*ifso), ifnot: BlockId::At(*ifnot) },
            },
            Instr::Print { reg, next } => Block {
                body: vec![BlockInstr::CallPrim { dst: None, prim: PrimOp::Print(cx.v(*reg)) }],
                term: goto(*next),
            },
            Instr::MemGet { dst, addr, next } => Block {
                body: vec![BlockInstr::CallPrim { dst: Some(cx.v(*dst)), prim: PrimOp::HeapGet(cx.v(*addr)) }],
                term: goto(*next),
            },
            Instr::MemSet { addr, src, next } => Block {
                body: vec![BlockInstr::CallPrim { dst: None, prim: PrimOp::HeapSet(cx.v(*addr), cx.v(*src)) }],
                term: goto(*next),
            },
            Instr::Return { reg } => Block {
                body: vec![push(Operand::Reg(cx.v(*reg)))],
                term: Terminator::ReturnStatus(RETRET),
            },
            Instr::Call { callee, args, .. } => {
                let callee = cx.fun(callee)?;
                let mut body: Vec<BlockInstr> =
                    cx.saved_across(l).into_iter().map(|r| push(Operand::Reg(cx.v(r)))).collect();
                body.push(push(Operand::Imm(fun.as_value())));
                body.push(push(Operand::Imm(Value::from(l.0))));
                body.extend(args.iter().map(|&a| push(Operand::Reg(cx.v(a)))));
                body.push(push(Operand::Imm(args.len() as Value)));
                body.push(push(Operand::Imm(callee.as_value())));
                Block { body, term: Terminator::ReturnStatus(RETCALL) }
            }
            Instr::Assume { guard, target, target_label, varmap, next } => {
                let target = cx.fun(target)?;
                let mut body = Vec::new();
                let mut temps = Vec::new();
                for (r, e) in varmap {
                    let t = cx.temp();
                    body.push(BlockInstr::Op { dst: t, expr: e.map_regs(|x| cx.v(x)) });
                    temps.push((*r, t));
                }
                for (r, t) in temps {
                    body.push(push(Operand::Imm(Value::from(r.0))));
                    body.push(push(Operand::Reg(t)));
                }
                body.push(push(Operand::Imm(varmap.len() as Value)));
                body.push(push(Operand::Imm(Value::from(target_label.0))));
                body.push(push(Operand::Imm(target.as_value())));
                blocks.insert(BlockId::Deopt(l), Block { body, term: Terminator::ReturnStatus(RETDEOPT) });
                Block {
                    body: vec![],
                    term: Terminator::Branch { cond: cx.v(*guard), ifso: BlockId::At(*next), ifnot: BlockId::Deopt(l) },
                }
            }
        };
        blocks.insert(BlockId::At(l), block);
    }

    Ok(RtlBlockUnit { key: CodeKey { fun, segment: seg.key }, entry: BlockId::Prologue, blocks, nregs: cx.next_vreg })
}

